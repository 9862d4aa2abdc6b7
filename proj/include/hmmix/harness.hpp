#pragma once

// Seeded Monte Carlo experiments: replicate, fit, align, aggregate and render.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hmmix/dgp.hpp"
#include "hmmix/estimator.hpp"
#include "hmmix/inference.hpp"
#include "hmmix/mixture.hpp"

namespace hmmix {

enum class TableLayout { Hmm, Msar };

TableLayout parse_layout(const std::string& text);
std::string layout_name(TableLayout layout);

struct ExperimentConfig {
  std::string name;
  std::string design;  // panel label in rendered tables
  HmmDgpParams dgp;
  ModelSpec spec;
  EstimatorConfig estimator;
  HacConfig hac;
  std::size_t T = 800;
  std::size_t burn_in = kDefaultBurnIn;
  std::size_t n_reps = 200;
  Seed master_seed = 1;
  std::size_t truth_n_sim = 1000000;  // horizon of the pseudo-true weight simulation
  std::filesystem::path out_dir;

  std::vector<std::string> violations() const;
  void validate() const;

  /// Natural-scale truth for the outcome parameters, with weights taken from
  /// `weights` (normally pseudo_true_weights).
  MixtureParams truth(const std::vector<double>& weights) const;
};

struct ReplicationRecord {
  std::size_t rep_index = 0;
  Seed seed = 0;
  bool ok = false;  // estimation and standard errors both succeeded
  bool converged = false;
  bool degenerate = false;
  double loglik = 0.0;
  double max_abs_score = 0.0;
  std::size_t em_iterations = 0;
  std::size_t qn_iterations = 0;
  double bandwidth = 0.0;
  bool psd_floored = false;
  std::vector<std::size_t> permutation;  // aligned[k] = estimate[permutation[k]]
  double distance_before = 0.0;
  double distance_after = 0.0;
  std::vector<double> estimate;    // aligned, natural order
  std::vector<double> std_errors;  // aligned, natural order
  std::string error;
  double seconds = 0.0;  // wall time, excluded from comparisons

  bool used() const { return ok && converged && !degenerate; }
  /// Equality of every field except the wall time.
  bool same_result(const ReplicationRecord& other) const;
};

/// Simulates with a seed derived from (master_seed, rep_index), fits, aligns
/// to the DGP outcome parameters and attaches sandwich standard errors.
/// Estimation failures are recorded, never thrown.
ReplicationRecord run_replication(const ExperimentConfig& cfg, std::size_t rep_index);

Seed replication_seed(Seed master, std::size_t rep_index);

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double bias = 0.0;
  double sd = 0.0;       // n - 1 denominator
  double mean_se = 0.0;
  double ratio = 0.0;    // sd / mean_se
  double bias_mc_error = 0.0;  // sd / sqrt(n)
};

struct McSummary {
  std::string name;
  std::string design;
  TableLayout layout = TableLayout::Hmm;
  std::size_t T = 0;
  std::size_t n_reps = 0;
  std::size_t n_used = 0;
  std::size_t n_converged = 0;
  std::size_t n_degenerate = 0;
  std::size_t n_failed = 0;
  std::vector<ParameterSummary> parameters;

  const ParameterSummary& parameter(const std::string& name) const;
};

/// Aggregates records in rep_index order; statistics use only records with used().
McSummary summarize(const std::vector<ReplicationRecord>& records, const std::vector<std::string>& names,
                    const std::vector<double>& truth);

struct RunOptions {
  std::size_t threads = 1;
  bool write_files = true;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct ExperimentResult {
  McSummary summary;
  std::vector<ReplicationRecord> records;
  std::vector<double> truth;
  std::vector<std::string> names;
};

/// Runs every replication on a worker pool and, with write_files, writes
/// out_dir/replications.csv and out_dir/summary.json. The output directory is
/// checked for writability before any computation.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

void write_replications_csv(const std::filesystem::path& path, const std::vector<ReplicationRecord>& records,
                            const std::vector<std::string>& names);
std::vector<ReplicationRecord> read_replications_csv(const std::filesystem::path& path,
                                                     std::vector<std::string>* names = nullptr);

/// Parameters shown in rendered tables, in column order.
std::vector<std::string> table_parameters(TableLayout layout);

/// Bias rows then SD/SE rows, T values as rows, designs as column panels (two
/// per block), values to three decimals.
std::string render_table(const std::vector<McSummary>& summaries, TableLayout layout);

}  // namespace hmmix
