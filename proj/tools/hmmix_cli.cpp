// hmmix: simulate, fit, run Monte Carlo experiments and check identification.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "hmmix/dgp.hpp"
#include "hmmix/errors.hpp"
#include "hmmix/estimator.hpp"
#include "hmmix/harness.hpp"
#include "hmmix/inference.hpp"
#include "hmmix/json_io.hpp"
#include "hmmix/oracle.hpp"
#include "hmmix/sample_io.hpp"

namespace fs = std::filesystem;
using namespace hmmix;

namespace {

// A DGP file, or an experiment file carrying one under "dgp".
HmmDgpParams load_dgp(const fs::path& path) {
  const Json j = read_json_file(path);
  return j.contains("dgp") ? dgp_from_json(j["dgp"]) : dgp_from_json(j);
}

void emit(const Json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json_file(out, j);
  }
}

int fail(const std::string& kind, const std::string& what, const Json& extra = Json::object()) {
  Json j = {{"error", what}, {"kind", kind}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::cerr << j.dump() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture quasi-maximum likelihood under hidden Markov regimes"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a sample to CSV");
  std::string sim_config, sim_out;
  std::size_t sim_T = 0, sim_burn = kDefaultBurnIn;
  Seed sim_seed = 1;
  bool sim_msar = false;
  sim->add_option("--config", sim_config, "DGP or experiment JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("--T", sim_T, "sample size")->required();
  sim->add_option("--burn-in", sim_burn, "discarded initial steps");
  sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--out", sim_out, "output CSV")->required();
  sim->add_flag("--msar", sim_msar, "autoregressive outcome equation");

  // fit
  auto* fit = app.add_subcommand("fit", "fit the mixture regression to a CSV sample");
  std::string fit_data, fit_config, fit_out, fit_form = "hmm", fit_bw = "auto";
  std::size_t fit_d = 2;
  bool fit_no_se = false;
  fit->add_option("--data", fit_data, "sample CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--d", fit_d, "number of components");
  fit->add_option("--form", fit_form, "hmm or msar")->check(CLI::IsMember({"hmm", "msar"}));
  fit->add_option("--config", fit_config, "JSON with optional estimator and hac blocks")->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "output JSON (default stdout)");
  fit->add_option("--bandwidth", fit_bw, "auto or a non-negative number");
  fit->add_flag("--no-se", fit_no_se, "skip standard errors");

  // mc
  auto* mc = app.add_subcommand("mc", "run a Monte Carlo experiment");
  std::string mc_config, mc_out_dir;
  std::optional<std::size_t> mc_reps, mc_T;
  std::size_t mc_threads = 1;
  bool mc_quiet = false;
  mc->add_option("--config", mc_config, "experiment JSON")->required()->check(CLI::ExistingFile);
  mc->add_option("--n-reps", mc_reps, "override replication count");
  mc->add_option("--T", mc_T, "override sample size");
  mc->add_option("--out-dir", mc_out_dir, "override output directory");
  mc->add_option("--threads", mc_threads, "worker threads")->check(CLI::PositiveNumber);
  mc->add_flag("--quiet", mc_quiet, "no progress on stderr");

  // oracle
  auto* orc = app.add_subcommand("oracle", "pseudo-true mixing weights by ergodic simulation");
  std::string orc_config;
  std::size_t orc_n = 1000000, orc_burn = kDefaultBurnIn;
  Seed orc_seed = 1;
  bool orc_kl = false;
  orc->add_option("--config", orc_config, "DGP or experiment JSON")->required()->check(CLI::ExistingFile);
  orc->add_option("--n-sim", orc_n, "simulation horizon");
  orc->add_option("--burn-in", orc_burn, "discarded initial steps");
  orc->add_option("--seed", orc_seed, "seed");
  orc->add_flag("--kl", orc_kl, "also run the KL dominance check on the perturbation grid");

  // check-id
  auto* cid = app.add_subcommand("check-id", "characteristic-function ratio check");
  std::string cid_family = "gaussian";
  double cid_a1 = 0.0, cid_a2 = 0.0, cid_tau_max = 20.0, cid_tau_step = 0.5;
  cid->add_option("--family", cid_family, "gaussian or student-t:<nu>");
  cid->add_option("--a1", cid_a1, "larger scale")->required();
  cid->add_option("--a2", cid_a2, "smaller scale")->required();
  cid->add_option("--tau-max", cid_tau_max, "end of the tau grid");
  cid->add_option("--tau-step", cid_tau_step, "tau grid spacing")->check(CLI::PositiveNumber);

  // render
  auto* ren = app.add_subcommand("render", "render summaries as a table");
  std::vector<std::string> ren_inputs;
  std::string ren_layout = "hmm", ren_out;
  ren->add_option("summaries", ren_inputs, "summary.json files or run directories")->required();
  ren->add_option("--layout", ren_layout, "hmm or msar")->check(CLI::IsMember({"hmm", "msar"}));
  ren->add_option("--out", ren_out, "output text file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (*sim) {
      const HmmDgpParams dgp = load_dgp(sim_config);
      const Sample s = sim_msar ? simulate_msar(dgp, sim_T, sim_burn, sim_seed)
                                : simulate_hmm(dgp, sim_T, sim_burn, sim_seed);
      save_sample(s, sim_out);
      Json info = {{"out", sim_out}, {"T", s.size()}, {"meta", s.meta}};
      std::cout << info.dump() << '\n';
    } else if (*fit) {
      const Sample sample = load_sample(fit_data);
      const ModelSpec spec = fit_form == "msar" ? ModelSpec::msar(fit_d) : ModelSpec::hmm(fit_d);
      EstimatorConfig est;
      HacConfig hac;
      if (!fit_config.empty()) {
        const Json j = read_json_file(fit_config);
        if (j.contains("estimator")) est = estimator_from_json(j["estimator"]);
        if (j.contains("hac")) hac = hac_from_json(j["hac"]);
      }
      if (fit->count("--bandwidth")) hac.bandwidth = Bandwidth::parse(fit_bw);
      EstimationResult r = qml_estimate(sample, spec, est);
      std::optional<SandwichResult> sw;
      if (!fit_no_se) sw = attach_sandwich(r, sample, spec, hac);
      emit(fit_to_json(r, spec, sw ? &*sw : nullptr), fit_out);
    } else if (*mc) {
      ExperimentConfig cfg = experiment_from_json(read_json_file(mc_config));
      if (mc_reps) cfg.n_reps = *mc_reps;
      if (mc_T) cfg.T = *mc_T;
      if (!mc_out_dir.empty()) cfg.out_dir = mc_out_dir;
      RunOptions opts;
      opts.threads = mc_threads;
      if (!mc_quiet)
        opts.progress = [](std::size_t done, std::size_t total) {
          if (done == total || done % 10 == 0) std::fprintf(stderr, "\r%zu/%zu replications", done, total);
          if (done == total) std::fputc('\n', stderr);
        };
      const ExperimentResult res = run_experiment(cfg, opts);
      std::cout << to_json(res.summary).dump(2) << '\n';
    } else if (*orc) {
      const HmmDgpParams dgp = load_dgp(orc_config);
      const PseudoTrueResult pt = pseudo_true_weights(dgp, orc_n, orc_burn, orc_seed);
      Json j = to_json(pt);
      if (orc_kl) {
        const MixtureParams star = pt.theta_star();
        j["kl"] = to_json(kl_check(dgp, star, kl_perturbation_grid(star), orc_n, derive_seed(orc_seed, "kl")));
      }
      std::cout << j.dump(2) << '\n';
    } else if (*cid) {
      std::vector<double> grid;
      for (double tau = cid_tau_step; tau <= cid_tau_max + 1e-12; tau += cid_tau_step) grid.push_back(tau);
      const CfCheckReport rep = cf_ratio_check(DensityFamily::parse(cid_family), cid_a1, cid_a2, grid);
      std::cout << to_json(rep).dump(2) << '\n';
    } else if (*ren) {
      std::vector<McSummary> summaries;
      for (const auto& in : ren_inputs) {
        fs::path p = in;
        if (fs::is_directory(p)) p /= "summary.json";
        summaries.push_back(summary_from_json(read_json_file(p)));
      }
      const std::string table = render_table(summaries, parse_layout(ren_layout));
      if (ren_out.empty()) {
        std::cout << table;
      } else {
        std::ofstream out(ren_out);
        if (!(out << table)) throw IoError("cannot write " + ren_out);
      }
    }
  } catch (const ValidationError& e) {
    return fail(e.kind(), e.what(), {{"violations", e.violations()}});
  } catch (const ParseError& e) {
    return fail(e.kind(), e.what(), {{"line", e.line()}});
  } catch (const EstimationError& e) {
    return fail(e.kind(), e.what());
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
