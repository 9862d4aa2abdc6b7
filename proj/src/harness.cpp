#include "hmmix/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "hmmix/errors.hpp"
#include "hmmix/json_io.hpp"
#include "hmmix/oracle.hpp"
#include "hmmix/sample_io.hpp"

namespace hmmix {
namespace fs = std::filesystem;

TableLayout parse_layout(const std::string& text) {
  if (text == "hmm") return TableLayout::Hmm;
  if (text == "msar") return TableLayout::Msar;
  throw ConfigError("unknown table layout '" + text + "' (expected hmm or msar)");
}

std::string layout_name(TableLayout layout) { return layout == TableLayout::Hmm ? "hmm" : "msar"; }

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> v;
  for (auto& s : dgp.violations()) v.push_back("dgp: " + s);
  for (auto& s : spec.violations()) v.push_back("model: " + s);
  for (auto& s : estimator.violations()) v.push_back("estimator: " + s);
  for (auto& s : hac.violations()) v.push_back("hac: " + s);
  if (T < 50) v.push_back("T must be at least 50");
  if (n_reps < 1) v.push_back("n_reps must be at least 1");
  if (truth_n_sim < 10000) v.push_back("truth_n_sim must be at least 10000");
  if (spec.d != dgp.regimes()) v.push_back("model d differs from the number of DGP regimes");
  if (spec.form == OutcomeForm::Msar && !dgp.ar_coefficient) v.push_back("msar form needs dgp.ar_coefficient");
  return v;
}

void ExperimentConfig::validate() const { require_valid(violations()); }

MixtureParams ExperimentConfig::truth(const std::vector<double>& weights) const {
  MixtureParams theta;
  theta.components = dgp.outcomes;
  if (spec.form == OutcomeForm::Msar)
    for (auto& c : theta.components) c.gamma = dgp.ar_coefficient.value_or(0.0);
  theta.weights = weights;
  return theta;
}

Seed replication_seed(Seed master, std::size_t rep_index) { return derive_seed(master, "replication", rep_index); }

namespace {

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

bool same_vector(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_double(a[i], b[i])) return false;
  return true;
}

}  // namespace

bool ReplicationRecord::same_result(const ReplicationRecord& o) const {
  return rep_index == o.rep_index && seed == o.seed && ok == o.ok && converged == o.converged &&
         degenerate == o.degenerate && same_double(loglik, o.loglik) && same_double(max_abs_score, o.max_abs_score) &&
         em_iterations == o.em_iterations && qn_iterations == o.qn_iterations && same_double(bandwidth, o.bandwidth) &&
         psd_floored == o.psd_floored && permutation == o.permutation &&
         same_double(distance_before, o.distance_before) && same_double(distance_after, o.distance_after) &&
         same_vector(estimate, o.estimate) && same_vector(std_errors, o.std_errors) && error == o.error;
}

ReplicationRecord run_replication(const ExperimentConfig& cfg, std::size_t rep_index) {
  if (rep_index >= cfg.n_reps)
    throw DomainError("rep_index " + std::to_string(rep_index) + " outside [0, " + std::to_string(cfg.n_reps) + ")");
  const auto start = std::chrono::steady_clock::now();
  const std::size_t q = natural_parameter_names(cfg.spec).size();

  ReplicationRecord rec;
  rec.rep_index = rep_index;
  rec.seed = replication_seed(cfg.master_seed, rep_index);
  rec.estimate.assign(q, NAN);
  rec.std_errors.assign(q, NAN);
  rec.loglik = rec.max_abs_score = rec.bandwidth = rec.distance_before = rec.distance_after = NAN;

  try {
    const Sample sample = cfg.spec.form == OutcomeForm::Msar
                              ? simulate_msar(cfg.dgp, cfg.T, cfg.burn_in, rec.seed)
                              : simulate_hmm(cfg.dgp, cfg.T, cfg.burn_in, rec.seed);
    EstimatorConfig est = cfg.estimator;
    est.seed = derive_seed(cfg.master_seed, "estimator-starts", rep_index);
    EstimationResult fit = qml_estimate(sample, cfg.spec, est);
    rec.converged = fit.converged;
    rec.degenerate = fit.degenerate;
    rec.loglik = fit.loglik;
    rec.max_abs_score = fit.max_abs_score;
    rec.em_iterations = fit.em_iterations;
    rec.qn_iterations = fit.qn_iterations;

    const std::vector<double> uniform(cfg.spec.d, 1.0 / static_cast<double>(cfg.spec.d));
    const Alignment al = align(fit.theta_hat, cfg.truth(uniform));
    rec.permutation = al.permutation;
    rec.distance_before = al.distance_before;
    rec.distance_after = al.distance_after;
    const Eigen::VectorXd est_nat = natural_parameters(al.aligned, cfg.spec);
    for (std::size_t i = 0; i < q; ++i) rec.estimate[i] = est_nat[static_cast<Eigen::Index>(i)];

    // Standard errors at the aligned point.
    const Eigen::VectorXd free = encode(al.aligned, cfg.spec);
    const MixtureObjective objective(regression_data(sample, cfg.spec), cfg.spec);
    const SandwichResult sw = sandwich_cov(free, objective, cfg.hac);
    rec.bandwidth = sw.hac.bandwidth;
    rec.psd_floored = sw.hac.psd_floored;
    for (std::size_t i = 0; i < q; ++i) rec.std_errors[i] = sw.std_errors[static_cast<Eigen::Index>(i)];
    rec.ok = true;
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

const ParameterSummary& McSummary::parameter(const std::string& pname) const {
  for (const auto& p : parameters)
    if (p.name == pname) return p;
  throw DomainError("summary has no parameter '" + pname + "'");
}

McSummary summarize(const std::vector<ReplicationRecord>& records, const std::vector<std::string>& names,
                    const std::vector<double>& truth) {
  if (names.size() != truth.size()) throw DomainError("names and truth differ in length");
  std::vector<const ReplicationRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->rep_index < b->rep_index; });

  McSummary out;
  out.n_reps = records.size();
  std::vector<const ReplicationRecord*> used;
  for (auto* r : sorted) {
    if (r->converged) ++out.n_converged;
    if (r->degenerate) ++out.n_degenerate;
    if (!r->ok) ++out.n_failed;
    if (r->used()) used.push_back(r);
  }
  out.n_used = used.size();
  const double n = static_cast<double>(used.size());
  for (std::size_t j = 0; j < names.size(); ++j) {
    ParameterSummary p;
    p.name = names[j];
    p.truth = truth[j];
    if (used.empty()) {
      p.bias = p.sd = p.mean_se = p.ratio = p.bias_mc_error = NAN;
      out.parameters.push_back(p);
      continue;
    }
    double mean = 0.0, se = 0.0;
    for (auto* r : used) {
      mean += r->estimate.at(j);
      se += r->std_errors.at(j);
    }
    mean /= n;
    se /= n;
    double ss = 0.0;
    for (auto* r : used) {
      const double e = r->estimate[j] - mean;
      ss += e * e;
    }
    p.bias = mean - truth[j];
    p.sd = used.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    p.mean_se = se;
    p.ratio = p.sd / se;
    p.bias_mc_error = p.sd / std::sqrt(n);
    out.parameters.push_back(p);
  }
  return out;
}

namespace {

void check_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const fs::path probe = dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "probe") || !out.flush()) throw IoError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

std::string join_permutation(const std::vector<std::size_t>& perm) {
  std::string s;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(perm[i] + 1);
  }
  return s;
}

std::string clean_text(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  return s;
}

const std::vector<std::string> kFixedColumns = {
    "rep_index", "seed",          "ok",            "converged",   "degenerate",     "loglik",
    "max_abs_score", "em_iterations", "qn_iterations", "bandwidth", "psd_floored",  "permutation",
    "distance_before", "distance_after"};

double parse_double_field(const std::string& s, std::size_t line) {
  double v = 0.0;
  if (s == "nan") return NAN;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "'", line);
  return v;
}

std::uint64_t parse_uint_field(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("bad integer '" + s + "'", line);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_replications_csv(const fs::path& path, const std::vector<ReplicationRecord>& records,
                            const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& c : kFixedColumns) out << c << ',';
  for (const auto& n : names) out << "est_" << n << ',';
  for (const auto& n : names) out << "se_" << n << ',';
  out << "seconds,error\n";
  for (const auto& r : records) {
    out << r.rep_index << ',' << r.seed << ',' << int(r.ok) << ',' << int(r.converged) << ',' << int(r.degenerate)
        << ',' << format_double(r.loglik) << ',' << format_double(r.max_abs_score) << ',' << r.em_iterations << ','
        << r.qn_iterations << ',' << format_double(r.bandwidth) << ',' << int(r.psd_floored) << ','
        << join_permutation(r.permutation) << ',' << format_double(r.distance_before) << ','
        << format_double(r.distance_after) << ',';
    for (double v : r.estimate) out << format_double(v) << ',';
    for (double v : r.std_errors) out << format_double(v) << ',';
    out << format_double(r.seconds) << ',' << clean_text(r.error) << '\n';
  }
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

std::vector<ReplicationRecord> read_replications_csv(const fs::path& path, std::vector<std::string>* names_out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty replications file", 1);
  const auto header = split_csv(line);
  const std::size_t nfixed = kFixedColumns.size();
  if (header.size() < nfixed + 2 || (header.size() - nfixed - 2) % 2 != 0)
    throw ParseError("unexpected replications header", 1);
  for (std::size_t i = 0; i < nfixed; ++i)
    if (header[i] != kFixedColumns[i]) throw ParseError("unexpected column '" + header[i] + "'", 1);
  const std::size_t q = (header.size() - nfixed - 2) / 2;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < q; ++j) {
    const std::string& h = header[nfixed + j];
    if (h.rfind("est_", 0) != 0 || header[nfixed + q + j] != "se_" + h.substr(4))
      throw ParseError("unexpected parameter columns", 1);
    names.push_back(h.substr(4));
  }
  if (names_out) *names_out = names;

  std::vector<ReplicationRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw ParseError("row has " + std::to_string(f.size()) + " fields", lineno);
    ReplicationRecord r;
    r.rep_index = parse_uint_field(f[0], lineno);
    r.seed = parse_uint_field(f[1], lineno);
    r.ok = f[2] == "1";
    r.converged = f[3] == "1";
    r.degenerate = f[4] == "1";
    r.loglik = parse_double_field(f[5], lineno);
    r.max_abs_score = parse_double_field(f[6], lineno);
    r.em_iterations = parse_uint_field(f[7], lineno);
    r.qn_iterations = parse_uint_field(f[8], lineno);
    r.bandwidth = parse_double_field(f[9], lineno);
    r.psd_floored = f[10] == "1";
    std::istringstream perm(f[11]);
    for (std::size_t k; perm >> k;) r.permutation.push_back(k - 1);
    r.distance_before = parse_double_field(f[12], lineno);
    r.distance_after = parse_double_field(f[13], lineno);
    for (std::size_t j = 0; j < q; ++j) r.estimate.push_back(parse_double_field(f[nfixed + j], lineno));
    for (std::size_t j = 0; j < q; ++j) r.std_errors.push_back(parse_double_field(f[nfixed + q + j], lineno));
    r.seconds = parse_double_field(f[nfixed + 2 * q], lineno);
    r.error = f[nfixed + 2 * q + 1];
    records.push_back(std::move(r));
  }
  return records;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  if (opts.write_files) {
    if (cfg.out_dir.empty()) throw ConfigError("out_dir is required");
    check_writable(cfg.out_dir);
  }

  ExperimentResult result;
  result.names = natural_parameter_names(cfg.spec);
  const PseudoTrueResult pt =
      pseudo_true_weights(cfg.dgp, cfg.truth_n_sim, kDefaultBurnIn, derive_seed(cfg.master_seed, "pseudo-true"));
  const Eigen::VectorXd truth = natural_parameters(cfg.truth(pt.weights_star), cfg.spec);
  result.truth.assign(truth.data(), truth.data() + truth.size());

  result.records.resize(cfg.n_reps);
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;
  const auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfg.n_reps;) {
      result.records[i] = run_replication(cfg, i);
      const std::size_t d = done.fetch_add(1) + 1;
      if (opts.progress) {
        std::lock_guard lock(progress_mutex);
        opts.progress(d, cfg.n_reps);
      }
    }
  };
  const std::size_t nthreads = std::clamp<std::size_t>(opts.threads, 1, cfg.n_reps);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  result.summary = summarize(result.records, result.names, result.truth);
  result.summary.name = cfg.name;
  result.summary.design = cfg.design;
  result.summary.layout = cfg.spec.form == OutcomeForm::Msar ? TableLayout::Msar : TableLayout::Hmm;
  result.summary.T = cfg.T;

  if (opts.write_files) {
    write_replications_csv(cfg.out_dir / "replications.csv", result.records, result.names);
    nlohmann::json j = to_json(result.summary);
    j["pseudo_true"] = to_json(pt);
    write_json_file(cfg.out_dir / "summary.json", j);
  }
  return result;
}

std::vector<std::string> table_parameters(TableLayout layout) {
  if (layout == TableLayout::Hmm) return {"mu(1)", "mu(2)", "gamma(1)", "gamma(2)", "sigma(1)", "sigma(2)"};
  return {"mu(1)", "mu(2)", "sigma(1)", "sigma(2)", "phi"};
}

namespace {

std::string fixed3(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  std::string s = os.str();
  if (s == "-0.000") s = "0.000";
  return s;
}

std::string pad_left(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

std::string center(const std::string& s, std::size_t w) {
  if (s.size() >= w) return s;
  const std::size_t left = (w - s.size()) / 2;
  return std::string(left, ' ') + s + std::string(w - s.size() - left, ' ');
}

}  // namespace

std::string render_table(const std::vector<McSummary>& summaries, TableLayout layout) {
  if (summaries.empty()) throw DomainError("render_table needs at least one summary");
  std::vector<std::string> names;
  for (const auto& p : summaries.front().parameters) names.push_back(p.name);
  for (const auto& s : summaries) {
    std::vector<std::string> other;
    for (const auto& p : s.parameters) other.push_back(p.name);
    if (other != names) throw DomainError("summaries have mismatched parameter sets");
  }
  const auto cols = table_parameters(layout);
  for (const auto& c : cols)
    if (std::find(names.begin(), names.end(), c) == names.end())
      throw DomainError("summaries lack parameter '" + c + "' required by the " + layout_name(layout) + " layout");

  std::vector<std::string> designs;
  std::vector<std::size_t> Ts;
  std::map<std::pair<std::string, std::size_t>, const McSummary*> cell;
  for (const auto& s : summaries) {
    if (std::find(designs.begin(), designs.end(), s.design) == designs.end()) designs.push_back(s.design);
    if (std::find(Ts.begin(), Ts.end(), s.T) == Ts.end()) Ts.push_back(s.T);
    if (!cell.emplace(std::pair{s.design, s.T}, &s).second)
      throw DomainError("duplicate summary for design '" + s.design + "' at T=" + std::to_string(s.T));
  }
  std::sort(Ts.begin(), Ts.end());

  constexpr std::size_t kT = 6, kCol = 10, kGap = 4, kPerBlock = 2;
  const std::size_t panel_w = kCol * cols.size();
  std::ostringstream out;
  const auto rule = [&](std::size_t panels) {
    out << std::string(kT + panels * panel_w + (panels - 1) * kGap, '-') << '\n';
  };

  for (std::size_t b = 0; b < designs.size(); b += kPerBlock) {
    const std::size_t panels = std::min(kPerBlock, designs.size() - b);
    rule(panels);
    out << std::string(kT, ' ');
    for (std::size_t p = 0; p < panels; ++p) {
      if (p) out << std::string(kGap, ' ');
      out << center(designs[b + p], panel_w);
    }
    out << '\n';
    out << pad_left("T", kT);
    for (std::size_t p = 0; p < panels; ++p) {
      if (p) out << std::string(kGap, ' ');
      for (const auto& c : cols) out << pad_left(c, kCol);
    }
    out << '\n';
    for (const auto& [label, is_bias] : {std::pair{"Bias", true}, std::pair{"Standard Deviation / Standard Error", false}}) {
      out << label << '\n';
      for (std::size_t T : Ts) {
        out << pad_left(std::to_string(T), kT);
        for (std::size_t p = 0; p < panels; ++p) {
          if (p) out << std::string(kGap, ' ');
          const auto it = cell.find({designs[b + p], T});
          for (const auto& c : cols) {
            std::string v = "-";
            if (it != cell.end()) {
              const auto& ps = it->second->parameter(c);
              v = fixed3(is_bias ? ps.bias : ps.ratio);
            }
            out << pad_left(v, kCol);
          }
        }
        out << '\n';
      }
    }
  }
  rule(std::min(kPerBlock, designs.size()));
  return out.str();
}

}  // namespace hmmix
