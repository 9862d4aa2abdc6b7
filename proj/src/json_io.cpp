#include "hmmix/json_io.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "hmmix/errors.hpp"

namespace hmmix {
namespace fs = std::filesystem;

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_required(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
  return get_or<T>(j, key, T{}, where);
}

double number_or_nan(const Json& j) { return j.is_null() ? NAN : j.get<double>(); }

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + " must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) throw ConfigError(where + " is ragged");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json ar_to_json(const ArLaw& a) { return {{"intercept", a.intercept}, {"slope", a.slope}, {"noise_sd", a.noise_sd}}; }

ArLaw ar_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"intercept", "slope", "noise_sd"}, where);
  ArLaw a;
  a.intercept = get_or(j, "intercept", 0.0, where);
  a.slope = get_or(j, "slope", 0.0, where);
  a.noise_sd = get_or(j, "noise_sd", 1.0, where);
  return a;
}

Json outcome_to_json(const RegimeOutcome& o) { return {{"mu", o.mu}, {"gamma", o.gamma}, {"sigma", o.sigma}}; }

RegimeOutcome outcome_from_json(const Json& j, const std::string& where) {
  check_keys(j, {"mu", "gamma", "sigma"}, where);
  return {get_required<double>(j, "mu", where), get_or(j, "gamma", 0.0, where), get_required<double>(j, "sigma", where)};
}

bool is_two_state_form(const TransitionSpec& t) {
  if (t.regimes() != 2) return false;
  return t.alpha()(0, 1) == 0.0 && t.alpha()(1, 0) == 0.0 && t.beta()(0, 1) == 0.0 && t.beta()(1, 0) == 0.0;
}

}  // namespace

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out.flush()) throw IoError("failed writing " + path.string());
}

Json to_json(const HmmDgpParams& p) {
  Json j;
  j["regimes"] = Json::array();
  for (const auto& o : p.outcomes) j["regimes"].push_back(outcome_to_json(o));
  const auto& t = p.transition;
  if (is_two_state_form(t)) {
    j["transition"] = {{"stay_alpha", {t.alpha()(0, 0), t.alpha()(1, 1)}},
                       {"stay_beta", {t.beta()(0, 0), t.beta()(1, 1)}}};
  } else {
    j["transition"] = {{"alpha", matrix_to_json(t.alpha())}, {"beta", matrix_to_json(t.beta())}};
  }
  j["z_law"] = ar_to_json(p.z_law);
  j["w_law"] = ar_to_json(p.w_law);
  j["noise"] = {{"rho", p.noise.rho}, {"omega", p.noise.omega}};
  if (p.ar_coefficient) j["ar_coefficient"] = *p.ar_coefficient;
  return j;
}

HmmDgpParams dgp_from_json(const Json& j) {
  const std::string w = "dgp";
  check_keys(j, {"regimes", "transition", "z_law", "w_law", "noise", "ar_coefficient"}, w);
  HmmDgpParams p;
  if (!j.contains("regimes") || !j["regimes"].is_array()) throw ConfigError("dgp.regimes must be an array");
  for (std::size_t i = 0; i < j["regimes"].size(); ++i)
    p.outcomes.push_back(outcome_from_json(j["regimes"][i], w + ".regimes[" + std::to_string(i) + "]"));

  if (!j.contains("transition")) throw ConfigError("missing key 'transition' in dgp");
  const Json& t = j["transition"];
  if (t.contains("stay_alpha")) {
    check_keys(t, {"stay_alpha", "stay_beta"}, w + ".transition");
    const auto a = get_required<std::vector<double>>(t, "stay_alpha", w + ".transition");
    const auto b = get_required<std::vector<double>>(t, "stay_beta", w + ".transition");
    if (a.size() != 2 || b.size() != 2) throw ConfigError("stay_alpha and stay_beta need two entries");
    p.transition = TransitionSpec::two_state(a[0], b[0], a[1], b[1]);
  } else {
    check_keys(t, {"alpha", "beta"}, w + ".transition");
    if (!t.contains("alpha") || !t.contains("beta")) throw ConfigError("dgp.transition needs alpha and beta");
    p.transition = TransitionSpec(matrix_from_json(t["alpha"], "transition.alpha"),
                                  matrix_from_json(t["beta"], "transition.beta"));
  }
  if (j.contains("z_law")) p.z_law = ar_from_json(j["z_law"], w + ".z_law");
  if (j.contains("w_law")) p.w_law = ar_from_json(j["w_law"], w + ".w_law");
  if (j.contains("noise")) {
    check_keys(j["noise"], {"rho", "omega"}, w + ".noise");
    p.noise.rho = get_or(j["noise"], "rho", 0.0, w + ".noise");
    p.noise.omega = get_or(j["noise"], "omega", 0.0, w + ".noise");
  }
  if (j.contains("ar_coefficient")) p.ar_coefficient = j["ar_coefficient"].get<double>();
  p.validate();
  return p;
}

Json to_json(const ModelSpec& s) {
  return {{"d", s.d},
          {"form", s.form == OutcomeForm::Msar ? "msar" : "hmm"},
          {"switching", {{"mu", s.switching.mu}, {"slope", s.switching.slope}, {"sigma", s.switching.sigma}}}};
}

ModelSpec model_from_json(const Json& j) {
  check_keys(j, {"d", "form", "switching"}, "model");
  const auto d = get_or<std::size_t>(j, "d", 2, "model");
  const auto form = get_or<std::string>(j, "form", "hmm", "model");
  ModelSpec s;
  if (form == "hmm") s = ModelSpec::hmm(d);
  else if (form == "msar") s = ModelSpec::msar(d);
  else throw ConfigError("model.form must be hmm or msar");
  if (j.contains("switching")) {
    const Json& sw = j["switching"];
    check_keys(sw, {"mu", "slope", "sigma"}, "model.switching");
    s.switching.mu = get_or(sw, "mu", s.switching.mu, "model.switching");
    s.switching.slope = get_or(sw, "slope", s.switching.slope, "model.switching");
    s.switching.sigma = get_or(sw, "sigma", s.switching.sigma, "model.switching");
  }
  s.validate();
  return s;
}

Json to_json(const EstimatorConfig& c) {
  return {{"n_starts", c.n_starts},       {"em_max_iter", c.em_max_iter}, {"em_tol", c.em_tol},
          {"qn_max_iter", c.qn_max_iter}, {"qn_grad_tol", c.qn_grad_tol}, {"sigma_floor", c.sigma_floor},
          {"seed", c.seed}};
}

EstimatorConfig estimator_from_json(const Json& j) {
  const std::string w = "estimator";
  check_keys(j, {"n_starts", "em_max_iter", "em_tol", "qn_max_iter", "qn_grad_tol", "sigma_floor", "seed"}, w);
  EstimatorConfig c;
  c.n_starts = get_or(j, "n_starts", c.n_starts, w);
  c.em_max_iter = get_or(j, "em_max_iter", c.em_max_iter, w);
  c.em_tol = get_or(j, "em_tol", c.em_tol, w);
  c.qn_max_iter = get_or(j, "qn_max_iter", c.qn_max_iter, w);
  c.qn_grad_tol = get_or(j, "qn_grad_tol", c.qn_grad_tol, w);
  c.sigma_floor = get_or(j, "sigma_floor", c.sigma_floor, w);
  c.seed = get_or(j, "seed", c.seed, w);
  c.validate();
  return c;
}

Json to_json(const HacConfig& c) {
  Json bw = c.bandwidth.automatic ? Json("auto") : Json(c.bandwidth.value);
  return {{"kernel", "parzen"}, {"bandwidth", bw}, {"demean_scores", c.demean_scores}};
}

HacConfig hac_from_json(const Json& j) {
  check_keys(j, {"kernel", "bandwidth", "demean_scores"}, "hac");
  HacConfig c;
  if (get_or<std::string>(j, "kernel", "parzen", "hac") != "parzen") throw ConfigError("hac.kernel must be parzen");
  if (j.contains("bandwidth")) {
    const Json& b = j["bandwidth"];
    c.bandwidth = b.is_string() ? Bandwidth::parse(b.get<std::string>()) : Bandwidth::fixed(b.get<double>());
  }
  c.demean_scores = get_or(j, "demean_scores", c.demean_scores, "hac");
  require_valid(c.violations());
  return c;
}

Json to_json(const ExperimentConfig& c) {
  return {{"name", c.name},
          {"design", c.design},
          {"dgp", to_json(c.dgp)},
          {"model", to_json(c.spec)},
          {"estimator", to_json(c.estimator)},
          {"hac", to_json(c.hac)},
          {"T", c.T},
          {"burn_in", c.burn_in},
          {"n_reps", c.n_reps},
          {"master_seed", c.master_seed},
          {"truth_n_sim", c.truth_n_sim},
          {"out_dir", c.out_dir.string()}};
}

ExperimentConfig experiment_from_json(const Json& j, const fs::path& base_dir) {
  const std::string w = "experiment";
  check_keys(j,
             {"name", "design", "dgp", "model", "estimator", "hac", "T", "burn_in", "n_reps", "master_seed",
              "truth_n_sim", "out_dir"},
             w);
  ExperimentConfig c;
  c.name = get_or<std::string>(j, "name", "", w);
  c.design = get_or<std::string>(j, "design", c.name, w);
  if (!j.contains("dgp")) throw ConfigError("missing key 'dgp' in experiment");
  c.dgp = dgp_from_json(j["dgp"]);
  c.spec = j.contains("model") ? model_from_json(j["model"]) : ModelSpec::hmm(c.dgp.regimes());
  if (j.contains("estimator")) c.estimator = estimator_from_json(j["estimator"]);
  if (j.contains("hac")) c.hac = hac_from_json(j["hac"]);
  c.T = get_or(j, "T", c.T, w);
  c.burn_in = get_or(j, "burn_in", c.burn_in, w);
  c.n_reps = get_or(j, "n_reps", c.n_reps, w);
  c.master_seed = get_or(j, "master_seed", c.master_seed, w);
  c.truth_n_sim = get_or(j, "truth_n_sim", c.truth_n_sim, w);
  fs::path out = get_or<std::string>(j, "out_dir", "", w);
  if (!out.empty() && out.is_relative() && !base_dir.empty()) out = base_dir / out;
  c.out_dir = out;
  c.validate();
  return c;
}

Json to_json(const MixtureParams& theta) {
  Json comps = Json::array();
  for (const auto& c : theta.components) comps.push_back(outcome_to_json(c));
  return {{"components", comps}, {"weights", theta.weights}};
}

MixtureParams mixture_from_json(const Json& j) {
  check_keys(j, {"components", "weights"}, "theta");
  MixtureParams theta;
  if (!j.contains("components") || !j["components"].is_array()) throw ConfigError("theta.components must be an array");
  for (const auto& c : j["components"]) theta.components.push_back(outcome_from_json(c, "theta.components"));
  theta.weights = get_required<std::vector<double>>(j, "weights", "theta");
  theta.validate();
  return theta;
}

Json to_json(const McSummary& s) {
  Json params = Json::array();
  for (const auto& p : s.parameters)
    params.push_back({{"name", p.name},
                      {"truth", p.truth},
                      {"bias", p.bias},
                      {"sd", p.sd},
                      {"mean_se", p.mean_se},
                      {"sd_se_ratio", p.ratio},
                      {"bias_mc_error", p.bias_mc_error}});
  return {{"name", s.name},           {"design", s.design},           {"layout", layout_name(s.layout)},
          {"T", s.T},                 {"n_reps", s.n_reps},           {"n_used", s.n_used},
          {"n_converged", s.n_converged}, {"n_degenerate", s.n_degenerate}, {"n_failed", s.n_failed},
          {"parameters", params}};
}

McSummary summary_from_json(const Json& j) {
  McSummary s;
  try {
    s.name = j.value("name", "");
    s.design = j.value("design", "");
    s.layout = parse_layout(j.value("layout", "hmm"));
    s.T = j.at("T").get<std::size_t>();
    s.n_reps = j.value("n_reps", std::size_t{0});
    s.n_used = j.value("n_used", std::size_t{0});
    s.n_converged = j.value("n_converged", std::size_t{0});
    s.n_degenerate = j.value("n_degenerate", std::size_t{0});
    s.n_failed = j.value("n_failed", std::size_t{0});
    for (const auto& p : j.at("parameters")) {
      ParameterSummary ps;
      ps.name = p.at("name").get<std::string>();
      ps.truth = number_or_nan(p.at("truth"));
      ps.bias = number_or_nan(p.at("bias"));
      ps.sd = number_or_nan(p.at("sd"));
      ps.mean_se = number_or_nan(p.at("mean_se"));
      ps.ratio = number_or_nan(p.at("sd_se_ratio"));
      ps.bias_mc_error = p.contains("bias_mc_error") ? number_or_nan(p["bias_mc_error"]) : NAN;
      s.parameters.push_back(ps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("summary: ") + e.what());
  }
  return s;
}

Json to_json(const PseudoTrueResult& r) {
  Json outcomes = Json::array();
  for (const auto& o : r.outcome_star) outcomes.push_back(outcome_to_json(o));
  return {{"weights_star", r.weights_star}, {"mc_error", r.mc_error},   {"occupancy", r.occupancy},
          {"occupancy_mc_error", r.occupancy_mc_error}, {"outcome_star", outcomes}, {"n_sim", r.n_sim},
          {"burn_in", r.burn_in}};
}

Json to_json(const CfCheckReport& r) {
  Json trace = Json::array();
  for (std::size_t i = 0; i < r.tau.size(); ++i) trace.push_back({{"tau", r.tau[i]}, {"ratio", r.ratio[i]}, {"log_ratio", r.log_ratio[i]}});
  return {{"family", r.family}, {"a1", r.a1}, {"a2", r.a2}, {"ratio_trace", trace}, {"verdict", r.verdict}};
}

Json to_json(const KlReport& r) {
  Json comps = Json::array();
  for (const auto& c : r.comparisons)
    comps.push_back({{"difference", c.difference}, {"std_error", c.std_error}, {"z", c.z()}});
  return {{"m_star", r.m_star}, {"n_sim", r.n_sim}, {"comparisons", comps}};
}

Json fit_to_json(const EstimationResult& fit, const ModelSpec& spec, const SandwichResult* sw) {
  Json j;
  j["model"] = to_json(spec);
  j["theta"] = to_json(fit.theta_hat);
  const auto names = natural_parameter_names(spec);
  const Eigen::VectorXd nat = natural_parameters(fit.theta_hat, spec);
  Json params = Json::array();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Json p = {{"name", names[i]}, {"estimate", nat[static_cast<Eigen::Index>(i)]}};
    if (sw) p["std_error"] = sw->std_errors[static_cast<Eigen::Index>(i)];
    params.push_back(p);
  }
  j["parameters"] = params;
  Json starts = Json::array();
  for (const auto& s : fit.starts)
    starts.push_back({{"index", s.index}, {"loglik", s.loglik}, {"iterations", s.iterations},
                      {"degenerate", s.degenerate}, {"notes", s.notes}});
  j["convergence"] = {{"converged", fit.converged},         {"max_abs_score", fit.max_abs_score},
                      {"loglik", fit.loglik},               {"em_iterations", fit.em_iterations},
                      {"qn_iterations", fit.qn_iterations}, {"start_index", fit.start_index},
                      {"degenerate", fit.degenerate},       {"starts", starts}};
  if (sw) {
    j["covariance"] = matrix_to_json(sw->covariance);
    j["inference"] = {{"kernel", "parzen"},
                      {"bandwidth", sw->hac.bandwidth},
                      {"lags", sw->hac.lags},
                      {"truncated", sw->hac.truncated},
                      {"psd_floored", sw->hac.psd_floored},
                      {"hessian_condition", sw->hessian_condition},
                      {"se_scale", "natural (delta method from log-sigma and weight logits)"},
                      {"warnings", sw->hac.warnings}};
  }
  j["notes"] = fit.notes;
  return j;
}

}  // namespace hmmix
