#include "hmmix/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hmmix/errors.hpp"

namespace hmmix {

ModelSpec ModelSpec::hmm(std::size_t d) { return ModelSpec{d, OutcomeForm::Hmm, {true, true, true}}; }

ModelSpec ModelSpec::msar(std::size_t d) { return ModelSpec{d, OutcomeForm::Msar, {true, false, true}}; }

std::vector<std::string> ModelSpec::violations() const {
  std::vector<std::string> out;
  if (d < 1) out.push_back("model needs d >= 1 components");
  if (d >= 2 && !switching.mu && !switching.slope && !switching.sigma)
    out.push_back("with d >= 2 at least one coefficient block must be regime-specific");
  return out;
}

void ModelSpec::validate() const { require_valid(violations()); }

std::vector<std::string> MixtureParams::violations() const {
  std::vector<std::string> out;
  if (components.empty()) out.push_back("mixture needs at least one component");
  if (weights.size() != components.size()) out.push_back("weights length must equal the number of components");
  double total = 0.0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    if (!(weights[s] > 0.0) || !std::isfinite(weights[s]))
      out.push_back("weight(" + std::to_string(s + 1) + ") must be strictly positive");
    total += weights[s];
  }
  if (!weights.empty() && !(std::abs(total - 1.0) <= 1e-12)) out.push_back("weights must sum to 1");
  for (std::size_t s = 0; s < components.size(); ++s) {
    const auto& c = components[s];
    if (!std::isfinite(c.mu) || !std::isfinite(c.gamma))
      out.push_back("component " + std::to_string(s + 1) + " coefficients not finite");
    if (!(c.sigma > 0.0) || !std::isfinite(c.sigma))
      out.push_back("sigma(" + std::to_string(s + 1) + ") must be > 0");
  }
  return out;
}

void MixtureParams::validate() const { require_valid(violations()); }

void MixtureParams::validate(const ModelSpec& spec) const {
  auto out = violations();
  if (components.size() != spec.d) out.push_back("number of components differs from the model's d");
  for (std::size_t s = 1; s < components.size(); ++s) {
    if (!spec.switching.mu && components[s].mu != components[0].mu) out.push_back("shared mu differs across components");
    if (!spec.switching.slope && components[s].gamma != components[0].gamma)
      out.push_back("shared slope differs across components");
    if (!spec.switching.sigma && components[s].sigma != components[0].sigma)
      out.push_back("shared sigma differs across components");
  }
  require_valid(std::move(out));
}

MixtureParams permute(const MixtureParams& theta, const std::vector<std::size_t>& perm) {
  MixtureParams out;
  out.components.reserve(perm.size());
  out.weights.reserve(perm.size());
  for (std::size_t k : perm) {
    out.components.push_back(theta.components.at(k));
    out.weights.push_back(theta.weights.at(k));
  }
  return out;
}

RegressionData regression_data(const Sample& sample, const ModelSpec& spec) {
  require_valid(sample.violations());
  RegressionData data;
  const std::size_t T = sample.size();
  if (spec.form == OutcomeForm::Hmm) {
    data.y = sample.y;
    data.x = sample.w;
  } else {
    if (T < 2) throw DomainError("the autoregressive form needs at least two observations");
    data.y.assign(sample.y.begin() + 1, sample.y.end());
    data.x.assign(sample.y.begin(), sample.y.end() - 1);
  }
  return data;
}

FreeLayout::FreeLayout(const ModelSpec& spec)
    : d_(spec.d),
      mu_switch_(spec.switching.mu),
      slope_switch_(spec.switching.slope),
      sigma_switch_(spec.switching.sigma) {
  mu_ = 0;
  slope_ = mu_ + (mu_switch_ ? d_ : 1);
  sigma_ = slope_ + (slope_switch_ ? d_ : 1);
  logit_ = sigma_ + (sigma_switch_ ? d_ : 1);
  dim_ = logit_ + d_ - 1;
}

Eigen::VectorXd encode(const MixtureParams& theta, const ModelSpec& spec) {
  theta.validate(spec);
  const FreeLayout layout(spec);
  Eigen::VectorXd free(layout.dim());
  const std::size_t d = spec.d;
  for (std::size_t s = 0; s < d; ++s) {
    const auto& c = theta.components[s];
    free[layout.mu_index(s)] = c.mu;
    free[layout.slope_index(s)] = c.gamma;
    free[layout.log_sigma_index(s)] = std::log(c.sigma);
  }
  const double anchor = std::log(theta.weights[d - 1]);
  for (std::size_t s = 0; s + 1 < d; ++s) free[layout.logit_index(s)] = std::log(theta.weights[s]) - anchor;
  return free;
}

MixtureParams decode(const Eigen::VectorXd& free, const ModelSpec& spec) {
  const FreeLayout layout(spec);
  if (static_cast<std::size_t>(free.size()) != layout.dim())
    throw DomainError("free vector has dimension " + std::to_string(free.size()) + ", expected " +
                      std::to_string(layout.dim()));
  if (!free.allFinite()) throw DomainError("free vector has non-finite entries");
  const std::size_t d = spec.d;
  static const double lo = std::log(kSigmaMin), hi = std::log(kSigmaMax);
  MixtureParams theta;
  theta.components.resize(d);
  for (std::size_t s = 0; s < d; ++s) {
    auto& c = theta.components[s];
    c.mu = free[layout.mu_index(s)];
    c.gamma = free[layout.slope_index(s)];
    c.sigma = std::exp(std::clamp(free[layout.log_sigma_index(s)], lo, hi));
  }
  std::vector<double> logits(d, 0.0);
  for (std::size_t s = 0; s + 1 < d; ++s)
    logits[s] = std::clamp(free[layout.logit_index(s)], -kLogitBound, kLogitBound);
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  theta.weights.resize(d);
  for (std::size_t s = 0; s < d; ++s) {
    theta.weights[s] = std::exp(logits[s] - top);
    total += theta.weights[s];
  }
  for (auto& w : theta.weights) w /= total;
  return theta;
}

Eigen::VectorXd natural_parameters(const MixtureParams& theta, const ModelSpec& spec) {
  theta.validate(spec);
  const std::size_t d = spec.d;
  const auto block = [d](bool sw) { return sw ? d : std::size_t{1}; };
  const std::size_t nm = block(spec.switching.mu), ng = block(spec.switching.slope),
                    ns = block(spec.switching.sigma);
  Eigen::VectorXd v(nm + ng + ns + d);
  for (std::size_t s = 0; s < nm; ++s) v[s] = theta.components[s].mu;
  for (std::size_t s = 0; s < ng; ++s) v[nm + s] = theta.components[s].gamma;
  for (std::size_t s = 0; s < ns; ++s) v[nm + ng + s] = theta.components[s].sigma;
  for (std::size_t s = 0; s < d; ++s) v[nm + ng + ns + s] = theta.weights[s];
  return v;
}

std::vector<std::string> natural_parameter_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  const auto add = [&](const std::string& base, bool sw) {
    if (!sw || spec.d == 1) {
      names.push_back(base);
      return;
    }
    for (std::size_t s = 0; s < spec.d; ++s) names.push_back(base + "(" + std::to_string(s + 1) + ")");
  };
  add("mu", spec.switching.mu);
  add(spec.form == OutcomeForm::Hmm ? "gamma" : "phi", spec.switching.slope);
  add("sigma", spec.switching.sigma);
  add("weight", true);
  return names;
}

Eigen::MatrixXd natural_jacobian(const Eigen::VectorXd& free, const ModelSpec& spec) {
  const MixtureParams theta = decode(free, spec);
  const FreeLayout layout(spec);
  const std::size_t d = spec.d;
  const std::size_t nm = spec.switching.mu ? d : 1, ng = spec.switching.slope ? d : 1,
                    ns = spec.switching.sigma ? d : 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nm + ng + ns + d, layout.dim());
  for (std::size_t s = 0; s < nm; ++s) J(s, layout.mu_index(s)) = 1.0;
  for (std::size_t s = 0; s < ng; ++s) J(nm + s, layout.slope_index(s)) = 1.0;
  for (std::size_t s = 0; s < ns; ++s) J(nm + ng + s, layout.log_sigma_index(s)) = theta.components[s].sigma;
  const std::size_t w0 = nm + ng + ns;
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t j = 0; j + 1 < d; ++j)
      J(w0 + k, layout.logit_index(j)) = theta.weights[k] * ((k == j ? 1.0 : 0.0) - theta.weights[j]);
  return J;
}

double component_logdensity(double y, double x, const Component& comp, const DensityFamily& f) {
  if (!(comp.sigma > 0.0)) throw DomainError("component_logdensity: sigma must be > 0");
  const double u = (y - comp.mu - comp.gamma * x) / comp.sigma;
  return f.log_pdf(u) - std::log(comp.sigma);
}

double log_sum_exp(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  const double top = terms.back();
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc);
}

MixtureObjective::MixtureObjective(RegressionData data, ModelSpec spec, DensityFamily density)
    : data_(std::move(data)), spec_(spec), density_(density), layout_(spec) {
  spec_.validate();
  if (data_.size() == 0) throw DomainError("quasi-log-likelihood of an empty sample");
}

double MixtureObjective::loglik(const MixtureParams& theta) const {
  theta.validate();
  if (theta.d() != spec_.d) throw DomainError("parameter has the wrong number of components");
  const std::size_t d = spec_.d;
  std::vector<double> log_w(d), log_sigma(d), terms(d);
  for (std::size_t s = 0; s < d; ++s) {
    log_w[s] = std::log(theta.weights[s]);
    log_sigma[s] = std::log(theta.components[s].sigma);
  }
  double total = 0.0;
  for (std::size_t t = 0; t < data_.size(); ++t) {
    for (std::size_t s = 0; s < d; ++s) {
      const auto& c = theta.components[s];
      const double u = (data_.y[t] - c.mu - c.gamma * data_.x[t]) / c.sigma;
      terms[s] = log_w[s] + density_.log_pdf(u) - log_sigma[s];
    }
    total += log_sum_exp(terms);
  }
  return total / static_cast<double>(data_.size());
}

namespace {

// Accumulates one observation's gradient into `row` (which must be zeroed).
// Returns the observation's log-likelihood.
template <class Row>
double observation_gradient(const MixtureParams& theta, const std::vector<double>& log_w,
                            const std::vector<double>& log_sigma, const DensityFamily& f,
                            const FreeLayout& layout, double y, double x, std::vector<double>& terms,
                            std::vector<double>& u, std::vector<double>& sorted, Row&& row) {
  const std::size_t d = theta.d();
  for (std::size_t s = 0; s < d; ++s) {
    const auto& c = theta.components[s];
    u[s] = (y - c.mu - c.gamma * x) / c.sigma;
    terms[s] = log_w[s] + f.log_pdf(u[s]) - log_sigma[s];
  }
  sorted = terms;
  const double lse = log_sum_exp(sorted);
  for (std::size_t s = 0; s < d; ++s) {
    const double r = std::exp(terms[s] - lse);
    const double dl = f.dlog_pdf(u[s]);
    const double inv_sigma = 1.0 / theta.components[s].sigma;
    row[layout.mu_index(s)] += -r * dl * inv_sigma;
    row[layout.slope_index(s)] += -r * dl * x * inv_sigma;
    row[layout.log_sigma_index(s)] += r * (-u[s] * dl - 1.0);
    if (s + 1 < d) row[layout.logit_index(s)] += r - theta.weights[s];
  }
  return lse;
}

}  // namespace

double MixtureObjective::value_and_score(const Eigen::VectorXd& free, Eigen::VectorXd* score) const {
  const MixtureParams theta = decode(free, spec_);
  const std::size_t d = spec_.d;
  std::vector<double> log_w(d), log_sigma(d), terms(d), u(d), sorted(d);
  for (std::size_t s = 0; s < d; ++s) {
    log_w[s] = std::log(theta.weights[s]);
    log_sigma[s] = std::log(theta.components[s].sigma);
  }
  if (!score) return loglik(theta);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout_.dim());
  double total = 0.0;
  for (std::size_t t = 0; t < data_.size(); ++t)
    total += observation_gradient(theta, log_w, log_sigma, density_, layout_, data_.y[t], data_.x[t], terms, u, sorted, grad);
  const double n = static_cast<double>(data_.size());
  *score = grad / n;
  return total / n;
}

Eigen::VectorXd MixtureObjective::score(const Eigen::VectorXd& free) const {
  Eigen::VectorXd g;
  value_and_score(free, &g);
  return g;
}

Eigen::MatrixXd MixtureObjective::score_contributions(const Eigen::VectorXd& free) const {
  const MixtureParams theta = decode(free, spec_);
  const std::size_t d = spec_.d;
  std::vector<double> log_w(d), log_sigma(d), terms(d), u(d), sorted(d);
  for (std::size_t s = 0; s < d; ++s) {
    log_w[s] = std::log(theta.weights[s]);
    log_sigma[s] = std::log(theta.components[s].sigma);
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data_.size()), layout_.dim());
  for (std::size_t t = 0; t < data_.size(); ++t) {
    auto row = G.row(static_cast<Eigen::Index>(t));
    observation_gradient(theta, log_w, log_sigma, density_, layout_, data_.y[t], data_.x[t], terms, u, sorted, row);
  }
  return G;
}

Eigen::MatrixXd MixtureObjective::hessian(const Eigen::VectorXd& free) const {
  const auto q = static_cast<Eigen::Index>(layout_.dim());
  Eigen::MatrixXd H(q, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double h = 1e-4 * std::max(1.0, std::abs(free[j]));
    Eigen::VectorXd up = free, down = free;
    up[j] += h;
    down[j] -= h;
    H.col(j) = (score(up) - score(down)) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

double quasi_loglik(const MixtureParams& theta, const Sample& sample, const ModelSpec& spec) {
  return MixtureObjective(regression_data(sample, spec), spec).loglik(theta);
}

Eigen::VectorXd score(const Eigen::VectorXd& free, const Sample& sample, const ModelSpec& spec) {
  return MixtureObjective(regression_data(sample, spec), spec).score(free);
}

Eigen::MatrixXd score_contributions(const Eigen::VectorXd& free, const Sample& sample, const ModelSpec& spec) {
  return MixtureObjective(regression_data(sample, spec), spec).score_contributions(free);
}

Eigen::MatrixXd hessian(const Eigen::VectorXd& free, const Sample& sample, const ModelSpec& spec) {
  return MixtureObjective(regression_data(sample, spec), spec).hessian(free);
}

}  // namespace hmmix
