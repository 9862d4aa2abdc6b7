#include "hmmix/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "hmmix/quasi_newton.hpp"

namespace hmmix {
namespace {

constexpr double kCollapseFraction = 1e-8;

struct Ols {
  double intercept = 0.0;
  double slope = 0.0;
  double resid_sd = 1.0;
  double x_sd = 1.0;
  std::vector<double> residuals;
};

Ols pooled_ols(const RegressionData& data) {
  const std::size_t n = data.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    mx += data.x[t];
    my += data.y[t];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    sxx += (data.x[t] - mx) * (data.x[t] - mx);
    sxy += (data.x[t] - mx) * (data.y[t] - my);
  }
  Ols out;
  out.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  out.intercept = my - out.slope * mx;
  out.residuals.resize(n);
  double ssr = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    out.residuals[t] = data.y[t] - out.intercept - out.slope * data.x[t];
    ssr += out.residuals[t] * out.residuals[t];
  }
  out.resid_sd = std::sqrt(ssr / static_cast<double>(n));
  if (!(out.resid_sd > 1e-8)) out.resid_sd = 1e-8 + 1e-3 * std::abs(my);
  out.x_sd = sxx > 0.0 ? std::sqrt(sxx / static_cast<double>(n)) : 1.0;
  return out;
}

class EmState {
 public:
  EmState(const MixtureObjective& objective, const EstimatorConfig& cfg)
      : data_(objective.data()), spec_(objective.spec()), cfg_(cfg), n_(data_.size()), d_(spec_.d),
        resp_(n_ * d_), terms_(d_), sorted_(d_) {}

  // Fills responsibilities; returns the average log-likelihood of `theta`.
  double expectation(const MixtureParams& theta) {
    const DensityFamily f = DensityFamily::gaussian();
    std::vector<double> log_w(d_), log_sigma(d_);
    for (std::size_t s = 0; s < d_; ++s) {
      log_w[s] = std::log(theta.weights[s]);
      log_sigma[s] = std::log(theta.components[s].sigma);
    }
    double total = 0.0;
    for (std::size_t t = 0; t < n_; ++t) {
      for (std::size_t s = 0; s < d_; ++s) {
        const auto& c = theta.components[s];
        const double u = (data_.y[t] - c.mu - c.gamma * data_.x[t]) / c.sigma;
        terms_[s] = log_w[s] + f.log_pdf(u) - log_sigma[s];
      }
      sorted_ = terms_;
      const double lse = log_sum_exp(sorted_);
      for (std::size_t s = 0; s < d_; ++s) resp_[t * d_ + s] = std::exp(terms_[s] - lse);
      total += lse;
    }
    return total / static_cast<double>(n_);
  }

  std::vector<double> column_totals() const {
    std::vector<double> tot(d_, 0.0);
    for (std::size_t t = 0; t < n_; ++t)
      for (std::size_t s = 0; s < d_; ++s) tot[s] += resp_[t * d_ + s];
    return tot;
  }

  // One conditional-maximisation sweep: coefficients given the current
  // scales, then scales given the coefficients, then weights.
  MixtureParams maximisation(const MixtureParams& theta, EmResult& result) {
    const bool mu_sw = spec_.switching.mu, slope_sw = spec_.switching.slope, sigma_sw = spec_.switching.sigma;
    const std::size_t n_mu = mu_sw ? d_ : 1, n_slope = slope_sw ? d_ : 1;
    const auto p = static_cast<Eigen::Index>(n_mu + n_slope);

    std::vector<double> s0(d_, 0.0), s1(d_, 0.0), s2(d_, 0.0), sy(d_, 0.0), sxy(d_, 0.0);
    for (std::size_t t = 0; t < n_; ++t) {
      const double x = data_.x[t], y = data_.y[t];
      for (std::size_t s = 0; s < d_; ++s) {
        const double r = resp_[t * d_ + s];
        s0[s] += r;
        s1[s] += r * x;
        s2[s] += r * x * x;
        sy[s] += r * y;
        sxy[s] += r * x * y;
      }
    }

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    for (std::size_t s = 0; s < d_; ++s) {
      const double sig = theta.components[s].sigma;
      const double c = 1.0 / (sig * sig);
      const auto i = static_cast<Eigen::Index>(mu_sw ? s : 0);
      const auto j = static_cast<Eigen::Index>(n_mu + (slope_sw ? s : 0));
      A(i, i) += c * s0[s];
      A(i, j) += c * s1[s];
      A(j, i) += c * s1[s];
      A(j, j) += c * s2[s];
      b[i] += c * sy[s];
      b[j] += c * sxy[s];
    }
    Eigen::VectorXd beta;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      beta = ldlt.solve(b);
    } else {
      beta = A.completeOrthogonalDecomposition().solve(b);
      note(result, "rank-deficient weighted least-squares system; minimum-norm solution used");
    }

    MixtureParams next = theta;
    for (std::size_t s = 0; s < d_; ++s) {
      next.components[s].mu = beta[static_cast<Eigen::Index>(mu_sw ? s : 0)];
      next.components[s].gamma = beta[static_cast<Eigen::Index>(n_mu + (slope_sw ? s : 0))];
    }

    std::vector<double> ssr(d_, 0.0);
    for (std::size_t t = 0; t < n_; ++t) {
      for (std::size_t s = 0; s < d_; ++s) {
        const auto& c = next.components[s];
        const double e = data_.y[t] - c.mu - c.gamma * data_.x[t];
        ssr[s] += resp_[t * d_ + s] * e * e;
      }
    }
    const double n = static_cast<double>(n_);
    if (sigma_sw) {
      for (std::size_t s = 0; s < d_; ++s) next.components[s].sigma = std::sqrt(ssr[s] / s0[s]);
    } else {
      const double pooled = std::sqrt(std::accumulate(ssr.begin(), ssr.end(), 0.0) / n);
      for (auto& c : next.components) c.sigma = pooled;
    }
    for (auto& c : next.components) {
      if (!(c.sigma >= cfg_.sigma_floor)) {
        c.sigma = cfg_.sigma_floor;
        result.degenerate = true;
        note(result, "sigma hit the floor");
      }
    }
    for (std::size_t s = 0; s < d_; ++s) next.weights[s] = s0[s] / n;
    const double wsum = std::accumulate(next.weights.begin(), next.weights.end(), 0.0);
    for (auto& w : next.weights) w /= wsum;
    return next;
  }

  static void note(EmResult& result, const std::string& msg) {
    if (std::find(result.notes.begin(), result.notes.end(), msg) == result.notes.end()) result.notes.push_back(msg);
  }

 private:
  const RegressionData& data_;
  const ModelSpec& spec_;
  const EstimatorConfig& cfg_;
  std::size_t n_, d_;
  std::vector<double> resp_;
  std::vector<double> terms_, sorted_;
};

}  // namespace

std::vector<std::string> EstimatorConfig::violations() const {
  std::vector<std::string> out;
  if (n_starts < 1) out.push_back("n_starts must be >= 1");
  if (em_max_iter < 1) out.push_back("em_max_iter must be >= 1");
  if (!(em_tol > 0.0)) out.push_back("em_tol must be > 0");
  if (!(qn_grad_tol > 0.0)) out.push_back("qn_grad_tol must be > 0");
  if (!(sigma_floor > 0.0)) out.push_back("sigma_floor must be > 0");
  return out;
}

void EstimatorConfig::validate() const { require_valid(violations()); }

EmResult em_fit(const MixtureObjective& objective, const MixtureParams& init, const EstimatorConfig& cfg,
                Engine* reseed_rng) {
  cfg.validate();
  const ModelSpec& spec = objective.spec();
  init.validate(spec);
  const auto& data = objective.data();
  const std::size_t n = data.size(), d = spec.d;

  Engine local_rng = substream(cfg.seed, "em-reseed");
  Engine& rng = reseed_rng ? *reseed_rng : local_rng;
  const Ols pooled = pooled_ols(data);

  EmResult result;
  EmState state(objective, cfg);
  MixtureParams theta = init;
  double ll = state.expectation(theta);
  result.loglik_trace.push_back(ll);
  std::vector<bool> reseeded(d, false);

  while (result.iterations < cfg.em_max_iter) {
    const auto totals = state.column_totals();
    std::size_t collapsed = d;
    for (std::size_t s = 0; s < d; ++s)
      if (d > 1 && totals[s] < kCollapseFraction * static_cast<double>(n)) collapsed = s;
    if (collapsed < d) {
      if (reseeded[collapsed]) {
        result.degenerate = true;
        EmState::note(result, "component " + std::to_string(collapsed + 1) + " collapsed twice; abandoned");
        break;
      }
      reseeded[collapsed] = true;
      ++result.reseeds;
      EmState::note(result, "component " + std::to_string(collapsed + 1) + " collapsed; re-seeded");
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      const std::size_t t = pick(rng);
      // A shared block keeps its common value; switching blocks are re-drawn.
      if (spec.switching.mu) theta.components[collapsed].mu = data.y[t] - theta.components[collapsed].gamma * data.x[t];
      if (spec.switching.sigma) theta.components[collapsed].sigma = pooled.resid_sd;
      const double share = 1.0 / static_cast<double>(d);
      double others = 0.0;
      for (std::size_t s = 0; s < d; ++s)
        if (s != collapsed) others += theta.weights[s];
      for (std::size_t s = 0; s < d; ++s)
        theta.weights[s] = s == collapsed ? share : theta.weights[s] * (1.0 - share) / others;
      ll = state.expectation(theta);
      result.reseed_iterations.push_back(result.loglik_trace.size());
      result.loglik_trace.push_back(ll);
      continue;
    }

    MixtureParams next = state.maximisation(theta, result);
    const double ll_next = state.expectation(next);
    ++result.iterations;
    result.loglik_trace.push_back(ll_next);
    theta = std::move(next);
    const double gain = ll_next - ll;
    ll = ll_next;
    if (gain < cfg.em_tol) {
      result.converged = true;
      break;
    }
  }
  result.theta = std::move(theta);
  result.loglik = ll;
  return result;
}

EmResult em_fit(const Sample& sample, const ModelSpec& spec, const MixtureParams& init, const EstimatorConfig& cfg) {
  const MixtureObjective objective(regression_data(sample, spec), spec);
  return em_fit(objective, init, cfg);
}

MixtureParams initial_guess(const RegressionData& data, const ModelSpec& spec, std::size_t index, Seed seed) {
  spec.validate();
  const std::size_t d = spec.d;
  const Ols ols = pooled_ols(data);
  std::vector<double> resid = ols.residuals;
  std::sort(resid.begin(), resid.end());
  const auto quantile = [&resid](double p) {
    const double pos = p * static_cast<double>(resid.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, resid.size() - 1);
    return resid[lo] + (pos - static_cast<double>(lo)) * (resid[hi] - resid[lo]);
  };

  MixtureParams theta;
  theta.components.resize(d);
  theta.weights.assign(d, 1.0 / static_cast<double>(d));
  for (std::size_t s = 0; s < d; ++s) {
    auto& c = theta.components[s];
    c.mu = ols.intercept + (spec.switching.mu ? quantile((static_cast<double>(s) + 0.5) / static_cast<double>(d)) : 0.0);
    c.gamma = ols.slope;
    c.sigma = ols.resid_sd;
  }
  if (index == 0) return theta;

  Engine rng = substream(seed, "start", index);
  std::normal_distribution<double> normal;
  const double slope_scale = 0.25 * ols.resid_sd / ols.x_sd;
  const double shared_mu = normal(rng), shared_slope = normal(rng), shared_sigma = normal(rng);
  double wsum = 0.0;
  for (std::size_t s = 0; s < d; ++s) {
    auto& c = theta.components[s];
    c.mu += 0.5 * ols.resid_sd * (spec.switching.mu ? normal(rng) : shared_mu);
    c.gamma += slope_scale * (spec.switching.slope ? normal(rng) : shared_slope);
    c.sigma *= std::exp(0.25 * (spec.switching.sigma ? normal(rng) : shared_sigma));
    theta.weights[s] = std::exp(0.3 * normal(rng));
    wsum += theta.weights[s];
  }
  for (auto& w : theta.weights) w /= wsum;
  return theta;
}

MixtureParams sort_by_mu(const MixtureParams& theta) {
  std::vector<std::size_t> order(theta.d());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = theta.components[a];
    const auto& cb = theta.components[b];
    if (ca.mu != cb.mu) return ca.mu < cb.mu;
    if (ca.gamma != cb.gamma) return ca.gamma < cb.gamma;
    return ca.sigma < cb.sigma;
  });
  return permute(theta, order);
}

EstimationResult qml_estimate(const Sample& sample, const ModelSpec& spec, const EstimatorConfig& cfg) {
  spec.validate();
  cfg.validate();
  RegressionData data = regression_data(sample, spec);
  const std::size_t switching_blocks = static_cast<std::size_t>(spec.switching.mu) +
                                       static_cast<std::size_t>(spec.switching.slope) +
                                       static_cast<std::size_t>(spec.switching.sigma);
  if (data.size() < spec.d * std::max<std::size_t>(switching_blocks, 1) + 1)
    throw DomainError("sample too short for " + std::to_string(spec.d) + " components");
  const MixtureObjective objective(std::move(data), spec);

  EstimationResult result;
  std::optional<EmResult> best;
  for (std::size_t k = 0; k < cfg.n_starts; ++k) {
    const MixtureParams init = initial_guess(objective.data(), spec, k, cfg.seed);
    Engine reseed_rng = substream(cfg.seed, "em-reseed", k);
    EmResult em = em_fit(objective, init, cfg, &reseed_rng);
    StartDiagnostic diag{k, em.loglik, em.iterations, em.degenerate, em.notes};
    result.starts.push_back(diag);
    if (em.degenerate || !std::isfinite(em.loglik)) continue;
    if (!best || em.loglik > best->loglik) {
      best = std::move(em);
      result.start_index = k;
    }
  }
  if (!best) throw EstimationError("all " + std::to_string(cfg.n_starts) + " starts degenerated", result.starts);
  result.em_iterations = best->iterations;

  const Eigen::VectorXd x0 = encode(best->theta, spec);
  const SmoothObjective negative = [&objective](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const double v = objective.value_and_score(x, grad);
    if (grad) *grad = -*grad;
    return -v;
  };
  const BfgsResult qn = minimize_bfgs(negative, x0, {cfg.qn_max_iter, cfg.qn_grad_tol});
  result.qn_iterations = qn.iterations;
  Eigen::VectorXd x = x0;
  if (std::isfinite(qn.f) && -qn.f >= best->loglik) {
    x = qn.x;
  } else {
    result.notes.push_back("quasi-Newton refinement did not improve on EM; EM solution kept");
  }
  if (!qn.converged) result.notes.push_back("quasi-Newton: " + qn.status);

  result.theta_hat = sort_by_mu(decode(x, spec));
  result.theta_free = encode(result.theta_hat, spec);
  result.loglik = objective.loglik(result.theta_hat);
  result.max_abs_score = objective.score(result.theta_free).lpNorm<Eigen::Infinity>();
  result.converged = result.max_abs_score <= cfg.qn_grad_tol;
  for (std::size_t s = 0; s < spec.d; ++s) {
    if (result.theta_hat.components[s].sigma <= cfg.sigma_floor * (1.0 + 1e-9)) {
      result.degenerate = true;
      result.notes.push_back("sigma(" + std::to_string(s + 1) + ") at the floor");
    }
    if (spec.d > 1 && result.theta_hat.weights[s] < kCollapseFraction) {
      result.degenerate = true;
      result.notes.push_back("weight(" + std::to_string(s + 1) + ") collapsed");
    }
  }
  return result;
}

Alignment align(const MixtureParams& theta_hat, const MixtureParams& reference) {
  if (theta_hat.d() != reference.d()) throw DomainError("align_permutation: component counts differ");
  const std::size_t d = theta_hat.d();
  const auto distance = [&](const std::vector<std::size_t>& perm) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const auto& a = theta_hat.components[perm[k]];
      const auto& r = reference.components[k];
      acc += (a.mu - r.mu) * (a.mu - r.mu) + (a.gamma - r.gamma) * (a.gamma - r.gamma) +
             (a.sigma - r.sigma) * (a.sigma - r.sigma);
    }
    return std::sqrt(acc);
  };
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  Alignment out;
  out.distance_before = distance(perm);
  out.permutation = perm;
  out.distance_after = out.distance_before;
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double dist = distance(perm);
    if (dist < out.distance_after) {
      out.distance_after = dist;
      out.permutation = perm;
    }
  }
  out.aligned = permute(theta_hat, out.permutation);
  return out;
}

MixtureParams align_permutation(const MixtureParams& theta_hat, const MixtureParams& reference) {
  return align(theta_hat, reference).aligned;
}

}  // namespace hmmix
