#include "hmmix/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "hmmix/errors.hpp"

namespace hmmix {
namespace {

// Batch-means mean and standard error of a series accumulated batch by batch.
struct BatchMeans {
  explicit BatchMeans(std::size_t n) : n_(n), sums_(kBatchCount, 0.0), counts_(kBatchCount, 0) {}

  void add(std::size_t t, double v) {
    const std::size_t b = std::min(kBatchCount - 1, t * kBatchCount / n_);
    sums_[b] += v;
    ++counts_[b];
  }

  double mean() const {
    double total = 0.0;
    for (double s : sums_) total += s;
    return total / static_cast<double>(n_);
  }

  double std_error() const {
    double m = 0.0;
    for (std::size_t b = 0; b < kBatchCount; ++b) m += sums_[b] / static_cast<double>(counts_[b]);
    m /= static_cast<double>(kBatchCount);
    double ss = 0.0;
    for (std::size_t b = 0; b < kBatchCount; ++b) {
      const double e = sums_[b] / static_cast<double>(counts_[b]) - m;
      ss += e * e;
    }
    return std::sqrt(ss / static_cast<double>(kBatchCount - 1) / static_cast<double>(kBatchCount));
  }

 private:
  std::size_t n_;
  std::vector<double> sums_;
  std::vector<std::size_t> counts_;
};

double mixture_log_density(const MixtureParams& theta, const std::vector<double>& log_w,
                           const std::vector<double>& log_sigma, double y, double w, std::vector<double>& terms) {
  constexpr double kLogRoot2Pi = 0.91893853320467274178;
  for (std::size_t s = 0; s < theta.d(); ++s) {
    const auto& c = theta.components[s];
    const double u = (y - c.mu - c.gamma * w) / c.sigma;
    terms[s] = log_w[s] - kLogRoot2Pi - 0.5 * u * u - log_sigma[s];
  }
  return log_sum_exp(terms);
}

// log E[exp(-kappa / V)], V ~ chi-square(nu), by quadrature over u = log V.
double log_scale_mixture_laplace(double nu, double kappa) {
  if (kappa == 0.0) return 0.0;
  const double log_c = 0.5 * nu * std::log(2.0) + std::lgamma(0.5 * nu);
  const auto logf = [=](double u) { return -kappa * std::exp(-u) + 0.5 * nu * u - 0.5 * std::exp(u) - log_c; };
  // The log-integrand is concave in u with its mode at x^2 - nu x - 2 kappa = 0.
  const double mode = std::log(0.5 * (nu + std::sqrt(nu * nu + 8.0 * kappa)));
  const double peak = logf(mode);
  constexpr double kDrop = 60.0;
  double lo = 1.0, hi = 1.0;
  while (logf(mode - lo) - peak > -kDrop) lo *= 2.0;
  while (logf(mode + hi) - peak > -kDrop) hi *= 2.0;

  using Rule = boost::math::quadrature::gauss_kronrod<double, 61>;
  const auto g = [&](double u) { return std::exp(logf(u) - peak); };
  double err_lo = 0.0, err_hi = 0.0;
  const double integral = Rule::integrate(g, mode - lo, mode, 15, 1e-12, &err_lo) +
                          Rule::integrate(g, mode, mode + hi, 15, 1e-12, &err_hi);
  const double error = err_lo + err_hi;
  if (!(integral > 0.0) || !std::isfinite(integral) || error > 1e-9 * integral)
    throw NumericalError("characteristic-function quadrature did not converge (kappa=" + std::to_string(kappa) +
                         ", estimate=" + std::to_string(integral) + ", error=" + std::to_string(error) + ")");
  return peak + std::log(integral);
}

}  // namespace

MixtureParams PseudoTrueResult::theta_star() const {
  MixtureParams theta;
  theta.components = outcome_star;
  theta.weights = weights_star;
  double total = 0.0;
  for (double w : theta.weights) total += w;
  for (double& w : theta.weights) w /= total;
  return theta;
}

PseudoTrueResult pseudo_true_weights(const HmmDgpParams& dgp, std::size_t n_sim, std::size_t burn_in, Seed seed) {
  if (n_sim < 10000) throw DomainError("pseudo_true_weights needs n_sim >= 10^4");
  dgp.validate();
  const std::size_t d = dgp.regimes();
  RegimeChain chain(dgp, seed);
  for (std::size_t i = 0; i < burn_in; ++i) chain.advance();

  std::vector<BatchMeans> rb(d, BatchMeans(n_sim)), occ(d, BatchMeans(n_sim));
  std::vector<double> row(d);
  for (std::size_t t = 0; t < n_sim; ++t) {
    chain.advance();
    dgp.transition.row_into(chain.z(), chain.s(), row);
    for (std::size_t s = 0; s < d; ++s) {
      rb[s].add(t, row[s]);
      occ[s].add(t, chain.s() == s ? 1.0 : 0.0);
    }
  }

  PseudoTrueResult out;
  out.n_sim = n_sim;
  out.burn_in = burn_in;
  out.outcome_star = dgp.outcomes;
  for (std::size_t s = 0; s < d; ++s) {
    out.weights_star.push_back(rb[s].mean());
    out.mc_error.push_back(rb[s].std_error());
    out.occupancy.push_back(occ[s].mean());
    out.occupancy_mc_error.push_back(occ[s].std_error());
  }
  return out;
}

KlReport kl_check(const HmmDgpParams& dgp, const MixtureParams& theta_star,
                  const std::vector<MixtureParams>& perturbations, std::size_t n_sim, Seed seed) {
  dgp.validate();
  theta_star.validate();
  for (const auto& p : perturbations) {
    p.validate();
    if (p.d() != theta_star.d()) throw ValidationError({"perturbation has the wrong number of components"});
  }
  if (n_sim < kBatchCount * 2) throw DomainError("kl_check needs a longer path");
  const Sample path = simulate_hmm(dgp, n_sim, kDefaultBurnIn, seed);

  const auto logs = [](const MixtureParams& th) {
    std::vector<double> lw(th.d()), ls(th.d());
    for (std::size_t s = 0; s < th.d(); ++s) {
      lw[s] = std::log(th.weights[s]);
      ls[s] = std::log(th.components[s].sigma);
    }
    return std::pair{lw, ls};
  };
  std::vector<double> terms(theta_star.d());
  std::vector<double> base(n_sim);
  const auto [lw_star, ls_star] = logs(theta_star);
  double m_star = 0.0;
  for (std::size_t t = 0; t < n_sim; ++t) {
    base[t] = mixture_log_density(theta_star, lw_star, ls_star, path.y[t], path.w[t], terms);
    m_star += base[t];
  }

  KlReport report;
  report.n_sim = n_sim;
  report.m_star = m_star / static_cast<double>(n_sim);
  for (const auto& p : perturbations) {
    const auto [lw, ls] = logs(p);
    BatchMeans diff(n_sim);
    for (std::size_t t = 0; t < n_sim; ++t)
      diff.add(t, base[t] - mixture_log_density(p, lw, ls, path.y[t], path.w[t], terms));
    report.comparisons.push_back({diff.mean(), diff.std_error()});
  }
  return report;
}

std::vector<MixtureParams> kl_perturbation_grid(const MixtureParams& theta_star) {
  if (theta_star.d() != 2) throw DomainError("the perturbation grid is defined for two regimes");
  std::vector<MixtureParams> grid;
  const auto shifted = [&](auto&& edit) {
    MixtureParams p = theta_star;
    edit(p);
    grid.push_back(std::move(p));
  };
  for (double sign : {1.0, -1.0}) {
    shifted([&](MixtureParams& p) { p.components[0].mu += sign * 0.25; });
    shifted([&](MixtureParams& p) { p.components[1].gamma += sign * 0.25; });
    shifted([&](MixtureParams& p) { p.components[0].sigma += sign * 0.25; });
    shifted([&](MixtureParams& p) {
      p.weights[0] += sign * 0.25;
      p.weights[1] = 1.0 - p.weights[0];
    });
    shifted([&](MixtureParams& p) { p.components[1].mu += sign * 0.5; });
    shifted([&](MixtureParams& p) { p.components[0].gamma += sign * 0.5; });
  }
  return grid;
}

double log_characteristic_function(const DensityFamily& family, double tau) {
  if (!std::isfinite(tau)) throw DomainError("characteristic function argument must be finite");
  if (family.kind() == DensityFamily::Kind::Gaussian) return -0.5 * tau * tau;
  // X = c T_nu with T_nu = N / sqrt(V / nu), so phi_X(tau) = E exp(-c^2 nu tau^2 / (2 V)).
  const double nu = family.nu();
  const double kappa = 0.5 * (nu - 2.0) * tau * tau;
  return log_scale_mixture_laplace(nu, kappa);
}

double characteristic_function_cosine(const DensityFamily& family, double tau) {
  if (tau == 0.0) return 1.0;
  const auto f = [&family](double u) { return std::exp(family.log_pdf(u)); };
  boost::math::quadrature::ooura_fourier_cos<double> integrator;
  const auto [value, rel_error] = integrator.integrate(f, std::abs(tau));
  (void)rel_error;
  return 2.0 * value;
}

CfCheckReport cf_ratio_check(const DensityFamily& family, double a1, double a2, const std::vector<double>& tau_grid) {
  if (!(a2 > 0.0) || !(a1 > a2) || !std::isfinite(a1))
    throw DomainError("cf_ratio_check requires a1 > a2 > 0");
  if (tau_grid.empty()) throw DomainError("cf_ratio_check needs a non-empty tau grid");
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    if (!std::isfinite(tau_grid[i]) || tau_grid[i] < 0.0) throw DomainError("tau grid entries must be finite and >= 0");
    if (i > 0 && !(tau_grid[i] > tau_grid[i - 1])) throw DomainError("tau grid must be strictly increasing");
  }

  CfCheckReport report;
  report.family = family.name();
  report.a1 = a1;
  report.a2 = a2;
  report.tau = tau_grid;
  for (double tau : tau_grid) {
    const double lr = log_characteristic_function(family, a1 * tau) - log_characteristic_function(family, a2 * tau);
    report.log_ratio.push_back(lr);
    report.ratio.push_back(std::exp(lr));
  }
  bool decreasing = true;
  const auto& lr = report.log_ratio;
  for (std::size_t i = lr.size() / 2 + 1; i < lr.size(); ++i) decreasing = decreasing && lr[i] < lr[i - 1];
  report.verdict = decreasing && report.ratio.back() < 1e-8;
  return report;
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 40; ++i) grid.push_back(0.5 * i);
  return grid;
}

double linear_independence_check(const MixtureParams& theta, double w_probe, const std::vector<double>& grid) {
  theta.validate();
  if (grid.size() < 3) throw DomainError("Gram grid needs at least three nodes");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i])) throw DomainError("Gram grid has non-finite nodes");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw DomainError("Gram grid must be strictly increasing");
  }
  const std::size_t d = theta.d();
  for (const auto& c : theta.components) {
    const double m = c.mu + c.gamma * w_probe;
    if (grid.front() > m - 10.0 * c.sigma || grid.back() < m + 10.0 * c.sigma)
      throw DomainError("Gram grid does not span +/- 10 standard deviations around every component");
  }

  const std::size_t n = grid.size();
  std::vector<double> weights(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = 0.5 * (grid[i + 1] - grid[i]);
    weights[i] += h;
    weights[i + 1] += h;
  }
  Eigen::MatrixXd dens(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t s = 0; s < d; ++s) {
    const auto& c = theta.components[s];
    const double m = c.mu + c.gamma * w_probe;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (grid[i] - m) / c.sigma;
      dens(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) =
          std::exp(-0.5 * u * u) / (c.sigma * std::sqrt(2.0 * std::numbers::pi));
    }
  }
  const Eigen::Map<const Eigen::VectorXd> wv(weights.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd gram = dens.transpose() * wv.asDiagonal() * dens;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

std::vector<double> gram_grid(const MixtureParams& theta, double w_probe, std::size_t nodes) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : theta.components) {
    const double m = c.mu + c.gamma * w_probe;
    lo = std::min(lo, m - 12.0 * c.sigma);
    hi = std::max(hi, m + 12.0 * c.sigma);
  }
  std::vector<double> grid(std::max<std::size_t>(nodes, 3));
  for (std::size_t i = 0; i < grid.size(); ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
  return grid;
}

}  // namespace hmmix
