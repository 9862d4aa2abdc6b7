#include "hmmix/inference.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "hmmix/errors.hpp"

namespace hmmix {

Bandwidth Bandwidth::parse(const std::string& text) {
  if (text == "auto") return plug_in();
  std::size_t used = 0;
  double v = -1.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v >= 0.0) || !std::isfinite(v))
    throw ConfigError("bandwidth must be 'auto' or a non-negative number, got '" + text + "'");
  return fixed(v);
}

std::vector<std::string> HacConfig::violations() const {
  std::vector<std::string> out;
  if (!bandwidth.automatic && !(bandwidth.value >= 0.0)) out.push_back("fixed bandwidth must be >= 0");
  return out;
}

double parzen_weight(double x) {
  const double a = std::abs(x);
  if (a <= 0.5) return 1.0 - 6.0 * a * a + 6.0 * a * a * a;
  if (a <= 1.0) {
    const double b = 1.0 - a;
    return 2.0 * b * b * b;
  }
  return 0.0;
}

double kernel_weight(KernelKind kernel, double x) {
  switch (kernel) {
    case KernelKind::Parzen:
      return parzen_weight(x);
  }
  return 0.0;
}

AndrewsResult andrews_plug_in(const Eigen::MatrixXd& scores) {
  const Eigen::Index T = scores.rows(), q = scores.cols();
  if (T < 10) throw DomainError("plug-in bandwidth needs at least 10 observations");
  AndrewsResult out;
  out.rho.assign(q, 0.0);
  out.sigma2.assign(q, 0.0);
  out.used.assign(q, false);
  double num = 0.0, den = 0.0;
  for (Eigen::Index a = 0; a < q; ++a) {
    const auto col = scores.col(a);
    double sxx = 0.0, sxy = 0.0;
    for (Eigen::Index t = 1; t < T; ++t) {
      sxx += col[t - 1] * col[t - 1];
      sxy += col[t] * col[t - 1];
    }
    const double mean = col.mean();
    const double var = (col.array() - mean).square().mean();
    if (!(sxx > 0.0) || !(var > 1e-300)) continue;
    const double rho = std::clamp(sxy / sxx, -0.97, 0.97);
    double ssr = 0.0;
    for (Eigen::Index t = 1; t < T; ++t) {
      const double e = col[t] - rho * col[t - 1];
      ssr += e * e;
    }
    const double s2 = ssr / static_cast<double>(T - 1);
    out.rho[a] = rho;
    out.sigma2[a] = s2;
    out.used[a] = true;
    const double s4 = s2 * s2;
    num += 4.0 * rho * rho * s4 / std::pow(1.0 - rho, 8);
    den += s4 / std::pow(1.0 - rho, 4);
  }
  if (!(den > 0.0)) throw DomainError("plug-in bandwidth: every score column is degenerate");
  out.alpha2 = num / den;
  out.bandwidth = 2.6614 * std::pow(out.alpha2 * static_cast<double>(T), 0.2);
  return out;
}

double andrews_bandwidth(const Eigen::MatrixXd& scores) { return andrews_plug_in(scores).bandwidth; }

namespace {

// Gamma_j = T^{-1} sum_{t > j} g_t g_{t-j}', accumulated in ascending t.
Eigen::MatrixXd lag_covariance(const Eigen::MatrixXd& g, Eigen::Index lag) {
  const Eigen::Index T = g.rows(), q = g.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index t = lag; t < T; ++t)
    for (Eigen::Index b = 0; b < q; ++b) {
      const double gb = g(t - lag, b);
      for (Eigen::Index a = 0; a < q; ++a) out(a, b) += g(t, a) * gb;
    }
  return out / static_cast<double>(T);
}

}  // namespace

HacResult hac_middle(const Eigen::MatrixXd& scores, const HacConfig& cfg) {
  require_valid(cfg.violations());
  const Eigen::Index T = scores.rows();
  if (T < 2) throw DomainError("HAC estimate needs at least two observations");
  Eigen::MatrixXd g = scores;
  if (cfg.demean_scores) g.rowwise() -= g.colwise().mean();

  HacResult out;
  out.bandwidth = cfg.bandwidth.automatic ? andrews_bandwidth(g) : cfg.bandwidth.value;
  if (out.bandwidth >= static_cast<double>(T)) {
    out.bandwidth = static_cast<double>(T - 1);
    out.truncated = true;
    out.warnings.push_back("bandwidth truncated to T - 1");
  }
  out.lags = static_cast<std::size_t>(std::floor(out.bandwidth));

  out.middle = lag_covariance(g, 0);
  for (std::size_t j = 1; j <= out.lags; ++j) {
    const double k = kernel_weight(cfg.kernel, static_cast<double>(j) / out.bandwidth);
    if (k == 0.0) continue;
    const Eigen::MatrixXd gamma = lag_covariance(g, static_cast<Eigen::Index>(j));
    out.middle += k * (gamma + gamma.transpose());
  }
  if (out.lags == 0) return out;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.middle);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    const Eigen::VectorXd floored = eig.eigenvalues().cwiseMax(0.0);
    out.middle = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
    out.middle = (0.5 * (out.middle + out.middle.transpose())).eval();
    out.psd_floored = true;
    out.warnings.push_back("HAC matrix had negative eigenvalues; floored at zero");
  }
  return out;
}

SandwichResult sandwich_cov(const Eigen::VectorXd& theta_free, const MixtureObjective& objective,
                            const HacConfig& cfg) {
  const ModelSpec& spec = objective.spec();
  const Eigen::MatrixXd A = objective.hessian(theta_free);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  const double cond = sv.minCoeff() > 0.0 ? sv.maxCoeff() / sv.minCoeff() : INFINITY;
  if (!(cond <= 1e12))
    throw NumericalError("Hessian is numerically singular (condition number " + std::to_string(cond) +
                         "); check convergence and degenerate components");

  SandwichResult out;
  out.hessian_condition = cond;
  out.hac = hac_middle(objective.score_contributions(theta_free), cfg);
  const Eigen::MatrixXd Ainv = A.inverse();
  const double T = static_cast<double>(objective.data().size());
  out.covariance_free = Ainv * out.hac.middle * Ainv.transpose() / T;
  out.covariance_free = (0.5 * (out.covariance_free + out.covariance_free.transpose())).eval();

  const Eigen::MatrixXd J = natural_jacobian(theta_free, spec);
  out.covariance = J * out.covariance_free * J.transpose();
  out.covariance = (0.5 * (out.covariance + out.covariance.transpose())).eval();
  out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.names = natural_parameter_names(spec);
  return out;
}

SandwichResult sandwich_cov(const Eigen::VectorXd& theta_free, const Sample& sample, const ModelSpec& spec,
                            const HacConfig& cfg) {
  const MixtureObjective objective(regression_data(sample, spec), spec);
  return sandwich_cov(theta_free, objective, cfg);
}

SandwichResult attach_sandwich(EstimationResult& result, const Sample& sample, const ModelSpec& spec,
                               const HacConfig& cfg) {
  SandwichResult s = sandwich_cov(result.theta_free, sample, spec, cfg);
  result.covariance = s.covariance;
  result.std_errors = s.std_errors;
  for (const auto& w : s.hac.warnings) result.notes.push_back(w);
  return s;
}

}  // namespace hmmix
