#pragma once

// Misspecification-robust covariance: A^{-1} B A^{-1} / T with A the Hessian
// of the average quasi-log-likelihood and B a Parzen-kernel HAC estimate of
// the long-run variance of the per-observation scores.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hmmix/dgp.hpp"
#include "hmmix/estimator.hpp"
#include "hmmix/mixture.hpp"

namespace hmmix {

enum class KernelKind { Parzen };

struct Bandwidth {
  bool automatic = true;
  double value = 0.0;  // used when !automatic

  static Bandwidth plug_in() { return {true, 0.0}; }
  static Bandwidth fixed(double v) { return {false, v}; }
  /// "auto" or a non-negative number.
  static Bandwidth parse(const std::string& text);
};

struct HacConfig {
  KernelKind kernel = KernelKind::Parzen;
  Bandwidth bandwidth;
  bool demean_scores = true;

  std::vector<std::string> violations() const;
};

double parzen_weight(double x);
double kernel_weight(KernelKind kernel, double x);

struct AndrewsResult {
  double bandwidth = 0.0;
  double alpha2 = 0.0;
  std::vector<double> rho;     // AR(1) coefficient per column (after clamping)
  std::vector<double> sigma2;  // innovation variance per column
  std::vector<bool> used;      // false for zero-variance columns
};

/// Plug-in bandwidth from AR(1) approximations to each score column, unit
/// weights: S_T = 2.6614 (alpha(2) T)^{1/5}. The columns are used as given.
AndrewsResult andrews_plug_in(const Eigen::MatrixXd& scores);
double andrews_bandwidth(const Eigen::MatrixXd& scores);

struct HacResult {
  Eigen::MatrixXd middle;
  double bandwidth = 0.0;
  std::size_t lags = 0;
  bool truncated = false;   // bandwidth was cut back to T - 1
  bool psd_floored = false; // negative eigenvalues were set to zero
  std::vector<std::string> warnings;
};

/// B = Gamma_0 + sum_{j=1}^{floor(S_T)} k(j / S_T) (Gamma_j + Gamma_j').
HacResult hac_middle(const Eigen::MatrixXd& scores, const HacConfig& cfg);

struct SandwichResult {
  Eigen::MatrixXd covariance_free;  // on the free parameterisation
  Eigen::MatrixXd covariance;       // natural scale, delta method
  Eigen::VectorXd std_errors;       // natural scale
  std::vector<std::string> names;
  double hessian_condition = 0.0;
  HacResult hac;
};

/// Throws NumericalError when the Hessian's condition number exceeds 1e12.
SandwichResult sandwich_cov(const Eigen::VectorXd& theta_free, const Sample& sample, const ModelSpec& spec,
                            const HacConfig& cfg);
SandwichResult sandwich_cov(const Eigen::VectorXd& theta_free, const MixtureObjective& objective,
                            const HacConfig& cfg);

/// Fills result.covariance and result.std_errors from sandwich_cov.
SandwichResult attach_sandwich(EstimationResult& result, const Sample& sample, const ModelSpec& spec,
                               const HacConfig& cfg);

}  // namespace hmmix
