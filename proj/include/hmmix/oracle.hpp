#pragma once

// Independent checks of the robustness result: pseudo-true mixing weights by
// ergodic simulation, Kullback-Leibler dominance of the pseudo-true
// parameter over perturbations, and identifiability diagnostics.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hmmix/density.hpp"
#include "hmmix/dgp.hpp"
#include "hmmix/mixture.hpp"

namespace hmmix {

inline constexpr std::size_t kBatchCount = 50;

struct PseudoTrueResult {
  std::vector<double> weights_star;           // time average of Q(s | Z_t, S_t)
  std::vector<double> mc_error;               // batch-means standard errors
  std::vector<double> occupancy;              // time average of 1{S_t = s}
  std::vector<double> occupancy_mc_error;
  std::vector<RegimeOutcome> outcome_star;    // the DGP's outcome equation
  std::size_t n_sim = 0;
  std::size_t burn_in = 0;

  /// Pseudo-true mixture parameter: DGP outcomes with weights_star.
  MixtureParams theta_star() const;
};

/// Requires n_sim >= 10^4.
PseudoTrueResult pseudo_true_weights(const HmmDgpParams& dgp, std::size_t n_sim, std::size_t burn_in, Seed seed);

struct KlComparison {
  double difference = 0.0;  // M(theta_star) - M(theta)
  double std_error = 0.0;   // batch-means standard error of the paired difference
  double z() const { return std_error > 0.0 ? difference / std_error : (difference == 0.0 ? 0.0 : INFINITY); }
};

struct KlReport {
  double m_star = 0.0;  // M(theta_star), time-average log density on the path
  std::vector<KlComparison> comparisons;
  std::size_t n_sim = 0;
};

/// Estimates M(theta) = E[ln p_theta(Y_1 | W_1)] on one simulated HMM path
/// shared by theta_star and every perturbation.
KlReport kl_check(const HmmDgpParams& dgp, const MixtureParams& theta_star,
                  const std::vector<MixtureParams>& perturbations, std::size_t n_sim, Seed seed);

/// Two-regime perturbation grid: +/-0.25 on mu(1), gamma(2), sigma(1) and
/// weight(1), +/-0.5 on mu(2) and gamma(1).
std::vector<MixtureParams> kl_perturbation_grid(const MixtureParams& theta_star);

struct CfCheckReport {
  std::string family;
  double a1 = 0.0, a2 = 0.0;
  std::vector<double> tau;
  std::vector<double> ratio;  // phi(a1 tau) / phi(a2 tau)
  std::vector<double> log_ratio;
  bool verdict = false;
};

/// Log of the characteristic function of the standardised density at tau.
/// The Student-t value comes from adaptive Gauss-Kronrod quadrature of its
/// Gaussian scale-mixture representation, which has a positive integrand.
double log_characteristic_function(const DensityFamily& family, double tau);

/// Characteristic function by direct quadrature of the cosine transform
/// 2 int_0^inf f(u) cos(tau u) du. Accurate only while the value is well
/// above the quadrature's absolute error; used for cross-checking.
double characteristic_function_cosine(const DensityFamily& family, double tau);

/// Evaluates phi(a1 tau) / phi(a2 tau) on the grid. Verdict: the last ratio
/// is below 1e-8 and the second half of the trace is strictly decreasing.
CfCheckReport cf_ratio_check(const DensityFamily& family, double a1, double a2, const std::vector<double>& tau_grid);

/// Default grid 0.5, 1.0, ..., 20.
std::vector<double> default_tau_grid();

/// Smallest eigenvalue of the Gram matrix int phi_s(y) phi_s'(y) dy of the
/// component densities at regressor value `w_probe`, by the trapezoid rule on
/// `grid` (sorted nodes covering each component mean +/- 10 sd).
double linear_independence_check(const MixtureParams& theta, double w_probe, const std::vector<double>& grid);

/// Uniform grid spanning every component mean +/- 12 sd at `w_probe`.
std::vector<double> gram_grid(const MixtureParams& theta, double w_probe, std::size_t nodes = 4001);

}  // namespace hmmix
