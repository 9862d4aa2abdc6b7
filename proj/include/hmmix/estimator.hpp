#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hmmix/errors.hpp"
#include "hmmix/mixture.hpp"
#include "hmmix/rng.hpp"

namespace hmmix {

struct EstimatorConfig {
  std::size_t n_starts = 8;
  std::size_t em_max_iter = 2000;
  double em_tol = 1e-10;  // stop EM once the average log-likelihood gains less than this
  std::size_t qn_max_iter = 500;
  double qn_grad_tol = 1e-6;  // max |score| accepted as an approximate maximiser
  double sigma_floor = 1e-6;
  Seed seed = 20240917;

  std::vector<std::string> violations() const;
  void validate() const;
};

struct EmResult {
  MixtureParams theta;
  double loglik = 0.0;
  std::vector<double> loglik_trace;  // log-likelihood before the first and after every iteration
  std::size_t iterations = 0;
  bool converged = false;   // em_tol reached before em_max_iter
  bool degenerate = false;  // a component collapsed or hit the sigma floor
  std::size_t reseeds = 0;
  std::vector<std::size_t> reseed_iterations;  // trace indices where a re-seed broke monotonicity
  std::vector<std::string> notes;
};

/// Expectation-maximisation for the mixture regression. Each iteration
/// computes responsibilities, then solves one stacked weighted least-squares
/// problem for all intercepts and slopes (weights r_ts / sigma_s^2), then
/// updates the scales and mixing weights. A component whose total
/// responsibility drops below 1e-8 * n is re-seeded once and abandoned on a
/// second collapse.
EmResult em_fit(const Sample& sample, const ModelSpec& spec, const MixtureParams& init,
                const EstimatorConfig& cfg);
EmResult em_fit(const MixtureObjective& objective, const MixtureParams& init, const EstimatorConfig& cfg,
                Engine* reseed_rng = nullptr);

struct StartDiagnostic {
  std::size_t index = 0;
  double loglik = 0.0;
  std::size_t iterations = 0;
  bool degenerate = false;
  std::vector<std::string> notes;
};

struct EstimationResult {
  MixtureParams theta_hat;  // components sorted by ascending mu
  Eigen::VectorXd theta_free;
  double loglik = 0.0;
  bool converged = false;
  double max_abs_score = 0.0;
  std::size_t em_iterations = 0;
  std::size_t qn_iterations = 0;
  std::size_t start_index = 0;
  bool degenerate = false;
  std::vector<StartDiagnostic> starts;
  std::optional<Eigen::MatrixXd> covariance;  // natural scale
  std::optional<Eigen::VectorXd> std_errors;  // natural scale
  std::vector<std::string> notes;
};

class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, std::vector<StartDiagnostic> starts)
      : Error("estimation", what), starts_(std::move(starts)) {}
  const std::vector<StartDiagnostic>& starts() const noexcept { return starts_; }

 private:
  std::vector<StartDiagnostic> starts_;
};

/// Multi-start EM followed by BFGS refinement of the best start on the free
/// parameterisation. Throws EstimationError if every start degenerates.
EstimationResult qml_estimate(const Sample& sample, const ModelSpec& spec, const EstimatorConfig& cfg);

/// Deterministic starting value for start `index`; index 0 is un-jittered.
MixtureParams initial_guess(const RegressionData& data, const ModelSpec& spec, std::size_t index, Seed seed);

struct Alignment {
  MixtureParams aligned;
  std::vector<std::size_t> permutation;  // aligned[k] = theta_hat[permutation[k]]
  double distance_before = 0.0;
  double distance_after = 0.0;
};

/// Relabels components to minimise the Euclidean distance of the stacked
/// (mu, gamma, sigma) blocks to `reference`, searching all d! permutations.
Alignment align(const MixtureParams& theta_hat, const MixtureParams& reference);
MixtureParams align_permutation(const MixtureParams& theta_hat, const MixtureParams& reference);

/// Components (and weights) sorted by ascending mu, ties by gamma then sigma.
MixtureParams sort_by_mu(const MixtureParams& theta);

}  // namespace hmmix
