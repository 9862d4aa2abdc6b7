#pragma once

// Data-generating processes: a two-covariate hidden Markov model whose regime
// transitions depend on a lagged information variable Z, and its
// Markov-switching autoregressive variant.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hmmix/rng.hpp"

namespace hmmix {

/// Regime index, zero-based. Files and the CLI use one-based labels.
using Regime = std::size_t;

struct RegimeOutcome {
  double mu = 0.0;     // intercept
  double gamma = 0.0;  // slope on the regressor
  double sigma = 1.0;  // noise scale
};

/// Multinomial-logit transition law. Row `from` at information value z is
/// softmax_k(alpha(from, k) + beta(from, k) * z). With two regimes and the
/// off-diagonal coefficients pinned at zero this is the logistic stay
/// probability 1 / (1 + exp(-alpha_s - beta_s z)).
class TransitionSpec {
 public:
  TransitionSpec() = default;
  TransitionSpec(Eigen::MatrixXd alpha, Eigen::MatrixXd beta);

  /// Two-state logistic law parameterised by stay coefficients.
  static TransitionSpec two_state(double alpha1, double beta1, double alpha2, double beta2);

  std::size_t regimes() const { return static_cast<std::size_t>(alpha_.rows()); }
  const Eigen::MatrixXd& alpha() const { return alpha_; }
  const Eigen::MatrixXd& beta() const { return beta_; }

  std::vector<std::string> violations() const;

  /// Writes the transition row into `out` (size regimes()). No validation.
  void row_into(double z, Regime from, std::span<double> out) const;

 private:
  Eigen::MatrixXd alpha_;
  Eigen::MatrixXd beta_;
};

/// Q(. | z, from). Throws DomainError for non-finite z or out-of-range `from`.
std::vector<double> transition_row(const TransitionSpec& spec, double z, Regime from);

struct ArLaw {
  double intercept = 0.0;
  double slope = 0.0;
  double noise_sd = 1.0;

  double stationary_mean() const { return intercept / (1.0 - slope); }
  double stationary_variance() const { return noise_sd * noise_sd / (1.0 - slope * slope); }
};

/// Correlations of the outcome noise U1 with the Z noise (rho) and the W noise
/// (omega). U2 and U3 are uncorrelated.
struct NoiseCorrelation {
  double rho = 0.0;
  double omega = 0.0;
};

struct HmmDgpParams {
  std::vector<RegimeOutcome> outcomes;
  TransitionSpec transition;
  ArLaw z_law;
  ArLaw w_law;
  NoiseCorrelation noise;
  std::optional<double> ar_coefficient;

  std::size_t regimes() const { return outcomes.size(); }
  std::vector<std::string> violations() const;
  void validate() const;

  /// Design used throughout the Monte Carlo experiments: two regimes with
  /// alpha = 2, beta = (0.5, -0.5), mu = (1, -1), gamma = (0.5, 1), unit
  /// scales and AR(1) laws (0.2, 0.8, 1) for both Z and W.
  static HmmDgpParams reference_design(double rho = 0.0, double omega = 0.0);
  /// reference_design with the outcome replaced by mu(S) + phi Y_{t-1}.
  static HmmDgpParams reference_msar_design(double rho = 0.0, double phi = 0.9);

  /// Stable fingerprint of every parameter, recorded in Sample::meta.
  std::string fingerprint() const;
};

struct NoiseDraws {
  std::vector<double> u1, u2, u3;
};

struct Sample {
  std::vector<double> y;
  std::vector<double> w;
  std::vector<double> z;                 // empty when not observed
  std::optional<std::vector<Regime>> s;  // hidden path, zero-based
  std::optional<NoiseDraws> noise;       // only with SimulateOptions::keep_noise
  std::string meta;

  std::size_t size() const { return y.size(); }
  bool has_z() const { return !z.empty(); }
  std::vector<std::string> violations() const;
};

inline constexpr std::size_t kDefaultBurnIn = 500;

struct SimulateOptions {
  bool keep_noise = false;
};

/// Y_t = mu(S_t) + gamma(S_t) W_t + sigma(S_t) U1_t.
Sample simulate_hmm(const HmmDgpParams& params, std::size_t T, std::size_t burn_in, Seed seed,
                    SimulateOptions opts = {});

/// Y_t = mu(S_t) + phi Y_{t-1} + sigma(S_t) U1_t, requires params.ar_coefficient.
Sample simulate_msar(const HmmDgpParams& params, std::size_t T, std::size_t burn_in, Seed seed,
                     SimulateOptions opts = {});

/// The (Z, S) chain on its own. Uses the same sub-streams and initial law as
/// the full simulators, so for equal seeds it reproduces their Z and S paths.
class RegimeChain {
 public:
  RegimeChain(const HmmDgpParams& params, Seed seed);
  void advance();
  double z() const { return z_; }
  Regime s() const { return s_; }

 private:
  HmmDgpParams params_;
  Engine z_rng_;
  Engine s_rng_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
  std::vector<double> row_;
  double z_ = 0.0;
  Regime s_ = 0;
};

}  // namespace hmmix
