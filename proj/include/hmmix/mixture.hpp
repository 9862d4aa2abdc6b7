#pragma once

// The postulated i.i.d.-regime mixture regression
//
//   Y_t = mu(S_t) + gamma(S_t) X_t + sigma(S_t) eps_t,  Pr(S_t = s) = weight_s,
//
// where the regressor X_t is W_t (HMM form) or Y_{t-1} (MSAR form), together
// with its average quasi-log-likelihood and derivatives on an unconstrained
// parameterisation.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hmmix/density.hpp"
#include "hmmix/dgp.hpp"

namespace hmmix {

enum class OutcomeForm { Hmm, Msar };

/// Which coefficient blocks vary by regime. A shared block has one free
/// coordinate and the same value in every component.
struct SwitchingFlags {
  bool mu = true;
  bool slope = true;
  bool sigma = true;
};

struct ModelSpec {
  std::size_t d = 2;
  OutcomeForm form = OutcomeForm::Hmm;
  SwitchingFlags switching;

  /// Intercept and W-slope per regime.
  static ModelSpec hmm(std::size_t d);
  /// Intercept and scale per regime, lag coefficient shared.
  static ModelSpec msar(std::size_t d);

  std::vector<std::string> violations() const;
  void validate() const;
};

using Component = RegimeOutcome;

struct MixtureParams {
  std::vector<Component> components;
  std::vector<double> weights;

  std::size_t d() const { return components.size(); }
  std::vector<std::string> violations() const;
  void validate() const;
  /// Also checks that blocks the model declares shared are equal across components.
  void validate(const ModelSpec& spec) const;
};

/// Permutes components and weights together: result[k] = theta[perm[k]].
MixtureParams permute(const MixtureParams& theta, const std::vector<std::size_t>& perm);

/// Regression view of a sample: responses and the form's regressor. The MSAR
/// form drops the first observation and conditions on it.
struct RegressionData {
  std::vector<double> y;
  std::vector<double> x;
  std::size_t size() const { return y.size(); }
};

RegressionData regression_data(const Sample& sample, const ModelSpec& spec);

inline constexpr double kSigmaMin = 1e-6;
inline constexpr double kSigmaMax = 1e6;
inline constexpr double kLogitBound = 300.0;

/// Coordinate layout of the free vector: [mu block][slope block]
/// [log-sigma block][weight logits]. A switching block has d entries, a
/// shared block one. Weight logits are anchored at the last component, so
/// there are d - 1 of them.
class FreeLayout {
 public:
  explicit FreeLayout(const ModelSpec& spec);

  std::size_t dim() const { return dim_; }
  std::size_t regimes() const { return d_; }
  std::size_t mu_index(std::size_t s) const { return mu_ + (mu_switch_ ? s : 0); }
  std::size_t slope_index(std::size_t s) const { return slope_ + (slope_switch_ ? s : 0); }
  std::size_t log_sigma_index(std::size_t s) const { return sigma_ + (sigma_switch_ ? s : 0); }
  std::size_t logit_index(std::size_t s) const { return logit_ + s; }  // s < d - 1
  std::size_t logit_offset() const { return logit_; }

 private:
  std::size_t d_, mu_, slope_, sigma_, logit_, dim_;
  bool mu_switch_, slope_switch_, sigma_switch_;
};

Eigen::VectorXd encode(const MixtureParams& theta, const ModelSpec& spec);
/// Always yields valid parameters: log-sigma is clamped to
/// [log kSigmaMin, log kSigmaMax] and logits to [-kLogitBound, kLogitBound].
MixtureParams decode(const Eigen::VectorXd& free, const ModelSpec& spec);

/// Natural-scale parameter vector [mu block][slope block][sigma block]
/// [all d weights], with matching display names such as "mu(1)" or "phi".
Eigen::VectorXd natural_parameters(const MixtureParams& theta, const ModelSpec& spec);
std::vector<std::string> natural_parameter_names(const ModelSpec& spec);
/// d natural / d free, size (natural dim) x (free dim).
Eigen::MatrixXd natural_jacobian(const Eigen::VectorXd& free, const ModelSpec& spec);

/// log of the component density at (y, x): log f((y - mu - gamma x) / sigma) - log sigma.
double component_logdensity(double y, double x, const Component& comp,
                            const DensityFamily& f = DensityFamily::gaussian());

/// Average quasi-log-likelihood and its derivatives for one data set.
class MixtureObjective {
 public:
  MixtureObjective(RegressionData data, ModelSpec spec,
                   DensityFamily density = DensityFamily::gaussian());

  const RegressionData& data() const { return data_; }
  const ModelSpec& spec() const { return spec_; }
  std::size_t dim() const { return layout_.dim(); }

  double loglik(const MixtureParams& theta) const;
  double loglik(const Eigen::VectorXd& free) const { return loglik(decode(free, spec_)); }
  /// Average quasi-log-likelihood; fills the analytic gradient when asked.
  double value_and_score(const Eigen::VectorXd& free, Eigen::VectorXd* score) const;
  Eigen::VectorXd score(const Eigen::VectorXd& free) const;
  /// Row t is the gradient of the t-th log-likelihood summand.
  Eigen::MatrixXd score_contributions(const Eigen::VectorXd& free) const;
  /// Central differences of the analytic score, symmetrised.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& free) const;

 private:
  RegressionData data_;
  ModelSpec spec_;
  DensityFamily density_;
  FreeLayout layout_;
};

double quasi_loglik(const MixtureParams& theta, const Sample& sample, const ModelSpec& spec);
Eigen::VectorXd score(const Eigen::VectorXd& free, const Sample& sample, const ModelSpec& spec);
Eigen::MatrixXd score_contributions(const Eigen::VectorXd& free, const Sample& sample,
                                    const ModelSpec& spec);
Eigen::MatrixXd hessian(const Eigen::VectorXd& free, const Sample& sample, const ModelSpec& spec);

/// log sum_k exp(terms[k]); the terms are summed in sorted order so the result
/// does not depend on their arrangement.
double log_sum_exp(std::vector<double>& terms);

}  // namespace hmmix
