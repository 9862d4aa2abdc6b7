#include "hmmix/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "hmmix/errors.hpp"

namespace hmmix {
namespace {

// Smallest value a transition probability may take; keeps rows strictly
// positive when the logit spread underflows exp().
constexpr double kProbFloor = 1e-300;

void check_ar(const ArLaw& law, const char* name, std::vector<std::string>& out) {
  if (!std::isfinite(law.intercept)) out.push_back(std::string(name) + ".intercept not finite");
  if (!(std::abs(law.slope) < 1.0)) out.push_back(std::string(name) + ".slope must satisfy |slope| < 1");
  if (!(law.noise_sd > 0.0) || !std::isfinite(law.noise_sd))
    out.push_back(std::string(name) + ".noise_sd must be > 0");
}

Regime draw_regime(std::span<const double> row, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < row.size(); ++k) {
    acc += row[k];
    if (u < acc) return k;
  }
  return row.size() - 1;
}

enum class Outcome { Hmm, Msar };

Sample simulate(const HmmDgpParams& params, std::size_t T, std::size_t burn_in, Seed seed,
                SimulateOptions opts, Outcome form) {
  if (T == 0) throw DomainError("sample length T must be >= 1");
  params.validate();
  double phi = 0.0;
  if (form == Outcome::Msar) {
    if (!params.ar_coefficient) throw ConfigError("simulate_msar requires ar_coefficient");
    phi = *params.ar_coefficient;
  }

  const std::size_t d = params.regimes();
  Engine y_rng = substream(seed, "outcome-noise");
  Engine z_rng = substream(seed, "z-noise");
  Engine w_rng = substream(seed, "w-noise");
  Engine s_rng = substream(seed, "regime");
  std::normal_distribution<double> e1_dist, e2_dist, e3_dist;
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Cholesky factor of the correlation matrix ordered (U2, U3, U1): U2 and U3
  // are the independent draws, U1 loads on both.
  const double rho = params.noise.rho;
  const double omega = params.noise.omega;
  const double resid_scale = std::sqrt(1.0 - rho * rho - omega * omega);

  const ArLaw& zl = params.z_law;
  const ArLaw& wl = params.w_law;
  double z = zl.stationary_mean() + std::sqrt(zl.stationary_variance()) * e2_dist(z_rng);
  double w = wl.stationary_mean() + std::sqrt(wl.stationary_variance()) * e3_dist(w_rng);
  Regime s = std::min<Regime>(static_cast<Regime>(unif(s_rng) * static_cast<double>(d)), d - 1);
  double y_prev = 0.0;
  if (form == Outcome::Msar && std::abs(phi) < 1.0) {
    double mean_mu = 0.0;
    for (const auto& o : params.outcomes) mean_mu += o.mu;
    y_prev = mean_mu / static_cast<double>(d) / (1.0 - phi);
  }

  Sample out;
  out.y.resize(T);
  out.w.resize(T);
  out.z.resize(T);
  out.s.emplace(T);
  if (opts.keep_noise) {
    out.noise.emplace();
    out.noise->u1.resize(T);
    out.noise->u2.resize(T);
    out.noise->u3.resize(T);
  }

  std::vector<double> row(d);
  const std::size_t total = burn_in + T;
  for (std::size_t step = 0; step < total; ++step) {
    const double e1 = e1_dist(y_rng);
    const double u2 = e2_dist(z_rng);
    const double u3 = e3_dist(w_rng);
    const double u1 = rho * u2 + omega * u3 + resid_scale * e1;

    params.transition.row_into(z, s, row);
    s = draw_regime(row, unif(s_rng));
    z = zl.intercept + zl.slope * z + zl.noise_sd * u2;
    w = wl.intercept + wl.slope * w + wl.noise_sd * u3;

    const RegimeOutcome& o = params.outcomes[s];
    const double y = form == Outcome::Hmm ? o.mu + o.gamma * w + o.sigma * u1
                                          : o.mu + phi * y_prev + o.sigma * u1;
    y_prev = y;

    if (step >= burn_in) {
      const std::size_t t = step - burn_in;
      out.y[t] = y;
      out.w[t] = w;
      out.z[t] = z;
      (*out.s)[t] = s;
      if (opts.keep_noise) {
        out.noise->u1[t] = u1;
        out.noise->u2[t] = u2;
        out.noise->u3[t] = u3;
      }
    }
  }

  char meta[160];
  std::snprintf(meta, sizeof meta, "simulated:%s seed=%llu burn_in=%zu params=%s",
                form == Outcome::Hmm ? "hmm" : "msar", static_cast<unsigned long long>(seed), burn_in,
                params.fingerprint().c_str());
  out.meta = meta;
  return out;
}

}  // namespace

TransitionSpec::TransitionSpec(Eigen::MatrixXd alpha, Eigen::MatrixXd beta)
    : alpha_(std::move(alpha)), beta_(std::move(beta)) {}

TransitionSpec TransitionSpec::two_state(double alpha1, double beta1, double alpha2, double beta2) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = alpha1;
  b(0, 0) = beta1;
  a(1, 1) = alpha2;
  b(1, 1) = beta2;
  return TransitionSpec(std::move(a), std::move(b));
}

std::vector<std::string> TransitionSpec::violations() const {
  std::vector<std::string> out;
  if (alpha_.rows() < 2) out.push_back("transition needs d >= 2 regimes");
  if (alpha_.rows() != alpha_.cols()) out.push_back("transition alpha must be d x d");
  if (beta_.rows() != alpha_.rows() || beta_.cols() != alpha_.cols())
    out.push_back("transition beta must match alpha's shape");
  if (!alpha_.allFinite() || !beta_.allFinite()) out.push_back("transition coefficients must be finite");
  return out;
}

void TransitionSpec::row_into(double z, Regime from, std::span<double> out) const {
  const auto d = static_cast<Eigen::Index>(out.size());
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < d; ++k) {
    out[k] = alpha_(from, k) + beta_(from, k) * z;
    top = std::max(top, out[k]);
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    out[k] = std::exp(out[k] - top);
    total += out[k];
  }
  for (Eigen::Index k = 0; k < d; ++k) out[k] = std::max(out[k] / total, kProbFloor);
}

std::vector<double> transition_row(const TransitionSpec& spec, double z, Regime from) {
  if (!std::isfinite(z)) throw DomainError("transition_row: z must be finite");
  if (from >= spec.regimes()) throw DomainError("transition_row: source regime out of range");
  std::vector<double> row(spec.regimes());
  spec.row_into(z, from, row);
  return row;
}

std::vector<std::string> HmmDgpParams::violations() const {
  std::vector<std::string> out = transition.violations();
  if (outcomes.size() != transition.regimes())
    out.push_back("outcomes length must equal the number of regimes");
  for (std::size_t s = 0; s < outcomes.size(); ++s) {
    const auto& o = outcomes[s];
    const std::string tag = "outcomes[" + std::to_string(s + 1) + "]";
    if (!std::isfinite(o.mu) || !std::isfinite(o.gamma)) out.push_back(tag + " coefficients not finite");
    if (!(o.sigma > 0.0) || !std::isfinite(o.sigma)) out.push_back(tag + ".sigma must be > 0");
  }
  check_ar(z_law, "z_law", out);
  check_ar(w_law, "w_law", out);
  const double r = noise.rho, om = noise.omega;
  if (!(std::abs(r) < 1.0)) out.push_back("noise.rho must lie in (-1, 1)");
  if (!(std::abs(om) < 1.0)) out.push_back("noise.omega must lie in (-1, 1)");
  if (!(r * r + om * om < 1.0)) out.push_back("noise correlation matrix not positive definite (rho^2 + omega^2 >= 1)");
  if (ar_coefficient && !std::isfinite(*ar_coefficient)) out.push_back("ar_coefficient must be finite");
  return out;
}

void HmmDgpParams::validate() const { require_valid(violations()); }

HmmDgpParams HmmDgpParams::reference_design(double rho, double omega) {
  HmmDgpParams p;
  p.outcomes = {{1.0, 0.5, 1.0}, {-1.0, 1.0, 1.0}};
  p.transition = TransitionSpec::two_state(2.0, 0.5, 2.0, -0.5);
  p.z_law = {0.2, 0.8, 1.0};
  p.w_law = {0.2, 0.8, 1.0};
  p.noise = {rho, omega};
  return p;
}

HmmDgpParams HmmDgpParams::reference_msar_design(double rho, double phi) {
  HmmDgpParams p = reference_design(rho, 0.0);
  p.outcomes = {{1.0, 0.0, 1.0}, {-1.0, 0.0, 1.0}};
  p.ar_coefficient = phi;
  return p;
}

std::string HmmDgpParams::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& o : outcomes) {
    mix(o.mu);
    mix(o.gamma);
    mix(o.sigma);
  }
  for (Eigen::Index i = 0; i < transition.alpha().size(); ++i) mix(transition.alpha().data()[i]);
  for (Eigen::Index i = 0; i < transition.beta().size(); ++i) mix(transition.beta().data()[i]);
  for (const ArLaw* l : {&z_law, &w_law}) {
    mix(l->intercept);
    mix(l->slope);
    mix(l->noise_sd);
  }
  mix(noise.rho);
  mix(noise.omega);
  mix(ar_coefficient.value_or(std::numeric_limits<double>::quiet_NaN()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> Sample::violations() const {
  std::vector<std::string> out;
  if (y.empty()) out.push_back("sample is empty");
  if (w.size() != y.size()) out.push_back("w length differs from y");
  if (!z.empty() && z.size() != y.size()) out.push_back("z length differs from y");
  if (s && s->size() != y.size()) out.push_back("s length differs from y");
  return out;
}

Sample simulate_hmm(const HmmDgpParams& params, std::size_t T, std::size_t burn_in, Seed seed,
                    SimulateOptions opts) {
  return simulate(params, T, burn_in, seed, opts, Outcome::Hmm);
}

Sample simulate_msar(const HmmDgpParams& params, std::size_t T, std::size_t burn_in, Seed seed,
                     SimulateOptions opts) {
  if (!params.ar_coefficient) throw ConfigError("simulate_msar requires ar_coefficient");
  return simulate(params, T, burn_in, seed, opts, Outcome::Msar);
}

RegimeChain::RegimeChain(const HmmDgpParams& params, Seed seed)
    : params_(params),
      z_rng_(substream(seed, "z-noise")),
      s_rng_(substream(seed, "regime")),
      uniform_(0.0, 1.0),
      row_(params.regimes()) {
  params.validate();
  const ArLaw& zl = params.z_law;
  z_ = zl.stationary_mean() + std::sqrt(zl.stationary_variance()) * normal_(z_rng_);
  const std::size_t d = params.regimes();
  s_ = std::min<Regime>(static_cast<Regime>(uniform_(s_rng_) * static_cast<double>(d)), d - 1);
}

void RegimeChain::advance() {
  const double u2 = normal_(z_rng_);
  params_.transition.row_into(z_, s_, row_);
  s_ = draw_regime(row_, uniform_(s_rng_));
  const ArLaw& zl = params_.z_law;
  z_ = zl.intercept + zl.slope * z_ + zl.noise_sd * u2;
}

}  // namespace hmmix
