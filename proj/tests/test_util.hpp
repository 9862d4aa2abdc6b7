#pragma once

#include <algorithm>
#include <random>

#include <Eigen/Core>

#include "hmmix/dgp.hpp"
#include "hmmix/mixture.hpp"

namespace testutil {

inline hmmix::MixtureParams random_theta(std::mt19937_64& rng, const hmmix::ModelSpec& spec) {
  std::uniform_real_distribution<double> mu(-2.0, 2.0), slope(-1.0, 1.5), sigma(0.5, 2.0), raw(0.2, 1.0);
  hmmix::MixtureParams theta;
  const double shared_mu = mu(rng), shared_slope = slope(rng), shared_sigma = sigma(rng);
  double total = 0.0;
  for (std::size_t s = 0; s < spec.d; ++s) {
    hmmix::Component c;
    c.mu = spec.switching.mu ? mu(rng) : shared_mu;
    c.gamma = spec.switching.slope ? slope(rng) : shared_slope;
    c.sigma = spec.switching.sigma ? sigma(rng) : shared_sigma;
    theta.components.push_back(c);
    theta.weights.push_back(raw(rng));
    total += theta.weights.back();
  }
  for (double& w : theta.weights) w /= total;
  return theta;
}

// Central differences of a scalar function of a vector.
template <class F>
Eigen::VectorXd numeric_gradient(F&& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline hmmix::MixtureParams reference_theta(double w1 = 0.5) {
  const auto dgp = hmmix::HmmDgpParams::reference_design();
  return {dgp.outcomes, {w1, 1.0 - w1}};
}

}  // namespace testutil
