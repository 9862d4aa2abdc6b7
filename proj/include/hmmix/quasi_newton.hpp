#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Core>

namespace hmmix {

/// f(x) with optional gradient output.
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  std::size_t max_iter = 500;
  double grad_tol = 1e-6;  // stop once max |grad| <= grad_tol
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::string status;
};

/// Minimises `f` by BFGS on the inverse Hessian with a strong-Wolfe line search.
BfgsResult minimize_bfgs(const SmoothObjective& f, Eigen::VectorXd x0, const BfgsOptions& opts);

}  // namespace hmmix
