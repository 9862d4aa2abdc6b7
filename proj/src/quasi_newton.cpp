#include "hmmix/quasi_newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hmmix {
namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 0.9;

struct LinePoint {
  double step = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
  Eigen::VectorXd grad;
};

class LineSearch {
 public:
  LineSearch(const SmoothObjective& f, const Eigen::VectorXd& x, const Eigen::VectorXd& dir, std::size_t& evals)
      : f_(f), x_(x), dir_(dir), evals_(evals) {}

  LinePoint eval(double step) {
    LinePoint p;
    p.step = step;
    p.f = f_(x_ + step * dir_, &p.grad);
    ++evals_;
    p.slope = p.grad.dot(dir_);
    if (!std::isfinite(p.f)) {
      p.f = std::numeric_limits<double>::infinity();
      p.slope = std::numeric_limits<double>::infinity();
    }
    return p;
  }

  // Strong-Wolfe search; returns false when no acceptable step was found.
  bool search(const LinePoint& origin, double initial, LinePoint& out) {
    LinePoint prev = origin;
    double step = initial;
    for (int i = 0; i < 30; ++i) {
      LinePoint cur = eval(step);
      if (cur.f > origin.f + kC1 * step * origin.slope || (i > 0 && cur.f >= prev.f))
        return zoom(origin, prev, cur, out);
      if (std::abs(cur.slope) <= -kC2 * origin.slope) {
        out = std::move(cur);
        return true;
      }
      if (cur.slope >= 0.0) return zoom(origin, cur, prev, out);
      prev = std::move(cur);
      step *= 2.0;
    }
    return false;
  }

 private:
  bool zoom(const LinePoint& origin, LinePoint lo, LinePoint hi, LinePoint& out) {
    for (int i = 0; i < 40; ++i) {
      // Cubic interpolation, safeguarded towards bisection.
      double step = 0.5 * (lo.step + hi.step);
      if (std::isfinite(hi.f) && std::isfinite(hi.slope)) {
        const double d1 = lo.slope + hi.slope - 3.0 * (lo.f - hi.f) / (lo.step - hi.step);
        const double disc = d1 * d1 - lo.slope * hi.slope;
        if (disc >= 0.0) {
          const double d2 = std::copysign(std::sqrt(disc), hi.step - lo.step);
          const double cand =
              hi.step - (hi.step - lo.step) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
          const double a = std::min(lo.step, hi.step), b = std::max(lo.step, hi.step);
          const double margin = 0.1 * (b - a);
          if (std::isfinite(cand) && cand > a + margin && cand < b - margin) step = cand;
        }
      }
      LinePoint cur = eval(step);
      if (cur.f > origin.f + kC1 * step * origin.slope || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::abs(cur.slope) <= -kC2 * origin.slope) {
          out = std::move(cur);
          return true;
        }
        if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
      if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
    }
    // Accept a point with sufficient decrease even if curvature failed.
    if (lo.step > 0.0 && lo.f < origin.f) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const SmoothObjective& f_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& dir_;
  std::size_t& evals_;
};

}  // namespace

BfgsResult minimize_bfgs(const SmoothObjective& f, Eigen::VectorXd x0, const BfgsOptions& opts) {
  BfgsResult res;
  const Eigen::Index n = x0.size();
  res.x = std::move(x0);
  res.f = f(res.x, &res.grad);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) {
    res.status = "non-finite objective at the starting point";
    return res;
  }

  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      res.status = "gradient tolerance reached";
      return res;
    }
    Eigen::VectorXd dir = -Hinv * res.grad;
    double slope = dir.dot(res.grad);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      dir = -res.grad;
      slope = -res.grad.squaredNorm();
    }
    // First step is scaled so the trial move has unit length.
    const double initial = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(dir.norm(), 1e-300));

    LineSearch ls(f, res.x, dir, res.evaluations);
    LinePoint origin{0.0, res.f, slope, res.grad};
    LinePoint next;
    if (!ls.search(origin, initial, next)) {
      if (scaled) {
        // Retry once along steepest descent with fresh curvature.
        Hinv.setIdentity();
        scaled = false;
        continue;
      }
      res.status = "line search failed";
      return res;
    }

    const Eigen::VectorXd s = next.step * dir;
    const Eigen::VectorXd y = next.grad - res.grad;
    res.x += s;
    res.f = next.f;
    res.grad = std::move(next.grad);

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        Hinv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * y;
      Hinv += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
  res.status = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

}  // namespace hmmix
