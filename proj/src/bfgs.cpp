#include "hmfpc/bfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

// Internally we minimize phi = -f.
struct Point {
  double step = 0.0;
  double value = 0.0;   // phi
  double slope = 0.0;   // d phi / d step
  Eigen::VectorXd x;
  Eigen::VectorXd grad;  // of phi
};

class LineSearch {
 public:
  LineSearch(const ObjectiveFn& f, const BfgsOptions& opt, int& evaluations)
      : f_(f), opt_(opt), evaluations_(evaluations) {}

  std::optional<Point> evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& dir,
                                double step) const {
    Point pt;
    pt.step = step;
    pt.x = x + step * dir;
    Eigen::VectorXd g(x.size());
    ++evaluations_;
    double value = 0.0;
    try {
      value = f_(pt.x, g);
    } catch (const NumericalError&) {
      return std::nullopt;
    } catch (const NonDifferentiableError&) {
      return std::nullopt;
    }
    if (!std::isfinite(value) || !g.allFinite()) return std::nullopt;
    pt.value = -value;
    pt.grad = -g;
    pt.slope = pt.grad.dot(dir);
    return pt;
  }

  // Strong Wolfe conditions (Nocedal & Wright, algorithms 3.5 and 3.6).
  std::optional<Point> search(const Point& start, const Eigen::VectorXd& dir,
                              double initial_step) const {
    const double c1 = opt_.wolfe_c1;
    const double c2 = opt_.wolfe_c2;
    Point prev = start;
    double step = initial_step;
    for (int i = 0; i < opt_.max_line_search_steps; ++i) {
      auto cur = evaluate(start.x, dir, step);
      if (!cur) {
        // Outside the region where the objective is finite: back off.
        step = 0.5 * (prev.step + step);
        if (step - prev.step < 1e-16 * std::max(1.0, step)) return std::nullopt;
        continue;
      }
      if (cur->value > start.value + c1 * step * start.slope ||
          (i > 0 && cur->value >= prev.value)) {
        return zoom(start, dir, prev, *cur);
      }
      if (std::abs(cur->slope) <= -c2 * start.slope) return cur;
      if (cur->slope >= 0.0) return zoom(start, dir, *cur, prev);
      prev = std::move(*cur);
      step *= 2.0;
    }
    return std::nullopt;
  }

 private:
  std::optional<Point> zoom(const Point& start, const Eigen::VectorXd& dir, Point lo,
                            Point hi) const {
    const double c1 = opt_.wolfe_c1;
    const double c2 = opt_.wolfe_c2;
    for (int i = 0; i < opt_.max_line_search_steps; ++i) {
      const double a = std::min(lo.step, hi.step);
      const double b = std::max(lo.step, hi.step);
      double step = cubic_minimizer(lo, hi);
      const double margin = 0.1 * (b - a);
      if (!std::isfinite(step) || step < a + margin || step > b - margin) {
        step = 0.5 * (lo.step + hi.step);
      }
      if (b - a < 1e-14 * std::max(1.0, b)) break;
      auto cur = evaluate(start.x, dir, step);
      if (!cur) {
        hi.step = step;
        hi.value = std::numeric_limits<double>::infinity();
        hi.slope = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      if (cur->value > start.value + c1 * step * start.slope || cur->value >= lo.value) {
        hi = std::move(*cur);
      } else {
        if (std::abs(cur->slope) <= -c2 * start.slope) return cur;
        if (cur->slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = std::move(*cur);
      }
    }
    // Fall back to the best point with sufficient decrease, if any.
    if (lo.step > 0.0 && lo.value < start.value) return lo;
    return std::nullopt;
  }

  static double cubic_minimizer(const Point& p, const Point& q) {
    if (!std::isfinite(q.value) || !std::isfinite(q.slope) || !std::isfinite(p.slope)) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const double d1 = p.slope + q.slope - 3.0 * (p.value - q.value) / (p.step - q.step);
    const double disc = d1 * d1 - p.slope * q.slope;
    if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), q.step - p.step);
    return q.step - (q.step - p.step) * (q.slope + d2 - d1) / (q.slope - p.slope + 2.0 * d2);
  }

  const ObjectiveFn& f_;
  const BfgsOptions& opt_;
  int& evaluations_;
};

bool gradient_converged(const Point& pt, const BfgsOptions& opt) {
  return pt.grad.lpNorm<Eigen::Infinity>() <
         opt.gradient_tolerance * std::max(1.0, std::abs(pt.value));
}

}  // namespace

BfgsResult maximize_bfgs(const ObjectiveFn& f, Eigen::VectorXd x0, const BfgsOptions& options) {
  BfgsResult result;
  const Eigen::Index n = x0.size();
  LineSearch ls(f, options, result.evaluations);

  Point cur;
  {
    Eigen::VectorXd g(n);
    ++result.evaluations;
    const double value = f(x0, g);
    if (!std::isfinite(value) || !g.allFinite()) {
      throw NumericalError("objective is not finite at the starting point");
    }
    cur.x = std::move(x0);
    cur.value = -value;
    cur.grad = -g;
  }

  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool fresh_metric = true;
  while (true) {
    if (gradient_converged(cur, options)) {
      result.converged = true;
      result.message = "gradient tolerance reached";
      break;
    }
    if (result.iterations >= options.max_iterations) {
      result.message = "iteration limit reached";
      break;
    }

    Eigen::VectorXd dir = -h_inv * cur.grad;
    double slope = dir.dot(cur.grad);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      fresh_metric = true;
      dir = -cur.grad;
      slope = dir.dot(cur.grad);
    }
    Point start = cur;
    start.step = 0.0;
    start.slope = slope;
    const double initial = fresh_metric ? std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>()) : 1.0;
    auto next = ls.search(start, dir, initial);
    if (!next && !fresh_metric) {
      // Retry once along steepest descent with a reset metric.
      h_inv.setIdentity();
      fresh_metric = true;
      dir = -cur.grad;
      start.slope = dir.dot(cur.grad);
      next = ls.search(start, dir, std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>()));
    }
    if (!next) {
      result.message = "line search failed to find an acceptable step";
      break;
    }
    ++result.iterations;

    const Eigen::VectorXd s = next->x - cur.x;
    const Eigen::VectorXd y = next->grad - cur.grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_metric) {
        h_inv *= sy / y.squaredNorm();
        fresh_metric = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      const double yhy = y.dot(hy);
      // H+ = (I - rho s y') H (I - rho y s') + rho s s'
      h_inv += (rho * rho * yhy + rho) * (s * s.transpose()) -
               rho * (hy * s.transpose() + s * hy.transpose());
    }
    cur = std::move(*next);
  }

  result.x = cur.x;
  result.value = -cur.value;
  result.gradient = -cur.grad;
  return result;
}

}  // namespace hmfpc
