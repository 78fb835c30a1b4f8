#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace hmfpc {

struct BfgsOptions {
  /// Converged when ||grad||_inf < gradient_tolerance * max(1, |f|).
  double gradient_tolerance = 1e-6;
  int max_iterations = 500;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  int max_line_search_steps = 40;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Returns f(x) and writes the gradient into `grad`.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Maximizes `f` by BFGS with a strong-Wolfe line search (bracketing and
/// cubic-interpolation zoom). Accepted steps never decrease f.
BfgsResult maximize_bfgs(const ObjectiveFn& f, Eigen::VectorXd x0,
                         const BfgsOptions& options = {});

}  // namespace hmfpc
