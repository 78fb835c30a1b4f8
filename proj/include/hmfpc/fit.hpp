#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/bfgs.hpp"
#include "hmfpc/model.hpp"
#include "hmfpc/orthoparam.hpp"

namespace hmfpc {

struct FitOptions {
  BfgsOptions bfgs;
  /// Fresh seeded starts tried after a failed or suspicious fit.
  int restarts = 5;
  /// SD of the N(0, s^2 I) draw for a newly added alpha_K.
  double init_scale = 0.01;
  std::uint64_t seed = 20240601;
  bool compute_hessian = true;
  Exec exec = Exec::parallel;
};

struct ConvergenceInfo {
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  /// Start index that produced the returned optimum (0 = supplied start).
  int attempt = 0;
  int attempts_tried = 1;
  double gradient_norm = 0.0;
  std::string message;
};

/// Penalized-likelihood fit for fixed (K, gamma). Components are stored in
/// normalized order (descending norm, nonnegative integrals) and `params`
/// is expressed in that order.
struct FittedModel {
  ParamVector params;
  OrthoCoefs coefs;
  double sigma2 = 0.0;
  int n_components = 0;
  double gamma = 0.0;
  Eigen::MatrixXd scores;   // d x K
  Eigen::MatrixXd hessian;  // p x p, empty when not requested
  ConvergenceInfo convergence;
  double loglik_pen = 0.0;
  std::uint64_t seed = 0;

  /// lambda_k = ||beta_k||^2.
  std::vector<double> lambdas() const;
  /// Basis coefficients of subject i: beta0 + sum_k u_ik beta_k.
  Eigen::VectorXd subject_coefficients(std::size_t subject) const;
};

/// Penalized least squares starting point for K = 0; exact optimum of the
/// K = 0 objective.
ParamVector initial_params(const PenalizedObjective& obj);

/// Maximizes the penalized log-likelihood at K components. Without `init`
/// the K = 0 start is used with seeded draws for every alpha. Never throws
/// on non-convergence: the result carries `convergence.converged == false`.
FittedModel maximize(const PenalizedObjective& obj, int n_components,
                     const std::optional<ParamVector>& init, const FitOptions& options = {});

/// Fits K = 0 .. k_max, each warm-started from its predecessor. Stops early
/// (returning the partial list) after a fit that failed to converge.
std::vector<FittedModel> fit_sequence(const PenalizedObjective& obj, int k_max,
                                      const FitOptions& options = {});

/// Previous optimum with a seeded near-zero alpha appended.
ParamVector extend_params(const ParamVector& previous, int n_components, std::uint64_t seed,
                          int attempt, double scale);

/// Conditional-mean scores u_i = M_i^{-1} F_i' (y_i - f_0i).
Eigen::MatrixXd estimate_scores(const FittedModel& model, const PenalizedObjective& obj);

/// Central differences of the exact gradient, step 1e-5 (1 + |theta_j|),
/// symmetrized.
Eigen::MatrixXd hessian_fd(const ParamVector& params, const PenalizedObjective& obj,
                           Exec exec = Exec::parallel);

/// mu_i (deriv = 0) or mu_i' (deriv = 1) on `times`; linear extrapolation
/// outside the basis domain.
Eigen::VectorXd predict_trajectory(const FittedModel& model, const OrthoBasis& basis,
                                   std::size_t subject, std::span<const double> times,
                                   int deriv = 0);

/// f_k on `times` for k = 0..K (column k).
Eigen::MatrixXd component_functions(const FittedModel& model, const OrthoBasis& basis,
                                    std::span<const double> times, int deriv = 0);

}  // namespace hmfpc
