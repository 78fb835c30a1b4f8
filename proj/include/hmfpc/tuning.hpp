#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/fit.hpp"
#include "hmfpc/model.hpp"

namespace hmfpc {

/// 13 log-spaced points from 1e-4 to 1e4.
std::vector<double> default_gamma_grid();

struct TuningOptions {
  double t_fve = 0.999;
  int k_start = 2;
  /// Hard cap on K_max; reaching it sets `saturated`.
  int k_cap = 8;
  FitOptions fit;
  /// Schedule for grid points (fits inside a point then run serially).
  Exec grid_exec = Exec::parallel;
};

struct KSelection {
  int k = 0;
  int k_max = 0;
  std::vector<FittedModel> fits;  // K = 0 .. k_max
  std::vector<double> sigma2;     // sigma2[K]
  bool saturated = false;
  bool degenerate = false;
  /// False when any fit in the sequence stopped without converging.
  bool converged = true;

  const FittedModel& chosen() const { return fits[static_cast<std::size_t>(k)]; }
};

/// FVE(K; K_max) = (s0 - sK) / (s0 - sKmax).
double fraction_of_variance(const std::vector<double>& sigma2, int k, int k_max);

/// Escalates K_max from `k_start` until FVE(K_max - 1; K_max) > t_fve and
/// returns the smallest K passing the threshold. Hessians are not computed.
KSelection select_k(const PenalizedObjective& obj, const TuningOptions& options = {});

struct PriorRemainder {
  double value = 0.0;
  std::vector<int> ranks;          // r_k used
  std::vector<int> numeric_ranks;  // eigenvalues above 1e-10 lambda_max
  std::vector<std::string> warnings;
};

/// r = 1/2 sum_k log|S_k|_+ + R (log gamma - 1), with S_0 = S and
/// r_k = min(n_B - 2, n_B - k + 1).
PriorRemainder log_prior_remainder(const std::vector<Eigen::MatrixXd>& s_matrices, int n_basis,
                                   double gamma);

/// S_0, S_1 .. S_K for a fitted model.
std::vector<Eigen::MatrixXd> prior_penalties(const FittedModel& model, const Eigen::MatrixXd& penalty);

struct LaplaceCriterion {
  double value = 0.0;
  double loglik_pen = 0.0;
  double remainder = 0.0;
  double log_det = 0.0;  // log det(-H + jitter I)
  double jitter = 0.0;
  int dimension = 0;
  std::vector<std::string> warnings;
};

/// l_p + r + (p/2) log 2pi - 1/2 log det(-H). Throws IndefiniteHessianError
/// when -H is not positive definite even after jitter up to 1e-4 (relative to
/// the mean absolute diagonal).
LaplaceCriterion approx_log_marginal_likelihood(const FittedModel& model,
                                                const PenalizedObjective& obj);

struct GammaPoint {
  double gamma = 0.0;
  bool valid = false;
  int k = 0;
  double criterion = 0.0;
  double sigma2 = 0.0;
  bool saturated = false;
  bool degenerate = false;
  bool converged = false;
  std::vector<double> sigma2_by_k;
  std::string error;
  std::vector<std::string> warnings;
};

struct TuningTrace {
  std::vector<GammaPoint> points;  // in grid order
  double fve_threshold = 0.999;
  std::size_t chosen_index = 0;
  double chosen_gamma = 0.0;
  int chosen_k = 0;
  FittedModel chosen_fit;  // with Hessian

  std::vector<double> gamma_grid() const;
  std::vector<double> criteria() const;
};

/// Runs select_k and the Laplace criterion at every grid point and keeps the
/// argmax. Ties go to the smaller gamma so the result ignores grid order.
TuningTrace select_gamma(const PenalizedObjective& obj, std::span<const double> grid,
                         const TuningOptions& options = {});

}  // namespace hmfpc
