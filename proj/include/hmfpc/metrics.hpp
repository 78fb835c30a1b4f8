#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/population.hpp"

namespace hmfpc {

/// Trapezoid rule for the integral of (est - truth)^2 over the grid.
double ise(std::span<const double> grid, const Eigen::VectorXd& est, const Eigen::VectorXd& truth);

struct TrajectoryScore {
  Eigen::VectorXd ise_per_subject;
  double mise = 0.0;
  double coverage = 0.0;    // NaN when no bands were scored
  double mean_width = 0.0;  // NaN when no bands were scored
};

/// `est`, `truth`: subjects x grid. `lower`/`upper` may be empty to skip
/// band scoring. Coverage is averaged over the grid within each subject,
/// then over subjects.
TrajectoryScore score_trajectories(std::span<const double> grid, const Eigen::MatrixXd& est,
                                   const Eigen::MatrixXd& truth, const Eigen::MatrixXd& lower = {},
                                   const Eigen::MatrixXd& upper = {});

struct WassersteinScore {
  double w2_bar = 0.0;   // N^{-1} W_2(N)
  double dm2_bar = 0.0;  // mean part
  double dc2_bar = 0.0;  // covariance part
};

/// Symmetric square root with eigenvalues clamped at zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

/// Squared 2-Wasserstein distance between N(m_est, C_est) and
/// N(m_truth, C_truth), divided by the grid size.
WassersteinScore wasserstein2(const GpEstimate& est, const GpEstimate& truth);

/// Per-replicate scores fed to aggregate_runs. Band fields may be NaN.
struct RunMetrics {
  double mise = 0.0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double w2_bar = 0.0;
  double dm2_bar = 0.0;
  double dc2_bar = 0.0;
};

struct SummaryRow {
  std::string metric;
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t runs = 0;
};

/// RMISE, RMWE, RMSE_m, RMSE_C, coverage and width across runs, each with a
/// normal-approximation 95% interval (on the mean before the square root for
/// the root-mean metrics). Intervals are NaN with fewer than two runs;
/// NaN band values are skipped.
std::vector<SummaryRow> aggregate_runs(std::span<const RunMetrics> runs);

/// Index of the value closest to the mean; lowest index on ties.
std::size_t typical_run(std::span<const double> combined);

/// Indices at the given quantiles of `combined` (nearest order statistic,
/// ties kept in index order).
std::vector<std::size_t> quantile_indices(std::span<const double> combined,
                                          std::span<const double> probs);

}  // namespace hmfpc
