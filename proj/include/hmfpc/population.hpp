#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/basis.hpp"
#include "hmfpc/fit.hpp"

namespace hmfpc {

enum class GpMethod { fpc, empirical, truth };

std::string to_string(GpMethod method);

/// Gaussian process discretized on a time grid: mean m and covariance C.
struct GpEstimate {
  std::vector<double> grid;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  GpMethod method = GpMethod::fpc;
};

/// N equally spaced points on [lo, hi], endpoints included.
std::vector<double> regular_grid(double lo, double hi, int n = 100);

/// Mean f_0 and covariance sum_k f_k(s) f_k(t).
GpEstimate gp_fpc(const FittedModel& model, const OrthoBasis& basis,
                  std::span<const double> grid);

/// Sample mean and covariance (divisor d) of the predicted trajectories.
/// Throws DomainError for fewer than two subjects.
GpEstimate gp_empirical(const FittedModel& model, const OrthoBasis& basis,
                        std::span<const double> grid);

/// Predicted trajectories on a grid, one row per subject.
Eigen::MatrixXd predicted_trajectories(const FittedModel& model, const OrthoBasis& basis,
                                       std::span<const double> grid);

}  // namespace hmfpc
