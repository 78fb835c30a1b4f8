#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/fit.hpp"
#include "hmfpc/model.hpp"

namespace hmfpc {

/// Per-draw subject coefficients delta_i^(j) = beta0^(j) + sum_k u_ik^(j) beta_k^(j).
struct BootstrapSample {
  int n_s = 0;
  int n_basis = 0;
  std::size_t n_subjects = 0;
  std::uint64_t seed = 0;
  /// Jitter added to -H before factorization.
  double jitter = 0.0;
  std::vector<Eigen::MatrixXd> deltas;  // n_s entries, each n_B x d
  std::vector<Eigen::VectorXd> thetas;  // flattened theta^(j)
  std::vector<Eigen::MatrixXd> scores;  // n_s entries, each d x K
};

/// Draw j uses its own stream, so the first m draws do not depend on n_s.
/// theta^(j) ~ N(theta_hat, (-H)^{-1}); u_i ~ N(M^{-1} F'r, sigma2 M^{-1}).
BootstrapSample draw_bootstrap(const FittedModel& model, const PenalizedObjective& obj, int n_s,
                               std::uint64_t seed, Exec exec = Exec::parallel);

struct ConfidenceBand {
  std::size_t subject = 0;
  std::vector<double> times;
  Eigen::VectorXd estimate;  // empty unless a model is supplied
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double level = 0.95;
  int deriv = 0;
  /// Set when n_s (1 - level) / 2 < 5.
  std::string warning;
};

/// Type-7 sample quantile of `sorted` (ascending).
double sorted_quantile(std::span<const double> sorted, double p);

/// Pointwise quantiles ((1 - level)/2, (1 + level)/2) of delta_i^(j)' b^(deriv)(t).
/// level = 0 gives the median on both sides.
ConfidenceBand confidence_band(const BootstrapSample& sample, const OrthoBasis& basis,
                               std::size_t subject, std::span<const double> times,
                               double level = 0.95, int deriv = 0);

/// As above with the point estimate from `model` filled in.
ConfidenceBand confidence_band(const BootstrapSample& sample, const FittedModel& model,
                               const OrthoBasis& basis, std::size_t subject,
                               std::span<const double> times, double level = 0.95,
                               int deriv = 0);

}  // namespace hmfpc
