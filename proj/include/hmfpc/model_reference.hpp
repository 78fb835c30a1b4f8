#pragma once

// Serial reference path for the penalized log-likelihood: dense n_i x n_i
// covariance, hand-rolled Cholesky, and a gradient taken by recording the
// whole computation on the AD tape. Slow; kept to cross-check the Woodbury
// kernels and for benchmarking.

#include <Eigen/Dense>

#include "hmfpc/model.hpp"

namespace hmfpc::reference {

double log_likelihood(const ParamVector& params, const PenalizedObjective& obj);

double penalized_log_likelihood(const ParamVector& params, const PenalizedObjective& obj);

Eigen::VectorXd gradient(const ParamVector& params, const PenalizedObjective& obj);

/// log N(y; mean, cov) by Eigen's dense LLT.
double mvn_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov);

}  // namespace hmfpc::reference
