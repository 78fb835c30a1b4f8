#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/basis.hpp"
#include "hmfpc/dataset.hpp"
#include "hmfpc/orthoparam.hpp"

namespace hmfpc {

/// Observations of one subject and its design matrix X_i (rows b(t_ij)').
struct SubjectBlock {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;

  Eigen::Index size() const { return y.size(); }
};

/// How subject-level work is scheduled. Both produce bit-identical results:
/// per-subject terms are always reduced in subject order.
enum class Exec { serial, parallel };

/// Penalized log-likelihood for fixed smoothing parameter gamma. Copies are
/// cheap: basis and blocks are shared and read-only.
class PenalizedObjective {
 public:
  PenalizedObjective(const OrthoBasis& basis, const LongitudinalDataset& data,
                     double gamma);
  PenalizedObjective(std::shared_ptr<const OrthoBasis> basis,
                     std::vector<SubjectBlock> blocks, double gamma);

  PenalizedObjective with_gamma(double gamma) const;

  double gamma() const { return gamma_; }
  const OrthoBasis& basis() const { return *basis_; }
  std::shared_ptr<const OrthoBasis> basis_ptr() const { return basis_; }
  const std::vector<SubjectBlock>& blocks() const { return *blocks_; }
  const Eigen::MatrixXd& penalty() const { return basis_->penalty(); }
  int n_basis() const { return basis_->size(); }
  std::size_t n_subjects() const { return blocks_->size(); }
  std::size_t n_observations() const;

 private:
  std::shared_ptr<const OrthoBasis> basis_;
  std::shared_ptr<const std::vector<SubjectBlock>> blocks_;
  double gamma_;
};

/// Sigma_i = sigma2 I + F F' held in Woodbury form through the K x K matrix
/// M = sigma2 I + F'F; nothing n_i x n_i is factorized.
class SubjectCovariance {
 public:
  SubjectCovariance(double sigma2, Eigen::MatrixXd f);

  double sigma2() const { return sigma2_; }
  const Eigen::MatrixXd& factors() const { return f_; }
  const Eigen::MatrixXd& inner() const { return m_; }

  /// log det Sigma_i = (n_i - K) log sigma2 + log det M.
  double log_det() const;
  /// Sigma_i^{-1} v.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd dense() const;

  /// Conditional law of the scores u ~ N(0, I_K) given a residual r:
  /// mean F' Sigma^{-1} r = M^{-1} F' r, covariance I - F' Sigma^{-1} F =
  /// sigma2 M^{-1}.
  Eigen::VectorXd conditional_mean(const Eigen::VectorXd& residual) const;
  Eigen::MatrixXd conditional_cov() const;
  /// Lower Cholesky factor of M.
  Eigen::MatrixXd inner_cholesky() const { return llt_.matrixL(); }

 private:
  double sigma2_;
  Eigen::MatrixXd f_;
  Eigen::MatrixXd m_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// `fki` holds f_{1i} .. f_{Ki}. Throws DomainError for sigma2 <= 0.
SubjectCovariance subject_covariance(double sigma2,
                                     const std::vector<Eigen::VectorXd>& fki);

double log_likelihood(const ParamVector& params, const PenalizedObjective& obj,
                      Exec exec = Exec::parallel);

/// w(f_0) + sum_k w(f_k) = sum_j beta_j' S beta_j.
double expected_wiggliness(const OrthoCoefs& coefs, const Eigen::VectorXd& beta0,
                           const Eigen::MatrixXd& penalty);

double penalized_log_likelihood(const ParamVector& params,
                                const PenalizedObjective& obj,
                                Exec exec = Exec::parallel);

struct ValueAndGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Exact gradient of the penalized log-likelihood with respect to the flat
/// theta. Throws NonDifferentiableError at rank-deficient alphas.
ValueAndGradient penalized_value_and_gradient(const ParamVector& params,
                                              const PenalizedObjective& obj,
                                              Exec exec = Exec::parallel);

Eigen::VectorXd gradient(const ParamVector& params, const PenalizedObjective& obj,
                         Exec exec = Exec::parallel);

/// Per-subject design matrices and responses for `data` under `basis`.
std::vector<SubjectBlock> make_blocks(const OrthoBasis& basis,
                                      const LongitudinalDataset& data);

}  // namespace hmfpc
