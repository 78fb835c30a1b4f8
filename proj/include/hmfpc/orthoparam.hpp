#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/ad.hpp"

namespace hmfpc {

/// Unconstrained optimizer coordinates theta = (beta0, alpha_1..alpha_K,
/// log sigma), with dim(alpha_k) = n_B - k + 1.
struct ParamVector {
  Eigen::VectorXd beta0;
  std::vector<Eigen::VectorXd> alphas;
  double log_sigma = 0.0;

  int n_basis() const { return static_cast<int>(beta0.size()); }
  int n_components() const { return static_cast<int>(alphas.size()); }
  int dimension() const { return dimension(n_basis(), n_components()); }
  double sigma2() const { return std::exp(2.0 * log_sigma); }

  static int dimension(int n_basis, int n_components);
  static ParamVector zeros(int n_basis, int n_components);
  static ParamVector unflatten(const Eigen::VectorXd& theta, int n_basis,
                               int n_components);
  Eigen::VectorXd flatten() const;
  /// Throws DomainError when an alpha has the wrong length.
  void validate() const;
};

/// Mutually orthogonal component coefficient vectors together with the
/// null-space bases T_{k-1} and projected penalties S_k = T_{k-1}' S T_{k-1}.
struct OrthoCoefs {
  std::vector<Eigen::VectorXd> betas;
  std::vector<Eigen::MatrixXd> t_matrices;
  std::vector<Eigen::MatrixXd> s_matrices;
  bool rank_deficient = false;

  int n_components() const { return static_cast<int>(betas.size()); }
  /// n_B x K matrix with columns beta_k.
  Eigen::MatrixXd matrix(int n_basis) const;
};

/// Columns with norm below this are treated as absent by the QR.
inline constexpr double kRankTolerance = 1e-12;

/// Householder QR of B (n x m, m <= n) with nonnegative diagonal of R and
/// no pivoting; returns the final n - m columns of Q.
Eigen::MatrixXd householder_null_space(const Eigen::MatrixXd& b);

/// beta_k from alpha_1..alpha_K. Templated on the scalar so the gradient path
/// can record it on an AD tape.
///
/// With Q_{k-1} = H_1 ... H_{k-1} the accumulated Householder reflectors of
/// the QR of (beta_1 .. beta_{k-1}), Q_{k-1}' beta_k = (0, alpha_k), so
/// beta_k = H_1 ... H_{k-1} (0, alpha_k) and reflector k is built from
/// alpha_k directly.
template <class Scalar>
std::vector<std::vector<Scalar>> expand_betas(
    const std::vector<std::vector<Scalar>>& alphas, int n_basis,
    bool* rank_deficient = nullptr) {
  using ad::value_of;
  using std::sqrt;
  const int n_comp = static_cast<int>(alphas.size());
  if (rank_deficient != nullptr) *rank_deficient = false;

  // Reflector j acts on rows j..n_B-1: H = I - 2 v v' / (v'v).
  struct Reflector {
    std::vector<Scalar> v;
    Scalar scale;  // 2 / (v'v)
    bool identity = true;
  };
  std::vector<Reflector> reflectors;
  reflectors.reserve(static_cast<std::size_t>(n_comp));

  std::vector<std::vector<Scalar>> betas;
  betas.reserve(static_cast<std::size_t>(n_comp));
  for (int k = 0; k < n_comp; ++k) {
    const auto& alpha = alphas[static_cast<std::size_t>(k)];
    std::vector<Scalar> w(static_cast<std::size_t>(n_basis), Scalar(0.0));
    for (int r = k; r < n_basis; ++r) {
      w[static_cast<std::size_t>(r)] = alpha[static_cast<std::size_t>(r - k)];
    }
    for (int j = k - 1; j >= 0; --j) {
      const Reflector& h = reflectors[static_cast<std::size_t>(j)];
      if (h.identity) continue;
      Scalar dot(0.0);
      for (std::size_t r = 0; r < h.v.size(); ++r) dot += h.v[r] * w[static_cast<std::size_t>(j) + r];
      const Scalar coef = h.scale * dot;
      for (std::size_t r = 0; r < h.v.size(); ++r) {
        w[static_cast<std::size_t>(j) + r] -= coef * h.v[r];
      }
    }
    betas.push_back(std::move(w));

    // Reflector mapping alpha_k onto ||alpha_k|| e_1.
    Reflector h;
    Scalar tail_sq(0.0);
    for (std::size_t r = 1; r < alpha.size(); ++r) tail_sq += alpha[r] * alpha[r];
    const Scalar head = alpha.empty() ? Scalar(0.0) : alpha[0];
    const double norm_value = std::sqrt(value_of(head) * value_of(head) + value_of(tail_sq));
    if (norm_value < kRankTolerance) {
      if (rank_deficient != nullptr && k + 1 < n_comp) *rank_deficient = true;
    } else if (value_of(tail_sq) > 0.0 || value_of(head) < 0.0) {
      const Scalar norm = sqrt(head * head + tail_sq);
      // v_0 = head - norm, rewritten to avoid cancellation when head > 0.
      const Scalar v0 = value_of(head) <= 0.0 ? head - norm : -tail_sq / (head + norm);
      h.v.assign(alpha.begin(), alpha.end());
      h.v[0] = v0;
      h.scale = Scalar(2.0) / (v0 * v0 + tail_sq);
      h.identity = false;
    }
    reflectors.push_back(std::move(h));
  }
  return betas;
}

/// Orthogonality transform: beta_1 = alpha_1, beta_k = T_{k-1} alpha_k.
/// When `penalty` is non-empty the projected penalties S_k are filled in.
OrthoCoefs expand(const ParamVector& params,
                  const Eigen::MatrixXd& penalty = Eigen::MatrixXd());

/// Inverse of expand for an orthogonal set: alpha_k = T_{k-1}' beta_k.
std::vector<Eigen::VectorXd> recover_alphas(const std::vector<Eigen::VectorXd>& betas);

struct NormalizedCoefs {
  OrthoCoefs coefs;
  std::vector<Eigen::VectorXd> alphas;  // re-derived for the new ordering
  std::vector<int> order;               // new slot k holds old component order[k]
  std::vector<double> signs;            // applied to the old component
};

/// Reorders components by descending norm and flips signs so that each
/// integral of f_k over the domain is nonnegative.
NormalizedCoefs normalize_fit(const OrthoCoefs& coefs,
                              const Eigen::VectorXd& basis_integrals,
                              const Eigen::MatrixXd& penalty = Eigen::MatrixXd());

}  // namespace hmfpc
