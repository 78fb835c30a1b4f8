#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hmfpc {

enum class Extrapolation {
  strict,  // times outside the domain raise DomainError
  linear,  // each basis function continues linearly past the boundary
};

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
  explicit GaussLegendre(int n);
};

/// Orthonormal cubic-spline basis b_1..b_nB on [lower, upper] together with
/// the second-derivative penalty S, w(f) = beta' S beta for f = beta' b.
///
/// The raw functions are clamped cubic B-splines; `transform()` maps them to
/// the orthonormal functions, b(t) = transform()' * B(t). Immutable after
/// construction.
class OrthoBasis {
 public:
  static constexpr int kDefaultSize = 10;
  static constexpr int kQuadratureNodes = 7;

  /// Interior knots at equally spaced quantiles of `times`, boundary knots at
  /// their min and max.
  static OrthoBasis build(std::span<const double> times,
                          int n_basis = kDefaultSize);
  /// Rebuilds a basis from its distinct knots (boundary knots included).
  static OrthoBasis from_knots(std::vector<double> knots);

  int size() const { return n_basis_; }
  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }
  const Eigen::MatrixXd& transform() const { return transform_; }
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  /// Integral of each basis function over the domain.
  const Eigen::VectorXd& integrals() const { return integrals_; }

  /// b(t), b'(t) or b''(t).
  Eigen::VectorXd eval(double t, int deriv = 0,
                       Extrapolation mode = Extrapolation::strict) const;
  /// Rows b(t_j)'. Throws EmptySubjectError for an empty time list.
  Eigen::MatrixXd design(std::span<const double> times, int deriv = 0,
                         Extrapolation mode = Extrapolation::strict) const;

  /// Raw B-spline values (not orthonormalized).
  Eigen::VectorXd eval_raw(double t, int deriv = 0) const;

  /// L2 projection coefficients <f, b_l>, by Gauss-Legendre quadrature on
  /// `subdivisions` equal pieces of every knot interval.
  Eigen::VectorXd project(const std::function<double(double)>& f,
                          int subdivisions = 8) const;

  /// Gram matrix of the orthonormal functions, recomputed by quadrature.
  Eigen::MatrixXd gram() const;

  /// Stable hex digest of the knots and transform.
  std::string hash() const;

 private:
  OrthoBasis() = default;
  void finish_construction();

  int n_basis_ = 0;
  std::vector<double> knots_;       // distinct, ascending
  std::vector<double> full_knots_;  // boundary knots repeated 4 times
  Eigen::MatrixXd transform_;
  Eigen::MatrixXd penalty_;
  Eigen::VectorXd integrals_;
};

}  // namespace hmfpc
