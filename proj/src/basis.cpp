#include "hmfpc/basis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <sstream>
#include <iomanip>

#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

constexpr int kDegree = 3;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

GaussLegendre::GaussLegendre(int n) : nodes(n), weights(n) {
  // Newton iteration on P_n from the Chebyshev initial guesses.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  if (n == 1) {
    nodes[0] = 0.0;
    weights[0] = 2.0;
  }
}

OrthoBasis OrthoBasis::build(std::span<const double> times, int n_basis) {
  if (n_basis < 4) throw DomainError("n_basis must be at least 4");
  std::vector<double> sorted(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<int>(
      std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < n_basis) {
    throw DegenerateDesignError("need at least " + std::to_string(n_basis) +
                                " distinct times, found " +
                                std::to_string(distinct));
  }
  // unique() reordered the tail; quantiles need the full sorted sample.
  sorted.assign(times.begin(), times.end());
  std::sort(sorted.begin(), sorted.end());

  const int n_knots = n_basis - 2;
  std::vector<double> knots(n_knots);
  for (int k = 0; k < n_knots; ++k) {
    knots[k] = quantile_sorted(sorted, static_cast<double>(k) / (n_knots - 1));
  }
  knots.front() = sorted.front();
  knots.back() = sorted.back();
  return from_knots(std::move(knots));
}

OrthoBasis OrthoBasis::from_knots(std::vector<double> knots) {
  if (knots.size() < 2) throw DegenerateDesignError("need at least two knots");
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (!(knots[k] > knots[k - 1])) {
      throw DegenerateDesignError("knots are not strictly increasing");
    }
  }
  OrthoBasis basis;
  basis.knots_ = std::move(knots);
  basis.n_basis_ = static_cast<int>(basis.knots_.size()) + 2;
  basis.full_knots_.assign(kDegree, basis.knots_.front());
  basis.full_knots_.insert(basis.full_knots_.end(), basis.knots_.begin(),
                           basis.knots_.end());
  basis.full_knots_.insert(basis.full_knots_.end(), kDegree, basis.knots_.back());
  basis.finish_construction();
  return basis;
}

Eigen::VectorXd OrthoBasis::eval_raw(double t, int deriv) const {
  const auto& u = full_knots_;
  const int m = static_cast<int>(u.size());
  // Knot span with u[s] <= t < u[s+1]; the right boundary belongs to the
  // last non-empty span.
  int s = kDegree;
  while (s < n_basis_ - 1 && t >= u[s + 1]) ++s;

  // table[p][i] = B_{i,p}(t)
  std::array<std::array<double, 64>, kDegree + 1> table{};
  if (m > 64) throw DomainError("basis too large");
  table[0][s] = 1.0;
  for (int p = 1; p <= kDegree; ++p) {
    for (int i = std::max(0, s - p); i <= s && i + p + 1 < m; ++i) {
      table[p][i] = safe_ratio(t - u[i], u[i + p] - u[i]) * table[p - 1][i] +
                    safe_ratio(u[i + p + 1] - t, u[i + p + 1] - u[i + 1]) *
                        table[p - 1][i + 1];
    }
  }

  // k-th derivative of B_{i,p} by the standard recurrence.
  const auto derivative = [&](auto&& self, int p, int i, int k) -> double {
    if (k == 0) return table[p][i];
    return p * (safe_ratio(1.0, u[i + p] - u[i]) * self(self, p - 1, i, k - 1) -
                safe_ratio(1.0, u[i + p + 1] - u[i + 1]) *
                    self(self, p - 1, i + 1, k - 1));
  };

  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_basis_);
  if (deriv > kDegree) return out;
  for (int i = std::max(0, s - kDegree); i <= s; ++i) {
    out[i] = derivative(derivative, kDegree, i, deriv);
  }
  return out;
}

Eigen::VectorXd OrthoBasis::eval(double t, int deriv, Extrapolation mode) const {
  if (deriv < 0 || deriv > 2) throw DomainError("derivative order must be 0, 1 or 2");
  const double lo = lower();
  const double hi = upper();
  const double tol = 1e-12 * (hi - lo);
  if (t < lo - tol || t > hi + tol) {
    if (mode == Extrapolation::strict || !std::isfinite(t)) {
      throw DomainError("time " + std::to_string(t) + " outside basis domain [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    const double edge = t < lo ? lo : hi;
    if (deriv == 2) return Eigen::VectorXd::Zero(n_basis_);
    const Eigen::VectorXd slope = transform_.transpose() * eval_raw(edge, 1);
    if (deriv == 1) return slope;
    return transform_.transpose() * eval_raw(edge, 0) + (t - edge) * slope;
  }
  t = std::clamp(t, lo, hi);
  return transform_.transpose() * eval_raw(t, deriv);
}

Eigen::MatrixXd OrthoBasis::design(std::span<const double> times, int deriv,
                                   Extrapolation mode) const {
  if (times.empty()) throw EmptySubjectError("design matrix needs at least one time");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(times.size()), n_basis_);
  for (std::size_t j = 0; j < times.size(); ++j) {
    x.row(static_cast<Eigen::Index>(j)) = eval(times[j], deriv, mode).transpose();
  }
  return x;
}

void OrthoBasis::finish_construction() {
  const GaussLegendre gl(kQuadratureNodes);
  Eigen::MatrixXd gram_raw = Eigen::MatrixXd::Zero(n_basis_, n_basis_);
  Eigen::MatrixXd pen_raw = Eigen::MatrixXd::Zero(n_basis_, n_basis_);
  Eigen::VectorXd int_raw = Eigen::VectorXd::Zero(n_basis_);
  for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
    const double a = knots_[k];
    const double b = knots_[k + 1];
    const double half = 0.5 * (b - a);
    for (int q = 0; q < kQuadratureNodes; ++q) {
      const double t = a + half * (gl.nodes[q] + 1.0);
      const double w = half * gl.weights[q];
      const Eigen::VectorXd v = eval_raw(t, 0);
      const Eigen::VectorXd d2 = eval_raw(t, 2);
      gram_raw.noalias() += w * v * v.transpose();
      pen_raw.noalias() += w * d2 * d2.transpose();
      int_raw += w * v;
    }
  }

  // Modified Gram-Schmidt in the L2 inner product, two passes.
  transform_ = Eigen::MatrixXd::Zero(n_basis_, n_basis_);
  for (int j = 0; j < n_basis_; ++j) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(n_basis_, j);
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < j; ++i) {
        const double proj = transform_.col(i).dot(gram_raw * v);
        v -= proj * transform_.col(i);
      }
    }
    const double norm = std::sqrt(v.dot(gram_raw * v));
    if (!(norm > 0.0)) throw DegenerateDesignError("B-spline Gram matrix is singular");
    transform_.col(j) = v / norm;
  }

  penalty_ = transform_.transpose() * pen_raw * transform_;
  penalty_ = 0.5 * (penalty_ + penalty_.transpose()).eval();
  integrals_ = transform_.transpose() * int_raw;
}

Eigen::VectorXd OrthoBasis::project(const std::function<double(double)>& f,
                                    int subdivisions) const {
  const GaussLegendre gl(kQuadratureNodes);
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(n_basis_);
  for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
    const double width = (knots_[k + 1] - knots_[k]) / subdivisions;
    for (int piece = 0; piece < subdivisions; ++piece) {
      const double a = knots_[k] + piece * width;
      const double half = 0.5 * width;
      for (int q = 0; q < kQuadratureNodes; ++q) {
        const double t = a + half * (gl.nodes[q] + 1.0);
        coef += half * gl.weights[q] * f(t) * eval(t);
      }
    }
  }
  return coef;
}

Eigen::MatrixXd OrthoBasis::gram() const {
  const GaussLegendre gl(kQuadratureNodes);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n_basis_, n_basis_);
  for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
    const double half = 0.5 * (knots_[k + 1] - knots_[k]);
    for (int q = 0; q < kQuadratureNodes; ++q) {
      const Eigen::VectorXd v = eval(knots_[k] + half * (gl.nodes[q] + 1.0));
      g.noalias() += half * gl.weights[q] * v * v.transpose();
    }
  }
  return g;
}

std::string OrthoBasis::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](double x) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &x, sizeof(double));
    for (unsigned char byte : bytes) {
      h ^= byte;
      h *= 0x100000001b3ULL;
    }
  };
  for (double k : knots_) feed(k);
  for (Eigen::Index i = 0; i < transform_.size(); ++i) feed(transform_.data()[i]);
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace hmfpc
