#include "hmfpc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ975 = 1.959963984540054;

struct MeanCi {
  double mean = kNaN;
  double lo = kNaN;
  double hi = kNaN;
  std::size_t n = 0;
};

MeanCi mean_ci(const std::vector<double>& values) {
  MeanCi out;
  std::vector<double> v;
  for (double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  out.n = v.size();
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  const double se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  out.lo = out.mean - kZ975 * se;
  out.hi = out.mean + kZ975 * se;
  return out;
}

SummaryRow root_row(const std::string& name, const MeanCi& m) {
  const auto root = [](double x) { return std::isnan(x) ? x : std::sqrt(std::max(0.0, x)); };
  return {name, root(m.mean), root(m.lo), root(m.hi), m.n};
}

}  // namespace

double ise(std::span<const double> grid, const Eigen::VectorXd& est, const Eigen::VectorXd& truth) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (est.size() != n || truth.size() != n) throw DomainError("ise: grid and curves differ in length");
  if (n < 2) throw DomainError("ise: grid needs at least two points");
  double total = 0.0;
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    const double a = est[j] - truth[j];
    const double b = est[j + 1] - truth[j + 1];
    total += 0.5 * (grid[static_cast<std::size_t>(j) + 1] - grid[static_cast<std::size_t>(j)]) * (a * a + b * b);
  }
  return total;
}

TrajectoryScore score_trajectories(std::span<const double> grid, const Eigen::MatrixXd& est,
                                   const Eigen::MatrixXd& truth, const Eigen::MatrixXd& lower,
                                   const Eigen::MatrixXd& upper) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols() ||
      est.cols() != static_cast<Eigen::Index>(grid.size())) {
    throw DomainError("score_trajectories: shape mismatch");
  }
  TrajectoryScore out;
  const Eigen::Index d = est.rows();
  out.ise_per_subject.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.ise_per_subject[i] = ise(grid, est.row(i).transpose(), truth.row(i).transpose());
  }
  out.mise = d > 0 ? out.ise_per_subject.mean() : kNaN;

  if (lower.size() == 0) {
    out.coverage = kNaN;
    out.mean_width = kNaN;
    return out;
  }
  if (lower.rows() != d || upper.rows() != d || lower.cols() != est.cols() || upper.cols() != est.cols()) {
    throw DomainError("score_trajectories: band shape mismatch");
  }
  double coverage = 0.0;
  double width = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double inside = 0.0;
    for (Eigen::Index j = 0; j < est.cols(); ++j) {
      inside += (lower(i, j) <= truth(i, j) && truth(i, j) <= upper(i, j)) ? 1.0 : 0.0;
    }
    coverage += inside / static_cast<double>(est.cols());
    width += (upper.row(i) - lower.row(i)).mean();
  }
  out.coverage = coverage / static_cast<double>(d);
  out.mean_width = width / static_cast<double>(d);
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

WassersteinScore wasserstein2(const GpEstimate& est, const GpEstimate& truth) {
  const Eigen::Index n = truth.mean.size();
  if (est.mean.size() != n || est.cov.rows() != n || truth.cov.rows() != n ||
      est.cov.cols() != n || truth.cov.cols() != n) {
    throw DomainError("wasserstein2: estimates are on different grids");
  }
  if (n == 0) throw DomainError("wasserstein2: empty grid");
  if (!est.grid.empty() && !truth.grid.empty()) {
    if (est.grid.size() != truth.grid.size()) throw DomainError("wasserstein2: estimates are on different grids");
    for (std::size_t j = 0; j < est.grid.size(); ++j) {
      if (std::abs(est.grid[j] - truth.grid[j]) > 1e-12 * std::max(1.0, std::abs(truth.grid[j]))) {
        throw DomainError("wasserstein2: estimates are on different grids");
      }
    }
  }
  const Eigen::MatrixXd root_c = psd_sqrt(truth.cov);
  const Eigen::MatrixXd inner = root_c * est.cov * root_c;
  const Eigen::MatrixXd root_inner = psd_sqrt(inner);
  // Clamped eigenvalues give traces of the PSD parts.
  const auto clamped_trace = [](const Eigen::MatrixXd& c) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    return eig.eigenvalues().cwiseMax(0.0).sum();
  };
  const double dm2 = (est.mean - truth.mean).squaredNorm();
  const double dc2 = clamped_trace(est.cov) + clamped_trace(truth.cov) - 2.0 * root_inner.trace();
  WassersteinScore out;
  out.dm2_bar = dm2 / static_cast<double>(n);
  out.dc2_bar = std::max(0.0, dc2) / static_cast<double>(n);
  out.w2_bar = out.dm2_bar + out.dc2_bar;
  return out;
}

std::vector<SummaryRow> aggregate_runs(std::span<const RunMetrics> runs) {
  if (runs.empty()) throw DomainError("aggregate_runs: no runs");
  const auto column = [&](double RunMetrics::*field) {
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(r.*field);
    return v;
  };
  std::vector<SummaryRow> rows;
  rows.push_back(root_row("RMISE", mean_ci(column(&RunMetrics::mise))));
  rows.push_back(root_row("RMWE", mean_ci(column(&RunMetrics::w2_bar))));
  rows.push_back(root_row("RMSE_m", mean_ci(column(&RunMetrics::dm2_bar))));
  rows.push_back(root_row("RMSE_C", mean_ci(column(&RunMetrics::dc2_bar))));
  const MeanCi cov = mean_ci(column(&RunMetrics::coverage));
  rows.push_back({"coverage", cov.mean, cov.lo, cov.hi, cov.n});
  const MeanCi width = mean_ci(column(&RunMetrics::mean_width));
  rows.push_back({"width", width.mean, width.lo, width.hi, width.n});
  return rows;
}

std::size_t typical_run(std::span<const double> combined) {
  if (combined.empty()) throw DomainError("typical_run: no runs");
  double mean = 0.0;
  for (double c : combined) mean += c;
  mean /= static_cast<double>(combined.size());
  std::size_t best = 0;
  for (std::size_t i = 1; i < combined.size(); ++i) {
    if (std::abs(combined[i] - mean) < std::abs(combined[best] - mean)) best = i;
  }
  return best;
}

std::vector<std::size_t> quantile_indices(std::span<const double> combined,
                                          std::span<const double> probs) {
  if (combined.empty()) throw DomainError("quantile_indices: no values");
  std::vector<std::size_t> order(combined.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return combined[a] < combined[b]; });
  std::vector<std::size_t> out;
  const double last = static_cast<double>(combined.size() - 1);
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile_indices: probability outside [0, 1]");
    out.push_back(order[static_cast<std::size_t>(std::lround(p * last))]);
  }
  return out;
}

}  // namespace hmfpc
