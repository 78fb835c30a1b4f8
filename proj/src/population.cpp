#include "hmfpc/population.hpp"

#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

// Rows b(t_j)' with linear extrapolation, so grids may overhang slightly.
Eigen::MatrixXd grid_design(const OrthoBasis& basis, std::span<const double> grid) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(grid.size()), basis.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    x.row(static_cast<Eigen::Index>(j)) = basis.eval(grid[j], 0, Extrapolation::linear).transpose();
  }
  return x;
}

// Entry (a, b) is sum_r v(r, a) v(r, b) / divisor, accumulated in row order
// so an entry never depends on which other grid points are present.
Eigen::MatrixXd cross_product(const Eigen::MatrixXd& v, double divisor) {
  const Eigen::Index n = v.cols();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a; b < n; ++b) {
      double s = 0.0;
      for (Eigen::Index r = 0; r < v.rows(); ++r) s += v(r, a) * v(r, b);
      c(a, b) = c(b, a) = s / divisor;
    }
  }
  return c;
}

}  // namespace

std::string to_string(GpMethod method) {
  switch (method) {
    case GpMethod::fpc: return "fpc";
    case GpMethod::empirical: return "empirical";
    case GpMethod::truth: return "truth";
  }
  return "unknown";
}

std::vector<double> regular_grid(double lo, double hi, int n) {
  if (n < 1) throw DomainError("grid needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> grid(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) grid[static_cast<std::size_t>(j)] = lo + (hi - lo) * j / (n - 1);
  grid.back() = hi;
  return grid;
}

GpEstimate gp_fpc(const FittedModel& model, const OrthoBasis& basis,
                  std::span<const double> grid) {
  const Eigen::MatrixXd x = grid_design(basis, grid);
  GpEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  out.method = GpMethod::fpc;
  out.mean = x * model.params.beta0;
  Eigen::MatrixXd f(model.n_components, x.rows());
  for (int k = 0; k < model.n_components; ++k) {
    f.row(k) = (x * model.coefs.betas[static_cast<std::size_t>(k)]).transpose();
  }
  out.cov = cross_product(f, 1.0);
  return out;
}

Eigen::MatrixXd predicted_trajectories(const FittedModel& model, const OrthoBasis& basis,
                                       std::span<const double> grid) {
  const Eigen::MatrixXd x = grid_design(basis, grid);
  const auto d = model.scores.rows();
  Eigen::MatrixXd mu(d, x.rows());
  for (Eigen::Index i = 0; i < d; ++i) {
    mu.row(i) = (x * model.subject_coefficients(static_cast<std::size_t>(i))).transpose();
  }
  return mu;
}

GpEstimate gp_empirical(const FittedModel& model, const OrthoBasis& basis,
                        std::span<const double> grid) {
  const auto d = model.scores.rows();
  if (d < 2) throw DomainError("empirical covariance needs at least two subjects");
  Eigen::MatrixXd mu = predicted_trajectories(model, basis, grid);
  GpEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  out.method = GpMethod::empirical;
  out.mean = Eigen::VectorXd::Zero(mu.cols());
  for (Eigen::Index i = 0; i < d; ++i) out.mean += mu.row(i).transpose();
  out.mean /= static_cast<double>(d);
  mu.rowwise() -= out.mean.transpose();
  out.cov = cross_product(mu, static_cast<double>(d));
  return out;
}

}  // namespace hmfpc
