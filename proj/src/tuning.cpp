#include "hmfpc/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

constexpr double kDegenerateFve = 1e-10;
constexpr double kPseudoRankTolerance = 1e-10;

FittedModel fit_next(const PenalizedObjective& obj, const FittedModel& previous, const FitOptions& fit) {
  const int k = previous.n_components + 1;
  return maximize(obj, k, extend_params(previous.params, k, fit.seed, 0, fit.init_scale), fit);
}

}  // namespace

std::vector<double> default_gamma_grid() {
  std::vector<double> grid;
  for (int j = 0; j < 13; ++j) grid.push_back(std::pow(10.0, -4.0 + 8.0 * j / 12.0));
  return grid;
}

double fraction_of_variance(const std::vector<double>& sigma2, int k, int k_max) {
  if (k < 0 || k_max < 1 || k > k_max || static_cast<std::size_t>(k_max) >= sigma2.size()) {
    throw DomainError("FVE needs 0 <= K <= K_max < number of fits");
  }
  const double total = sigma2[0] - sigma2[static_cast<std::size_t>(k_max)];
  return (sigma2[0] - sigma2[static_cast<std::size_t>(k)]) / total;
}

KSelection select_k(const PenalizedObjective& obj, const TuningOptions& options) {
  if (!(options.t_fve > 0.0 && options.t_fve < 1.0)) throw DomainError("t_fve must lie in (0, 1)");
  if (options.k_start < 1 || options.k_cap < options.k_start) {
    throw DomainError("need 1 <= k_start <= k_cap");
  }
  FitOptions fit = options.fit;
  fit.compute_hessian = false;

  KSelection sel;
  sel.fits.push_back(maximize(obj, 0, initial_params(obj), fit));
  sel.sigma2.push_back(sel.fits.back().sigma2);
  sel.converged = sel.fits.back().convergence.converged;

  int k_max = options.k_start;
  for (;;) {
    while (static_cast<int>(sel.fits.size()) <= k_max) {
      sel.fits.push_back(fit_next(obj, sel.fits.back(), fit));
      sel.sigma2.push_back(sel.fits.back().sigma2);
      sel.converged = sel.converged && sel.fits.back().convergence.converged;
    }
    // Backward pass: the leading components of a larger fit can start a
    // smaller one in a better basin than the forward warm start found.
    for (int k = k_max - 1; k >= 1; --k) {
      ParamVector start = sel.fits[static_cast<std::size_t>(k + 1)].params;
      start.alphas.resize(static_cast<std::size_t>(k));
      FittedModel cand = maximize(obj, k, start, fit);
      FittedModel& cur = sel.fits[static_cast<std::size_t>(k)];
      const double slack = 1e-8 * std::max(1.0, std::abs(cur.loglik_pen));
      if (cand.convergence.converged && cand.loglik_pen > cur.loglik_pen + slack) {
        cur = std::move(cand);
        sel.sigma2[static_cast<std::size_t>(k)] = cur.sigma2;
      }
    }
    sel.k_max = k_max;
    const double s0 = sel.sigma2[0];
    if (s0 - sel.sigma2[static_cast<std::size_t>(k_max)] < kDegenerateFve * s0) {
      sel.degenerate = true;
      sel.k = 0;
      return sel;
    }
    if (fraction_of_variance(sel.sigma2, k_max - 1, k_max) > options.t_fve) {
      int k = 0;
      while (fraction_of_variance(sel.sigma2, k, k_max) <= options.t_fve) ++k;
      sel.k = k;
      return sel;
    }
    if (k_max == options.k_cap) {
      sel.saturated = true;
      sel.k = k_max;
      return sel;
    }
    ++k_max;
  }
}

std::vector<Eigen::MatrixXd> prior_penalties(const FittedModel& model, const Eigen::MatrixXd& penalty) {
  std::vector<Eigen::MatrixXd> out{penalty};
  OrthoCoefs coefs = model.coefs;
  if (static_cast<int>(coefs.s_matrices.size()) != model.n_components) {
    coefs = expand(model.params, penalty);
  }
  for (const auto& s : coefs.s_matrices) out.push_back(s);
  return out;
}

PriorRemainder log_prior_remainder(const std::vector<Eigen::MatrixXd>& s_matrices, int n_basis,
                                   double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be positive");
  PriorRemainder out;
  int total_rank = 0;
  double log_det = 0.0;
  for (std::size_t k = 0; k < s_matrices.size(); ++k) {
    const Eigen::MatrixXd& s = s_matrices[k];
    const int r = std::min(n_basis - 2, n_basis - static_cast<int>(k) + 1);
    if (s.rows() < r) throw DomainError("penalty matrix too small for its rank");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (s + s.transpose()),
                                                             Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
      throw NumericalError("eigendecomposition of S_" + std::to_string(k) + " failed");
    }
    const Eigen::VectorXd ev = eig.eigenvalues();  // ascending
    const double top = ev.size() > 0 ? ev.maxCoeff() : 0.0;
    int numeric = 0;
    for (Eigen::Index j = 0; j < ev.size(); ++j) numeric += ev[j] > kPseudoRankTolerance * top;
    for (Eigen::Index j = ev.size() - r; j < ev.size(); ++j) {
      if (!(ev[j] > 0.0)) {
        throw NumericalError("S_" + std::to_string(k) + " has fewer positive eigenvalues than its rank");
      }
      log_det += std::log(ev[j]);
    }
    if (numeric != r) {
      out.warnings.push_back("S_" + std::to_string(k) + ": numerical rank " + std::to_string(numeric) +
                             " differs from " + std::to_string(r));
    }
    out.ranks.push_back(r);
    out.numeric_ranks.push_back(numeric);
    total_rank += r;
  }
  out.value = 0.5 * log_det + total_rank * (std::log(gamma) - 1.0);
  return out;
}

LaplaceCriterion approx_log_marginal_likelihood(const FittedModel& model,
                                                const PenalizedObjective& obj) {
  const Eigen::Index p = model.params.dimension();
  Eigen::MatrixXd neg = model.hessian.rows() == p ? Eigen::MatrixXd(-model.hessian)
                                                  : Eigen::MatrixXd(-hessian_fd(model.params, obj));
  neg = 0.5 * (neg + neg.transpose());
  if (!neg.allFinite()) throw IndefiniteHessianError("Hessian has non-finite entries");

  LaplaceCriterion out;
  out.dimension = static_cast<int>(p);
  const double scale = std::max(1.0, neg.diagonal().cwiseAbs().mean());
  std::optional<double> log_det;
  for (double jitter : {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4}) {
    Eigen::MatrixXd a = neg;
    a.diagonal().array() += jitter * scale;
    const Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
    if ((diag.array() <= 0.0).any()) continue;
    log_det = 2.0 * diag.array().log().sum();
    out.jitter = jitter * scale;
    break;
  }
  if (!log_det) throw IndefiniteHessianError("negated Hessian is not positive definite after jitter");
  if (out.jitter > 0.0) out.warnings.push_back("Hessian jitter " + std::to_string(out.jitter));

  const PriorRemainder r =
      log_prior_remainder(prior_penalties(model, obj.penalty()), obj.n_basis(), obj.gamma());
  out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
  out.loglik_pen = penalized_log_likelihood(model.params, obj);
  out.remainder = r.value;
  out.log_det = *log_det;
  out.value = out.loglik_pen + out.remainder + 0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi) -
              0.5 * out.log_det;
  return out;
}

std::vector<double> TuningTrace::gamma_grid() const {
  std::vector<double> out;
  for (const auto& pt : points) out.push_back(pt.gamma);
  return out;
}

std::vector<double> TuningTrace::criteria() const {
  std::vector<double> out;
  for (const auto& pt : points) out.push_back(pt.criterion);
  return out;
}

TuningTrace select_gamma(const PenalizedObjective& obj, std::span<const double> grid,
                         const TuningOptions& options) {
  if (grid.empty()) throw DomainError("gamma grid is empty");
  for (double g : grid) {
    if (!(g > 0.0) || !std::isfinite(g)) throw DomainError("gamma grid values must be positive");
  }
  const auto n = static_cast<long>(grid.size());
  std::vector<GammaPoint> points(grid.size());
  std::vector<std::optional<FittedModel>> fits(grid.size());

  TuningOptions inner = options;
  if (options.grid_exec == Exec::parallel) inner.fit.exec = Exec::serial;

#pragma omp parallel for schedule(dynamic, 1) if (options.grid_exec == Exec::parallel)
  for (long j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    GammaPoint& pt = points[ju];
    pt.gamma = grid[ju];
    try {
      const PenalizedObjective at = obj.with_gamma(pt.gamma);
      KSelection sel = select_k(at, inner);
      pt.k = sel.k;
      pt.sigma2_by_k = sel.sigma2;
      pt.saturated = sel.saturated;
      pt.degenerate = sel.degenerate;
      FittedModel chosen = sel.chosen();
      pt.converged = chosen.convergence.converged;
      pt.sigma2 = chosen.sigma2;
      if (sel.saturated) pt.warnings.push_back("K_max reached the cap");
      if (!sel.converged) pt.warnings.push_back("a fit in the K sequence did not converge");
      chosen.hessian = hessian_fd(chosen.params, at, inner.fit.exec);
      const LaplaceCriterion c = approx_log_marginal_likelihood(chosen, at);
      pt.criterion = c.value;
      pt.warnings.insert(pt.warnings.end(), c.warnings.begin(), c.warnings.end());
      pt.valid = pt.converged && std::isfinite(c.value);
      if (!pt.converged) pt.error = "selected fit did not converge";
      fits[ju] = std::move(chosen);
    } catch (const Error& e) {
      pt.valid = false;
      pt.error = e.what();
    }
  }

  TuningTrace trace;
  trace.fve_threshold = options.t_fve;
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (!points[j].valid) continue;
    if (!best || points[j].criterion > points[*best].criterion ||
        (points[j].criterion == points[*best].criterion && points[j].gamma < points[*best].gamma)) {
      best = j;
    }
  }
  trace.points = std::move(points);
  if (!best) throw TuningError("no valid gamma grid point");
  trace.chosen_index = *best;
  trace.chosen_gamma = trace.points[*best].gamma;
  trace.chosen_k = trace.points[*best].k;
  trace.chosen_fit = std::move(*fits[*best]);
  return trace;
}

}  // namespace hmfpc
