#include "hmfpc/inference.hpp"

#include <algorithm>
#include <cmath>

#include "hmfpc/errors.hpp"
#include "hmfpc/rng.hpp"

namespace hmfpc {

namespace {

constexpr std::uint64_t kBootstrapStream = 0xB0075;

// Lower Cholesky factor of -H with jitter escalation 1e-10 .. 1e-6 times
// trace/p.
Eigen::MatrixXd precision_factor(const Eigen::MatrixXd& hessian, double& jitter) {
  Eigen::MatrixXd neg = -0.5 * (hessian + hessian.transpose());
  if (!neg.allFinite()) throw IndefiniteHessianError("Hessian has non-finite entries; refit the model");
  const double scale = std::max(neg.trace() / static_cast<double>(neg.rows()), 0.0);
  for (double j : {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
    Eigen::MatrixXd a = neg;
    a.diagonal().array() += j * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
      jitter = j * scale;
      return llt.matrixL();
    }
  }
  throw IndefiniteHessianError(
      "negated Hessian is not positive definite after jitter; refit or increase jitter");
}

}  // namespace

BootstrapSample draw_bootstrap(const FittedModel& model, const PenalizedObjective& obj, int n_s,
                               std::uint64_t seed, Exec exec) {
  if (n_s < 100) throw DomainError("bootstrap needs at least 100 draws");
  const int n_basis = obj.n_basis();
  const int k = model.n_components;
  const Eigen::Index p = model.params.dimension();
  if (model.hessian.rows() != p || model.hessian.cols() != p) {
    throw DomainError("model has no Hessian; fit with compute_hessian");
  }
  BootstrapSample out;
  out.n_s = n_s;
  out.n_basis = n_basis;
  out.n_subjects = obj.n_subjects();
  out.seed = seed;
  const Eigen::MatrixXd l = precision_factor(model.hessian, out.jitter);
  const Eigen::VectorXd theta_hat = model.params.flatten();
  out.deltas.resize(static_cast<std::size_t>(n_s));
  out.thetas.resize(static_cast<std::size_t>(n_s));
  out.scores.resize(static_cast<std::size_t>(n_s));
  const auto d = static_cast<Eigen::Index>(obj.n_subjects());

#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::parallel)
  for (int j = 0; j < n_s; ++j) {
    CounterRng rng(seed, derive_seed(kBootstrapStream, static_cast<std::uint64_t>(j)));
    Eigen::VectorXd z(p);
    for (Eigen::Index q = 0; q < p; ++q) z[q] = rng.normal();
    // L L' = -H, so L^{-T} z has covariance (-H)^{-1}.
    const Eigen::VectorXd theta = theta_hat + l.transpose().triangularView<Eigen::Upper>().solve(z);
    const ParamVector params = ParamVector::unflatten(theta, n_basis, k);
    const OrthoCoefs coefs = expand(params);
    const Eigen::MatrixXd b = coefs.matrix(n_basis);
    const double sigma2 = params.sigma2();

    Eigen::MatrixXd delta(n_basis, d);
    Eigen::MatrixXd u(d, k);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto& blk = obj.blocks()[static_cast<std::size_t>(i)];
      Eigen::VectorXd ui(k);
      if (k > 0) {
        const SubjectCovariance cov(sigma2, blk.x * b);
        const Eigen::VectorXd mean = cov.conditional_mean(blk.y - blk.x * params.beta0);
        // Conditional covariance sigma2 M^{-1}; with M = C C', draw sigma C^{-T} w.
        Eigen::VectorXd w(k);
        for (int q = 0; q < k; ++q) w[q] = rng.normal();
        const Eigen::MatrixXd c = cov.inner_cholesky();
        ui = mean + std::sqrt(sigma2) * c.transpose().triangularView<Eigen::Upper>().solve(w);
      }
      u.row(i) = ui.transpose();
      delta.col(i) = params.beta0 + b * ui;
    }
    const auto ju = static_cast<std::size_t>(j);
    out.deltas[ju] = std::move(delta);
    out.thetas[ju] = theta;
    out.scores[ju] = std::move(u);
  }
  return out;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile probability outside [0, 1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ConfidenceBand confidence_band(const BootstrapSample& sample, const OrthoBasis& basis,
                               std::size_t subject, std::span<const double> times, double level,
                               int deriv) {
  if (!(level >= 0.0 && level < 1.0)) throw DomainError("level must lie in [0, 1)");
  if (deriv != 0 && deriv != 1) throw DomainError("deriv must be 0 or 1");
  if (subject >= sample.n_subjects) throw DomainError("subject index out of range");
  if (sample.deltas.empty()) throw DomainError("bootstrap sample is empty");
  ConfidenceBand band;
  band.subject = subject;
  band.times.assign(times.begin(), times.end());
  band.level = level;
  band.deriv = deriv;
  const auto m = static_cast<Eigen::Index>(times.size());
  band.lower.resize(m);
  band.upper.resize(m);
  if (static_cast<double>(sample.n_s) * (1.0 - level) / 2.0 < 5.0) {
    band.warning = "fewer than 5 draws beyond each quantile; band endpoints are imprecise";
  }
  Eigen::MatrixXd delta(sample.n_basis, sample.n_s);
  for (int j = 0; j < sample.n_s; ++j) {
    delta.col(j) = sample.deltas[static_cast<std::size_t>(j)].col(static_cast<Eigen::Index>(subject));
  }
  std::vector<double> values(static_cast<std::size_t>(sample.n_s));
  for (Eigen::Index q = 0; q < m; ++q) {
    const Eigen::VectorXd bt =
        basis.eval(times[static_cast<std::size_t>(q)], deriv, Extrapolation::linear);
    for (int j = 0; j < sample.n_s; ++j) values[static_cast<std::size_t>(j)] = delta.col(j).dot(bt);
    std::sort(values.begin(), values.end());
    band.lower[q] = sorted_quantile(values, 0.5 * (1.0 - level));
    band.upper[q] = sorted_quantile(values, 0.5 * (1.0 + level));
  }
  return band;
}

ConfidenceBand confidence_band(const BootstrapSample& sample, const FittedModel& model,
                               const OrthoBasis& basis, std::size_t subject,
                               std::span<const double> times, double level, int deriv) {
  ConfidenceBand band = confidence_band(sample, basis, subject, times, level, deriv);
  band.estimate = predict_trajectory(model, basis, subject, times, deriv);
  return band;
}

}  // namespace hmfpc
