#include "hmfpc/fit.hpp"

#include <cmath>
#include <limits>

#include "hmfpc/errors.hpp"
#include "hmfpc/rng.hpp"

namespace hmfpc {

namespace {

// Ratio lambda_K / lambda_{K-1} above which a fit is treated as a label swap
// into a poor basin.
constexpr double kLabelSwapRatio = 10.0;

bool suspicious_ordering(const ParamVector& params) {
  const int k = params.n_components();
  if (k < 2) return false;
  const OrthoCoefs coefs = expand(params);
  const double last = coefs.betas[static_cast<std::size_t>(k - 1)].squaredNorm();
  const double prev = coefs.betas[static_cast<std::size_t>(k - 2)].squaredNorm();
  return last > kLabelSwapRatio * prev;
}

Eigen::VectorXd draw_alpha(CounterRng& rng, int length, double scale) {
  Eigen::VectorXd a(length);
  for (int j = 0; j < length; ++j) a[j] = scale * rng.normal();
  return a;
}

}  // namespace

std::vector<double> FittedModel::lambdas() const {
  std::vector<double> out;
  for (const auto& b : coefs.betas) out.push_back(b.squaredNorm());
  return out;
}

Eigen::VectorXd FittedModel::subject_coefficients(std::size_t subject) const {
  if (subject >= static_cast<std::size_t>(scores.rows())) {
    throw DomainError("unknown subject index " + std::to_string(subject));
  }
  Eigen::VectorXd delta = params.beta0;
  for (int k = 0; k < n_components; ++k) {
    delta += scores(static_cast<Eigen::Index>(subject), k) * coefs.betas[static_cast<std::size_t>(k)];
  }
  return delta;
}

ParamVector initial_params(const PenalizedObjective& obj) {
  const int n_basis = obj.n_basis();
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(n_basis, n_basis);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(n_basis);
  double yty = 0.0;
  for (const auto& blk : obj.blocks()) {
    xtx.noalias() += blk.x.transpose() * blk.x;
    xty.noalias() += blk.x.transpose() * blk.y;
    yty += blk.y.squaredNorm();
  }
  Eigen::MatrixXd lhs = xtx + obj.gamma() * obj.penalty();
  // A tiny ridge keeps the system solvable when the data do not pin down
  // every basis direction and gamma is zero.
  lhs.diagonal().array() += 1e-10 * std::max(1.0, lhs.diagonal().maxCoeff());
  ParamVector params = ParamVector::zeros(n_basis, 0);
  params.beta0 = lhs.ldlt().solve(xty);

  double rss = 0.0;
  for (const auto& blk : obj.blocks()) rss += (blk.y - blk.x * params.beta0).squaredNorm();
  const double wiggle = params.beta0.dot(obj.penalty() * params.beta0);
  const auto n = static_cast<double>(obj.n_observations());
  const double floor = 1e-12 * std::max(1.0, yty / n);
  params.log_sigma = 0.5 * std::log(std::max((rss + obj.gamma() * wiggle) / n, floor));
  return params;
}

ParamVector extend_params(const ParamVector& previous, int n_components, std::uint64_t seed,
                          int attempt, double scale) {
  ParamVector params = previous;
  CounterRng rng(seed, derive_seed(static_cast<std::uint64_t>(n_components),
                                   static_cast<std::uint64_t>(attempt)));
  const int n_basis = params.n_basis();
  while (params.n_components() < n_components) {
    const int k = params.n_components() + 1;
    params.alphas.push_back(draw_alpha(rng, n_basis - k + 1, scale));
  }
  return params;
}

Eigen::MatrixXd hessian_fd(const ParamVector& params, const PenalizedObjective& obj, Exec exec) {
  const Eigen::VectorXd theta = params.flatten();
  const int n_basis = params.n_basis();
  const int n_comp = params.n_components();
  const Eigen::Index p = theta.size();
  Eigen::MatrixXd h(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double step = 1e-5 * (1.0 + std::abs(theta[j]));
    Eigen::VectorXd up = theta;
    Eigen::VectorXd down = theta;
    up[j] += step;
    down[j] -= step;
    const Eigen::VectorXd g_up = gradient(ParamVector::unflatten(up, n_basis, n_comp), obj, exec);
    const Eigen::VectorXd g_down =
        gradient(ParamVector::unflatten(down, n_basis, n_comp), obj, exec);
    h.col(j) = (g_up - g_down) / (up[j] - down[j]);
  }
  return 0.5 * (h + h.transpose());
}

namespace {

// Newton steps with the finite-difference Hessian, used when BFGS stalls in a
// stiff direction where the gradient test sits below roundoff. Accepts when
// the gradient test passes or the Newton decrement g'(-H)^{-1}g / 2 falls
// below 1e-10 max(1, |f|).
void newton_polish(BfgsResult& res, const ObjectiveFn& fn, const PenalizedObjective& obj,
                   int n_basis, int n_components, const BfgsOptions& bfgs, Exec exec) {
  constexpr int kMaxNewton = 20;
  constexpr double kDecrementTolerance = 1e-10;
  if (!std::isfinite(res.value) || !res.x.allFinite()) return;
  for (int it = 0; it < kMaxNewton; ++it) {
    const double scale = std::max(1.0, std::abs(res.value));
    if (res.gradient.lpNorm<Eigen::Infinity>() < bfgs.gradient_tolerance * scale) {
      res.converged = true;
      res.message = "gradient tolerance reached after Newton polish";
      return;
    }
    Eigen::MatrixXd neg;
    try {
      neg = -hessian_fd(ParamVector::unflatten(res.x, n_basis, n_components), obj, exec);
    } catch (const Error&) {
      return;
    }
    res.evaluations += 2 * static_cast<int>(res.x.size());
    const Eigen::LLT<Eigen::MatrixXd> llt(neg);
    if (llt.info() != Eigen::Success) return;
    const Eigen::VectorXd step = llt.solve(res.gradient);
    const double decrement = 0.5 * res.gradient.dot(step);
    if (decrement < kDecrementTolerance * scale) {
      res.converged = true;
      res.message = "Newton decrement below working precision";
      return;
    }
    double t = 1.0;
    bool moved = false;
    for (int half = 0; half < 30 && !moved; ++half, t *= 0.5) {
      Eigen::VectorXd g;
      const Eigen::VectorXd x = res.x + t * step;
      double f;
      try {
        f = fn(x, g);
      } catch (const Error&) {
        continue;
      }
      ++res.evaluations;
      if (std::isfinite(f) && f >= res.value) {
        res.x = x;
        res.value = f;
        res.gradient = g;
        moved = true;
      }
    }
    ++res.iterations;
    if (!moved) return;
  }
}

}  // namespace

FittedModel maximize(const PenalizedObjective& obj, int n_components,
                     const std::optional<ParamVector>& init, const FitOptions& options) {
  if (n_components < 0) throw DomainError("number of components must be nonnegative");
  const int n_basis = obj.n_basis();
  ParamVector start;
  if (init) {
    init->validate();
    if (init->n_basis() != n_basis || init->n_components() != n_components) {
      throw DomainError("initial parameters do not match (K, n_B)");
    }
    start = *init;
  } else {
    start = extend_params(initial_params(obj), n_components, options.seed, 0, options.init_scale);
  }

  const ObjectiveFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    auto vg = penalized_value_and_gradient(ParamVector::unflatten(x, n_basis, n_components), obj,
                                           options.exec);
    g = std::move(vg.gradient);
    return vg.value;
  };

  std::optional<BfgsResult> best;
  bool best_good = false;
  int best_attempt = 0;
  int tried = 0;
  std::string last_error;
  for (int attempt = 0; attempt <= options.restarts; ++attempt) {
    ParamVector x0 = start;
    if (attempt > 0) {
      if (n_components == 0) break;  // K = 0 has no random start to vary
      // Redraw the newest component; redraw all of them for a cold start.
      const int keep = init ? n_components - 1 : 0;
      x0.alphas.resize(static_cast<std::size_t>(keep));
      x0 = extend_params(x0, n_components, options.seed, attempt, options.init_scale);
    }
    ++tried;
    BfgsResult res;
    try {
      res = maximize_bfgs(fn, x0.flatten(), options.bfgs);
    } catch (const Error& e) {
      last_error = e.what();
      continue;
    }
    if (!res.converged) newton_polish(res, fn, obj, n_basis, n_components, options.bfgs, options.exec);
    const bool good =
        res.converged &&
        !suspicious_ordering(ParamVector::unflatten(res.x, n_basis, n_components));
    if (!best || (good && !best_good) || (good == best_good && res.value > best->value)) {
      best = res;
      best_good = good;
      best_attempt = attempt;
    }
    if (good) break;
  }

  FittedModel model;
  model.n_components = n_components;
  model.gamma = obj.gamma();
  model.seed = options.seed;
  model.convergence.attempts_tried = tried;
  if (!best) {
    model.params = start;
    model.coefs = expand(start, obj.penalty());
    model.sigma2 = start.sigma2();
    model.loglik_pen = -std::numeric_limits<double>::infinity();
    model.convergence.converged = false;
    model.convergence.message = "every start failed: " + last_error;
    return model;
  }

  // Normalize ordering and signs, then re-express theta in that order.
  ParamVector params = ParamVector::unflatten(best->x, n_basis, n_components);
  const OrthoCoefs raw = expand(params);
  NormalizedCoefs normalized = normalize_fit(raw, obj.basis().integrals(), obj.penalty());
  params.alphas = normalized.alphas;
  if (n_components == 0) normalized.coefs = expand(params, obj.penalty());

  model.params = params;
  model.coefs = std::move(normalized.coefs);
  model.sigma2 = params.sigma2();
  model.convergence.converged = best->converged;
  model.convergence.iterations = best->iterations;
  model.convergence.evaluations = best->evaluations;
  model.convergence.attempt = best_attempt;
  model.convergence.message = best->message;
  if (best->converged && !best_good) model.convergence.message += "; component ordering suspicious";

  try {
    const ValueAndGradient vg = penalized_value_and_gradient(params, obj, options.exec);
    model.loglik_pen = vg.value;
    model.convergence.gradient_norm = vg.gradient.lpNorm<Eigen::Infinity>();
  } catch (const NonDifferentiableError&) {
    model.loglik_pen = penalized_log_likelihood(params, obj, options.exec);
    model.convergence.gradient_norm = std::numeric_limits<double>::quiet_NaN();
  }
  model.scores = estimate_scores(model, obj);
  if (options.compute_hessian) {
    try {
      model.hessian = hessian_fd(params, obj, options.exec);
    } catch (const Error& e) {
      model.hessian.resize(0, 0);
      model.convergence.message += std::string("; hessian unavailable: ") + e.what();
    }
  }
  return model;
}

std::vector<FittedModel> fit_sequence(const PenalizedObjective& obj, int k_max,
                                      const FitOptions& options) {
  if (k_max < 0) throw DomainError("k_max must be nonnegative");
  std::vector<FittedModel> fits;
  fits.push_back(maximize(obj, 0, initial_params(obj), options));
  for (int k = 1; k <= k_max && fits.back().convergence.converged; ++k) {
    const ParamVector start =
        extend_params(fits.back().params, k, options.seed, 0, options.init_scale);
    fits.push_back(maximize(obj, k, start, options));
  }
  return fits;
}

Eigen::MatrixXd estimate_scores(const FittedModel& model, const PenalizedObjective& obj) {
  const auto d = static_cast<Eigen::Index>(obj.n_subjects());
  const int k = model.n_components;
  Eigen::MatrixXd scores(d, k);
  if (k == 0) return scores;
  const Eigen::MatrixXd b = model.coefs.matrix(obj.n_basis());
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& blk = obj.blocks()[static_cast<std::size_t>(i)];
    const SubjectCovariance cov(model.sigma2, blk.x * b);
    scores.row(i) = cov.conditional_mean(blk.y - blk.x * model.params.beta0).transpose();
  }
  return scores;
}

Eigen::VectorXd predict_trajectory(const FittedModel& model, const OrthoBasis& basis,
                                   std::size_t subject, std::span<const double> times, int deriv) {
  const Eigen::VectorXd delta = model.subject_coefficients(subject);
  Eigen::VectorXd out(static_cast<Eigen::Index>(times.size()));
  for (std::size_t j = 0; j < times.size(); ++j) {
    out[static_cast<Eigen::Index>(j)] = delta.dot(basis.eval(times[j], deriv, Extrapolation::linear));
  }
  return out;
}

Eigen::MatrixXd component_functions(const FittedModel& model, const OrthoBasis& basis,
                                    std::span<const double> times, int deriv) {
  Eigen::MatrixXd coef(basis.size(), model.n_components + 1);
  coef.col(0) = model.params.beta0;
  for (int k = 0; k < model.n_components; ++k) coef.col(k + 1) = model.coefs.betas[static_cast<std::size_t>(k)];
  Eigen::MatrixXd out(static_cast<Eigen::Index>(times.size()), model.n_components + 1);
  for (std::size_t j = 0; j < times.size(); ++j) {
    out.row(static_cast<Eigen::Index>(j)) =
        (coef.transpose() * basis.eval(times[j], deriv, Extrapolation::linear)).transpose();
  }
  return out;
}

}  // namespace hmfpc
