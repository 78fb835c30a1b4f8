#include "hmfpc/model_reference.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "hmfpc/ad.hpp"
#include "hmfpc/errors.hpp"

namespace hmfpc::reference {

namespace {

template <class T>
struct Terms {
  T loglik;
  T wiggliness;
  T sigma2;
};

template <class T>
Terms<T> evaluate(const std::vector<T>& theta, const PenalizedObjective& obj, int n_comp) {
  using std::exp;
  using std::log;
  using std::sqrt;
  const int n_basis = obj.n_basis();
  std::size_t pos = 0;
  std::vector<T> beta0(theta.begin(), theta.begin() + n_basis);
  pos += static_cast<std::size_t>(n_basis);
  std::vector<std::vector<T>> alphas;
  for (int k = 1; k <= n_comp; ++k) {
    const auto len = static_cast<std::size_t>(n_basis - k + 1);
    alphas.emplace_back(theta.begin() + static_cast<std::ptrdiff_t>(pos),
                        theta.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  const T log_sigma = theta[pos];
  const T sigma2 = exp(T(2.0) * log_sigma);
  const auto betas = expand_betas(alphas, n_basis);

  const double log2pi = std::log(2.0 * std::numbers::pi);
  T total(0.0);
  for (const auto& blk : obj.blocks()) {
    const auto n = static_cast<std::size_t>(blk.size());
    // f_k at the subject's times.
    std::vector<std::vector<T>> f(static_cast<std::size_t>(n_comp + 1), std::vector<T>(n, T(0.0)));
    for (std::size_t j = 0; j < n; ++j) {
      for (int l = 0; l < n_basis; ++l) {
        const double x = blk.x(static_cast<Eigen::Index>(j), l);
        if (x == 0.0) continue;
        f[0][j] += x * beta0[static_cast<std::size_t>(l)];
        for (int k = 0; k < n_comp; ++k) {
          f[static_cast<std::size_t>(k + 1)][j] +=
              x * betas[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
        }
      }
    }
    // Dense covariance and its Cholesky factor, lower triangle only.
    std::vector<T> chol(n * n, T(0.0));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c <= r; ++c) {
        T s = r == c ? sigma2 : T(0.0);
        for (int k = 1; k <= n_comp; ++k) s += f[static_cast<std::size_t>(k)][r] * f[static_cast<std::size_t>(k)][c];
        chol[r * n + c] = s;
      }
    }
    for (std::size_t c = 0; c < n; ++c) {
      T diag = chol[c * n + c];
      for (std::size_t k = 0; k < c; ++k) diag -= chol[c * n + k] * chol[c * n + k];
      if (!(ad::value_of(diag) > 0.0)) throw NumericalError("dense covariance not positive definite");
      diag = sqrt(diag);
      chol[c * n + c] = diag;
      for (std::size_t r = c + 1; r < n; ++r) {
        T s = chol[r * n + c];
        for (std::size_t k = 0; k < c; ++k) s -= chol[r * n + k] * chol[c * n + k];
        chol[r * n + c] = s / diag;
      }
    }
    // Forward substitution L z = y - f0.
    std::vector<T> z(n, T(0.0));
    T quad(0.0);
    T log_det(0.0);
    for (std::size_t r = 0; r < n; ++r) {
      T s = T(blk.y[static_cast<Eigen::Index>(r)]) - f[0][r];
      for (std::size_t k = 0; k < r; ++k) s -= chol[r * n + k] * z[k];
      z[r] = s / chol[r * n + r];
      quad += z[r] * z[r];
      log_det += T(2.0) * log(chol[r * n + r]);
    }
    total += T(-0.5) * (T(static_cast<double>(n) * log2pi) + log_det + quad);
  }

  const Eigen::MatrixXd& s = obj.penalty();
  const auto quad_form = [&](const std::vector<T>& beta) {
    T w(0.0);
    for (int r = 0; r < n_basis; ++r) {
      for (int c = 0; c < n_basis; ++c) {
        w += beta[static_cast<std::size_t>(r)] * s(r, c) * beta[static_cast<std::size_t>(c)];
      }
    }
    return w;
  };
  T w = quad_form(beta0);
  for (const auto& beta : betas) w += quad_form(beta);
  return {total, w, sigma2};
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

double log_likelihood(const ParamVector& params, const PenalizedObjective& obj) {
  return evaluate(to_std(params.flatten()), obj, params.n_components()).loglik;
}

double penalized_log_likelihood(const ParamVector& params, const PenalizedObjective& obj) {
  const auto t = evaluate(to_std(params.flatten()), obj, params.n_components());
  return t.loglik - obj.gamma() / (2.0 * t.sigma2) * t.wiggliness;
}

Eigen::VectorXd gradient(const ParamVector& params, const PenalizedObjective& obj) {
  const Eigen::VectorXd theta = params.flatten();
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(static_cast<std::size_t>(theta.size()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) vars.push_back(ad::Var::independent(tape, theta[i]));
  const auto t = evaluate(vars, obj, params.n_components());
  const ad::Var value = t.loglik - ad::Var(obj.gamma()) / (ad::Var(2.0) * t.sigma2) * t.wiggliness;
  const std::vector<double> adj = tape.adjoints(value.index());
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) g[i] = adj[static_cast<std::size_t>(vars[static_cast<std::size_t>(i)].index())];
  return g;
}

double mvn_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("covariance not positive definite");
  const Eigen::VectorXd z = llt.matrixL().solve(y - mean);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) log_det += 2.0 * std::log(llt.matrixLLT()(i, i));
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi) + log_det +
                 z.squaredNorm());
}

}  // namespace hmfpc::reference
