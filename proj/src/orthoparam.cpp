#include "hmfpc/orthoparam.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "hmfpc/errors.hpp"

namespace hmfpc {

int ParamVector::dimension(int n_basis, int n_components) {
  int p = n_basis + 1;
  for (int k = 1; k <= n_components; ++k) p += n_basis - k + 1;
  return p;
}

ParamVector ParamVector::zeros(int n_basis, int n_components) {
  ParamVector params;
  params.beta0 = Eigen::VectorXd::Zero(n_basis);
  for (int k = 1; k <= n_components; ++k) {
    params.alphas.push_back(Eigen::VectorXd::Zero(n_basis - k + 1));
  }
  return params;
}

ParamVector ParamVector::unflatten(const Eigen::VectorXd& theta, int n_basis,
                                   int n_components) {
  if (theta.size() != dimension(n_basis, n_components)) {
    throw DomainError("parameter vector has length " + std::to_string(theta.size()) +
                      ", expected " + std::to_string(dimension(n_basis, n_components)));
  }
  ParamVector params;
  Eigen::Index pos = 0;
  params.beta0 = theta.segment(pos, n_basis);
  pos += n_basis;
  for (int k = 1; k <= n_components; ++k) {
    const int len = n_basis - k + 1;
    params.alphas.push_back(theta.segment(pos, len));
    pos += len;
  }
  params.log_sigma = theta[pos];
  return params;
}

Eigen::VectorXd ParamVector::flatten() const {
  Eigen::VectorXd theta(dimension());
  Eigen::Index pos = 0;
  theta.segment(pos, beta0.size()) = beta0;
  pos += beta0.size();
  for (const auto& a : alphas) {
    theta.segment(pos, a.size()) = a;
    pos += a.size();
  }
  theta[pos] = log_sigma;
  return theta;
}

void ParamVector::validate() const {
  for (int k = 1; k <= n_components(); ++k) {
    if (alphas[static_cast<std::size_t>(k - 1)].size() != n_basis() - k + 1) {
      throw DomainError("alpha_" + std::to_string(k) + " has length " +
                        std::to_string(alphas[static_cast<std::size_t>(k - 1)].size()) +
                        ", expected " + std::to_string(n_basis() - k + 1));
    }
  }
}

Eigen::MatrixXd OrthoCoefs::matrix(int n_basis) const {
  Eigen::MatrixXd b(n_basis, n_components());
  for (int k = 0; k < n_components(); ++k) b.col(k) = betas[static_cast<std::size_t>(k)];
  return b;
}

Eigen::MatrixXd householder_null_space(const Eigen::MatrixXd& b) {
  const Eigen::Index n = b.rows();
  const Eigen::Index m = b.cols();
  if (m > n) throw DomainError("QR null space needs at most as many columns as rows");
  Eigen::MatrixXd r = b;
  std::vector<Eigen::VectorXd> vs;
  std::vector<bool> active;
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::VectorXd x = r.col(j).tail(n - j);
    const double head = x[0];
    const double tail_sq = x.tail(x.size() - 1).squaredNorm();
    const double norm = std::sqrt(head * head + tail_sq);
    if (norm < kRankTolerance || (tail_sq == 0.0 && head >= 0.0)) {
      vs.emplace_back();
      active.push_back(false);
      continue;
    }
    Eigen::VectorXd v = x;
    v[0] = head <= 0.0 ? head - norm : -tail_sq / (head + norm);
    const double scale = 2.0 / v.squaredNorm();
    r.bottomRows(n - j) -= scale * v * (v.transpose() * r.bottomRows(n - j));
    vs.push_back(std::move(v));
    active.push_back(true);
  }
  // Q = H_1 ... H_m applied to the trailing identity columns.
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n - m);
  t.bottomRows(n - m).setIdentity();
  for (Eigen::Index j = m - 1; j >= 0; --j) {
    if (!active[static_cast<std::size_t>(j)]) continue;
    const Eigen::VectorXd& v = vs[static_cast<std::size_t>(j)];
    const double scale = 2.0 / v.squaredNorm();
    t.bottomRows(n - j) -= scale * v * (v.transpose() * t.bottomRows(n - j));
  }
  return t;
}

OrthoCoefs expand(const ParamVector& params, const Eigen::MatrixXd& penalty) {
  params.validate();
  const int n_basis = params.n_basis();
  const int n_comp = params.n_components();
  std::vector<std::vector<double>> alphas;
  alphas.reserve(static_cast<std::size_t>(n_comp));
  for (const auto& a : params.alphas) alphas.emplace_back(a.data(), a.data() + a.size());

  OrthoCoefs coefs;
  const auto betas = expand_betas(alphas, n_basis, &coefs.rank_deficient);
  for (const auto& b : betas) {
    coefs.betas.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), n_basis));
  }

  Eigen::MatrixXd previous(n_basis, 0);
  for (int k = 0; k < n_comp; ++k) {
    Eigen::MatrixXd t = householder_null_space(previous);
    if (penalty.size() > 0) {
      Eigen::MatrixXd s = t.transpose() * penalty * t;
      coefs.s_matrices.push_back(0.5 * (s + s.transpose()));
    }
    coefs.t_matrices.push_back(std::move(t));
    previous.conservativeResize(Eigen::NoChange, k + 1);
    previous.col(k) = coefs.betas[static_cast<std::size_t>(k)];
  }
  return coefs;
}

std::vector<Eigen::VectorXd> recover_alphas(const std::vector<Eigen::VectorXd>& betas) {
  std::vector<Eigen::VectorXd> alphas;
  if (betas.empty()) return alphas;
  const Eigen::Index n = betas.front().size();
  Eigen::MatrixXd previous(n, 0);
  for (std::size_t k = 0; k < betas.size(); ++k) {
    alphas.push_back(householder_null_space(previous).transpose() * betas[k]);
    previous.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(k) + 1);
    previous.col(static_cast<Eigen::Index>(k)) = betas[k];
  }
  return alphas;
}

NormalizedCoefs normalize_fit(const OrthoCoefs& coefs,
                              const Eigen::VectorXd& basis_integrals,
                              const Eigen::MatrixXd& penalty) {
  const int n_comp = coefs.n_components();
  NormalizedCoefs out;
  out.order.resize(static_cast<std::size_t>(n_comp));
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
    return coefs.betas[static_cast<std::size_t>(a)].squaredNorm() >
           coefs.betas[static_cast<std::size_t>(b)].squaredNorm();
  });

  std::vector<Eigen::VectorXd> betas;
  for (int old : out.order) {
    const Eigen::VectorXd& beta = coefs.betas[static_cast<std::size_t>(old)];
    const double sign = basis_integrals.dot(beta) < 0.0 ? -1.0 : 1.0;
    out.signs.push_back(sign);
    betas.push_back(sign * beta);
  }
  out.alphas = recover_alphas(betas);

  if (n_comp == 0) return out;
  ParamVector probe = ParamVector::zeros(static_cast<int>(betas.front().size()), n_comp);
  probe.alphas = out.alphas;
  out.coefs = expand(probe, penalty);
  return out;
}

}  // namespace hmfpc
