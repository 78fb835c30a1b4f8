#include "hmfpc/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hmfpc/ad.hpp"
#include "hmfpc/errors.hpp"

namespace hmfpc {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Scratch buffers sized for the largest subject; reused across subjects.
struct Workspace {
  Eigen::VectorXd r;
  Eigen::VectorXd a;
  Eigen::MatrixXd f;
  Eigen::MatrixXd df;
  Eigen::MatrixXd m;
  Eigen::MatrixXd minv;
  Eigen::VectorXd c;
  Eigen::LLT<Eigen::MatrixXd> llt;

  Workspace(Eigen::Index max_n, Eigen::Index n_comp)
      : r(max_n), a(max_n), f(max_n, n_comp), df(max_n, n_comp),
        m(n_comp, n_comp), minv(n_comp, n_comp), c(n_comp), llt(n_comp) {}
};

// Layout of one subject's contribution column:
// [loglik, d/d beta0 (n_B), d/d B (n_B*K, column-major), d/d sigma2].
struct TermLayout {
  Eigen::Index n_basis;
  Eigen::Index n_comp;
  Eigen::Index rows() const { return 2 + n_basis + n_basis * n_comp; }
};

// Log-density of subject i and, when `grad` is set, its partials with respect
// to beta0, B = (beta_1 .. beta_K) and sigma2. Returns false on a non-finite
// result or a failed factorization.
bool subject_term(const SubjectBlock& blk, const Eigen::VectorXd& beta0,
                  const Eigen::MatrixXd& b, double sigma2, bool grad,
                  Workspace& ws, const TermLayout& layout,
                  Eigen::Ref<Eigen::VectorXd> out) {
  const Eigen::Index n = blk.size();
  const Eigen::Index k = b.cols();
  auto r = ws.r.head(n);
  auto a = ws.a.head(n);
  r.noalias() = blk.y - blk.x * beta0;

  double log_det = 0.0;
  if (k == 0) {
    a = r / sigma2;
    log_det = static_cast<double>(n) * std::log(sigma2);
  } else {
    auto f = ws.f.topRows(n);
    f.noalias() = blk.x * b;
    ws.m.noalias() = f.transpose() * f;
    ws.m.diagonal().array() += sigma2;
    ws.llt.compute(ws.m);
    if (ws.llt.info() != Eigen::Success) return false;
    const auto& l = ws.llt.matrixLLT();
    double log_det_m = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) log_det_m += 2.0 * std::log(l(j, j));
    log_det = static_cast<double>(n - k) * std::log(sigma2) + log_det_m;
    ws.c.noalias() = f.transpose() * r;
    ws.llt.solveInPlace(ws.c);
    a = r;
    a.noalias() -= f * ws.c;
    a /= sigma2;
  }
  const double quad = r.dot(a);
  const double value = -0.5 * (static_cast<double>(n) * kLog2Pi + log_det + quad);
  if (!std::isfinite(value)) return false;
  out[0] = value;
  if (!grad) return true;

  out.segment(1, layout.n_basis).noalias() = blk.x.transpose() * a;
  double trace_inv = static_cast<double>(n - k) / sigma2;
  if (k > 0) {
    ws.minv.setIdentity();
    ws.llt.solveInPlace(ws.minv);
    trace_inv += ws.minv.trace();
    auto f = ws.f.topRows(n);
    auto df = ws.df.topRows(n);
    // dl/dF = 2 G F with G = dl/dSigma = (a a' - Sigma^{-1}) / 2, and
    // Sigma^{-1} F = F M^{-1}.
    df.noalias() = -f * ws.minv;
    df.noalias() += a * (a.transpose() * f);
    Eigen::Map<Eigen::MatrixXd> db(out.data() + 1 + layout.n_basis, layout.n_basis, k);
    db.noalias() = blk.x.transpose() * df;
  }
  out[layout.rows() - 1] = 0.5 * (a.squaredNorm() - trace_inv);
  return true;
}

struct Assembled {
  double loglik = 0.0;
  Eigen::VectorXd d_beta0;
  Eigen::MatrixXd d_b;
  double d_sigma2 = 0.0;
};

Assembled assemble(const PenalizedObjective& obj, const Eigen::VectorXd& beta0,
                   const Eigen::MatrixXd& b, double sigma2, bool grad, Exec exec) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw NumericalError("error variance is not a positive finite number");
  }
  const auto& blocks = obj.blocks();
  const auto d = static_cast<Eigen::Index>(blocks.size());
  const TermLayout layout{obj.n_basis(), b.cols()};
  Eigen::Index max_n = 0;
  for (const auto& blk : blocks) max_n = std::max(max_n, blk.size());

  Eigen::MatrixXd terms(grad ? layout.rows() : 1, d);
  std::vector<char> ok(static_cast<std::size_t>(d), 1);
  const bool parallel = exec == Exec::parallel && d > 1;
#pragma omp parallel if (parallel)
  {
    Workspace ws(max_n, b.cols());
    Eigen::VectorXd scratch(layout.rows());
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < d; ++i) {
      if (grad) {
        ok[static_cast<std::size_t>(i)] =
            subject_term(blocks[static_cast<std::size_t>(i)], beta0, b, sigma2, true,
                         ws, layout, terms.col(i));
      } else {
        ok[static_cast<std::size_t>(i)] =
            subject_term(blocks[static_cast<std::size_t>(i)], beta0, b, sigma2, false,
                         ws, layout, scratch);
        terms(0, i) = scratch[0];
      }
    }
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!ok[static_cast<std::size_t>(i)]) {
      throw NumericalError("non-finite log-likelihood term",
                           static_cast<std::size_t>(i));
    }
  }

  // Fixed-order reduction.
  Eigen::VectorXd total = Eigen::VectorXd::Zero(terms.rows());
  for (Eigen::Index i = 0; i < d; ++i) total += terms.col(i);

  Assembled out;
  out.loglik = total[0];
  if (grad) {
    out.d_beta0 = total.segment(1, layout.n_basis);
    out.d_b = Eigen::Map<const Eigen::MatrixXd>(total.data() + 1 + layout.n_basis,
                                                 layout.n_basis, b.cols());
    out.d_sigma2 = total[layout.rows() - 1];
  }
  return out;
}

}  // namespace

PenalizedObjective::PenalizedObjective(const OrthoBasis& basis,
                                       const LongitudinalDataset& data, double gamma)
    : PenalizedObjective(std::make_shared<const OrthoBasis>(basis),
                         make_blocks(basis, data), gamma) {}

PenalizedObjective::PenalizedObjective(std::shared_ptr<const OrthoBasis> basis,
                                       std::vector<SubjectBlock> blocks, double gamma)
    : basis_(std::move(basis)),
      blocks_(std::make_shared<const std::vector<SubjectBlock>>(std::move(blocks))),
      gamma_(gamma) {
  if (!(gamma_ >= 0.0) || !std::isfinite(gamma_)) {
    throw DomainError("smoothing parameter must be finite and nonnegative");
  }
  for (const auto& blk : *blocks_) {
    if (blk.size() == 0) throw EmptySubjectError("subject without observations");
    if (blk.x.rows() != blk.y.size() || blk.x.cols() != basis_->size()) {
      throw DomainError("subject block dimensions do not match the basis");
    }
  }
}

PenalizedObjective PenalizedObjective::with_gamma(double gamma) const {
  PenalizedObjective copy = *this;
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw DomainError("smoothing parameter must be finite and nonnegative");
  }
  copy.gamma_ = gamma;
  return copy;
}

std::size_t PenalizedObjective::n_observations() const {
  std::size_t n = 0;
  for (const auto& blk : *blocks_) n += static_cast<std::size_t>(blk.size());
  return n;
}

std::vector<SubjectBlock> make_blocks(const OrthoBasis& basis,
                                      const LongitudinalDataset& data) {
  std::vector<SubjectBlock> blocks;
  blocks.reserve(data.size());
  for (const auto& s : data.subjects()) {
    if (s.times.empty()) throw EmptySubjectError("subject '" + s.id + "' has no observations");
    SubjectBlock blk;
    blk.x = basis.design(s.times);
    blk.y = Eigen::Map<const Eigen::VectorXd>(s.values.data(),
                                              static_cast<Eigen::Index>(s.values.size()));
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

SubjectCovariance::SubjectCovariance(double sigma2, Eigen::MatrixXd f)
    : sigma2_(sigma2), f_(std::move(f)) {
  if (!(sigma2_ > 0.0)) throw DomainError("error variance must be positive");
  m_ = f_.transpose() * f_;
  m_.diagonal().array() += sigma2_;
  llt_.compute(m_);
  if (llt_.info() != Eigen::Success) throw NumericalError("Woodbury inner matrix is not positive definite");
}

double SubjectCovariance::log_det() const {
  const Eigen::Index n = f_.rows();
  const Eigen::Index k = f_.cols();
  double log_det_m = 0.0;
  const auto& l = llt_.matrixLLT();
  for (Eigen::Index j = 0; j < k; ++j) log_det_m += 2.0 * std::log(l(j, j));
  return static_cast<double>(n - k) * std::log(sigma2_) + log_det_m;
}

Eigen::VectorXd SubjectCovariance::solve(const Eigen::VectorXd& v) const {
  if (f_.cols() == 0) return v / sigma2_;
  const Eigen::VectorXd c = llt_.solve(f_.transpose() * v);
  return (v - f_ * c) / sigma2_;
}

Eigen::MatrixXd SubjectCovariance::dense() const {
  Eigen::MatrixXd s = f_ * f_.transpose();
  s.diagonal().array() += sigma2_;
  return s;
}

Eigen::VectorXd SubjectCovariance::conditional_mean(const Eigen::VectorXd& residual) const {
  if (f_.cols() == 0) return Eigen::VectorXd();
  return llt_.solve(f_.transpose() * residual);
}

Eigen::MatrixXd SubjectCovariance::conditional_cov() const {
  const Eigen::Index k = f_.cols();
  if (k == 0) return Eigen::MatrixXd();
  Eigen::MatrixXd c = sigma2_ * llt_.solve(Eigen::MatrixXd::Identity(k, k));
  return 0.5 * (c + c.transpose());
}

SubjectCovariance subject_covariance(double sigma2, const std::vector<Eigen::VectorXd>& fki) {
  if (!(sigma2 > 0.0)) throw DomainError("error variance must be positive");
  const Eigen::Index n = fki.empty() ? 0 : fki.front().size();
  Eigen::MatrixXd f(n, static_cast<Eigen::Index>(fki.size()));
  for (std::size_t k = 0; k < fki.size(); ++k) {
    if (fki[k].size() != n) throw DomainError("component vectors differ in length");
    f.col(static_cast<Eigen::Index>(k)) = fki[k];
  }
  return SubjectCovariance(sigma2, std::move(f));
}

double log_likelihood(const ParamVector& params, const PenalizedObjective& obj, Exec exec) {
  if (params.n_basis() != obj.n_basis()) throw DomainError("beta0 length does not match the basis");
  const OrthoCoefs coefs = expand(params);
  return assemble(obj, params.beta0, coefs.matrix(obj.n_basis()), params.sigma2(), false, exec)
      .loglik;
}

double expected_wiggliness(const OrthoCoefs& coefs, const Eigen::VectorXd& beta0,
                           const Eigen::MatrixXd& penalty) {
  double w = beta0.dot(penalty * beta0);
  for (const auto& beta : coefs.betas) w += beta.dot(penalty * beta);
  return w;
}

double penalized_log_likelihood(const ParamVector& params, const PenalizedObjective& obj,
                                Exec exec) {
  if (params.n_basis() != obj.n_basis()) throw DomainError("beta0 length does not match the basis");
  const OrthoCoefs coefs = expand(params);
  const double sigma2 = params.sigma2();
  const double loglik =
      assemble(obj, params.beta0, coefs.matrix(obj.n_basis()), sigma2, false, exec).loglik;
  if (obj.gamma() == 0.0) return loglik;
  return loglik -
         obj.gamma() / (2.0 * sigma2) * expected_wiggliness(coefs, params.beta0, obj.penalty());
}

ValueAndGradient penalized_value_and_gradient(const ParamVector& params,
                                              const PenalizedObjective& obj, Exec exec) {
  params.validate();
  if (params.n_basis() != obj.n_basis()) throw DomainError("beta0 length does not match the basis");
  const int n_basis = obj.n_basis();
  const int n_comp = params.n_components();

  // Record the orthogonality transform on a tape.
  ad::Tape tape;
  tape.reserve(static_cast<std::size_t>(8 * n_comp * n_comp * n_basis + 4 * n_comp * n_basis + 16));
  std::vector<std::vector<ad::Var>> alpha_vars(static_cast<std::size_t>(n_comp));
  for (int k = 0; k < n_comp; ++k) {
    const auto& a = params.alphas[static_cast<std::size_t>(k)];
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      alpha_vars[static_cast<std::size_t>(k)].push_back(ad::Var::independent(tape, a[j]));
    }
  }
  bool rank_deficient = false;
  const auto beta_vars = expand_betas(alpha_vars, n_basis, &rank_deficient);
  if (rank_deficient) {
    throw NonDifferentiableError("orthogonality transform is rank-deficient at these parameters");
  }
  Eigen::MatrixXd b(n_basis, n_comp);
  for (int k = 0; k < n_comp; ++k) {
    for (int l = 0; l < n_basis; ++l) {
      b(l, k) = beta_vars[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)].value();
    }
  }

  const double sigma2 = params.sigma2();
  const Assembled lik = assemble(obj, params.beta0, b, sigma2, true, exec);
  const Eigen::MatrixXd& s = obj.penalty();
  const double gamma = obj.gamma();

  double w = params.beta0.dot(s * params.beta0);
  for (int k = 0; k < n_comp; ++k) w += b.col(k).dot(s * b.col(k));

  ValueAndGradient out;
  out.value = gamma == 0.0 ? lik.loglik : lik.loglik - gamma / (2.0 * sigma2) * w;
  out.gradient.resize(params.dimension());
  out.gradient.head(n_basis) = lik.d_beta0 - (gamma / sigma2) * (s * params.beta0);

  const Eigen::MatrixXd g_b = lik.d_b - (gamma / sigma2) * (s * b);
  if (n_comp > 0) {
    // Reverse sweep of sum_{l,k} g_b(l,k) * beta_k[l] yields d/d alpha.
    ad::Var z(0.0);
    for (int k = 0; k < n_comp; ++k) {
      for (int l = 0; l < n_basis; ++l) {
        z += g_b(l, k) * beta_vars[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)];
      }
    }
    const std::vector<double> adj = tape.adjoints(z.index());
    Eigen::Index pos = n_basis;
    for (const auto& vars : alpha_vars) {
      for (const auto& v : vars) out.gradient[pos++] = adj[static_cast<std::size_t>(v.index())];
    }
  }
  out.gradient[out.gradient.size() - 1] = 2.0 * sigma2 * lik.d_sigma2 + gamma * w / sigma2;
  return out;
}

Eigen::VectorXd gradient(const ParamVector& params, const PenalizedObjective& obj, Exec exec) {
  return penalized_value_and_gradient(params, obj, exec).gradient;
}

}  // namespace hmfpc
