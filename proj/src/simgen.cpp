#include "hmfpc/simgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>

#include "hmfpc/errors.hpp"
#include "hmfpc/rng.hpp"

namespace hmfpc {

namespace {

double h_2fpc(double t) { return t / 2.0 + std::sin(t); }

std::uint64_t dgp_tag(Dgp dgp) { return 0x51u + static_cast<std::uint64_t>(dgp); }

void check_spec(const SimSpec& spec) {
  if (spec.d < 1 || spec.n_i < 1) throw DomainError("simulation needs d >= 1 and n_i >= 1");
}

const NaturalCubicSpline& sitar_curve(const SitarParams& p) {
  thread_local SitarParams cached_params;
  thread_local std::unique_ptr<NaturalCubicSpline> cached;
  if (!cached || cached_params.ages != p.ages || cached_params.heights != p.heights) {
    cached = std::make_unique<NaturalCubicSpline>(p.ages, p.heights);
    cached_params = p;
  }
  return *cached;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string to_string(Dgp dgp) {
  switch (dgp) {
    case Dgp::two_fpc: return "2FPC";
    case Dgp::lmm_ri: return "LMM-RI";
    case Dgp::sitar: return "SITAR";
  }
  return "unknown";
}

Dgp parse_dgp(const std::string& name) {
  const std::string u = upper(name);
  if (u == "2FPC") return Dgp::two_fpc;
  if (u == "LMM-RI" || u == "LMM_RI" || u == "LMMRI") return Dgp::lmm_ri;
  if (u == "SITAR") return Dgp::sitar;
  throw DomainError("unknown data-generating process '" + name + "'");
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw DomainError("spline needs matching x and y with >= 2 points");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw DomainError("spline knots must increase");
  }
  m_.assign(n, 0.0);
  if (n == 2) return;
  // Tridiagonal system for interior second derivatives (Thomas algorithm).
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper_diag(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = x_[i] - x_[i - 1];
    const double h1 = x_[i + 1] - x_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper_diag[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double lower = x_[i + 1] - x_[i];
    const double w = lower / diag[i - 1];
    diag[i] -= w * upper_diag[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i >= 1; --i) {
    m_[i] = (rhs[i - 1] - upper_diag[i - 1] * m_[i + 1]) / diag[i - 1];
  }
}

double NaturalCubicSpline::operator()(double t) const {
  const std::size_t n = x_.size();
  if (t <= x_.front()) {
    const double h = x_[1] - x_[0];
    const double slope = (y_[1] - y_[0]) / h - h * (2.0 * m_[0] + m_[1]) / 6.0;
    return y_[0] + slope * (t - x_[0]);
  }
  if (t >= x_.back()) {
    const double h = x_[n - 1] - x_[n - 2];
    const double slope = (y_[n - 1] - y_[n - 2]) / h + h * (m_[n - 2] + 2.0 * m_[n - 1]) / 6.0;
    return y_[n - 1] + slope * (t - x_[n - 1]);
  }
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - t) / h;
  const double b = (t - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

std::pair<double, double> design_range(const SimSpec& spec) {
  switch (spec.dgp) {
    case Dgp::two_fpc: return {0.0, 3.0 * std::numbers::pi};
    case Dgp::lmm_ri: return {0.0, 1.0};
    case Dgp::sitar: return {8.0, 18.0};
  }
  return {0.0, 1.0};
}

double dgp_trajectory(const SimSpec& spec, const Eigen::VectorXd& e, double t) {
  switch (spec.dgp) {
    case Dgp::two_fpc: return (1.0 + e[0]) * h_2fpc(t) + e[1];
    case Dgp::lmm_ri: return spec.lmm_ri.beta0 + spec.lmm_ri.beta1 * t + e[0];
    case Dgp::sitar:
      return e[0] + sitar_curve(spec.sitar)((t - e[1]) / std::exp(-e[2]));
  }
  return 0.0;
}

double SimulatedDataset::trajectory(std::size_t subject, double t) const {
  if (subject >= static_cast<std::size_t>(effects.rows())) {
    throw DomainError("unknown subject index " + std::to_string(subject));
  }
  return dgp_trajectory(spec, effects.row(static_cast<Eigen::Index>(subject)).transpose(), t);
}

Eigen::MatrixXd SimulatedDataset::trajectories(std::span<const double> grid) const {
  Eigen::MatrixXd out(effects.rows(), static_cast<Eigen::Index>(grid.size()));
  for (Eigen::Index i = 0; i < effects.rows(); ++i) {
    const Eigen::VectorXd e = effects.row(i).transpose();
    for (std::size_t j = 0; j < grid.size(); ++j) {
      out(i, static_cast<Eigen::Index>(j)) = dgp_trajectory(spec, e, grid[j]);
    }
  }
  return out;
}

SimulatedDataset generate(const SimSpec& spec) {
  check_spec(spec);
  SimulatedDataset out;
  out.spec = spec;
  const int n_effects = spec.dgp == Dgp::two_fpc ? 2 : spec.dgp == Dgp::lmm_ri ? 1 : 3;
  out.effects.resize(spec.d, n_effects);
  const auto [lo, hi] = design_range(spec);
  const double sigma = spec.dgp == Dgp::two_fpc  ? spec.two_fpc.sigma
                       : spec.dgp == Dgp::lmm_ri ? spec.lmm_ri.sigma
                                                 : spec.sitar.sigma;
  std::vector<Subject> subjects(static_cast<std::size_t>(spec.d));
  for (int i = 0; i < spec.d; ++i) {
    // Each subject owns a stream, so growing d leaves earlier subjects intact.
    CounterRng rng(spec.seed, derive_seed(dgp_tag(spec.dgp), static_cast<std::uint64_t>(i)));
    Eigen::VectorXd e(n_effects);
    switch (spec.dgp) {
      case Dgp::two_fpc:
        e[0] = rng.normal();
        e[1] = rng.normal();
        break;
      case Dgp::lmm_ri:
        e[0] = spec.lmm_ri.sigma_u * rng.normal();
        break;
      case Dgp::sitar:
        e[0] = spec.sitar.sigma_alpha * rng.normal();
        e[1] = spec.sitar.sigma_beta * rng.normal();
        e[2] = spec.sitar.sigma_gamma * rng.normal();
        break;
    }
    out.effects.row(i) = e.transpose();
    Subject& s = subjects[static_cast<std::size_t>(i)];
    s.id = std::to_string(i + 1);
    if (spec.dgp == Dgp::sitar) {
      const double step = (hi - lo) / spec.n_i;
      const double first = rng.uniform(lo, lo + step);
      for (int j = 0; j < spec.n_i; ++j) s.times.push_back(first + j * step);
    } else {
      for (int j = 0; j < spec.n_i; ++j) s.times.push_back(rng.uniform(lo, hi));
    }
    for (double t : s.times) s.values.push_back(dgp_trajectory(spec, e, t) + sigma * rng.normal());
  }
  out.data = LongitudinalDataset(std::move(subjects));
  return out;
}

SimulatedDataset gen_2fpc(const SimSpec& spec) {
  if (spec.dgp != Dgp::two_fpc) throw DomainError("spec is not 2FPC");
  return generate(spec);
}

SimulatedDataset gen_lmm_ri(const SimSpec& spec) {
  if (spec.dgp != Dgp::lmm_ri) throw DomainError("spec is not LMM-RI");
  return generate(spec);
}

SimulatedDataset gen_sitar(const SimSpec& spec) {
  if (spec.dgp != Dgp::sitar) throw DomainError("spec is not SITAR");
  return generate(spec);
}

GpEstimate true_gp(const SimSpec& spec, std::span<const double> grid) {
  GpEstimate out;
  out.grid.assign(grid.begin(), grid.end());
  out.method = GpMethod::truth;
  const auto n = static_cast<Eigen::Index>(grid.size());
  out.mean.resize(n);
  out.cov.resize(n, n);
  switch (spec.dgp) {
    case Dgp::two_fpc:
      for (Eigen::Index a = 0; a < n; ++a) {
        const double ha = h_2fpc(grid[static_cast<std::size_t>(a)]);
        out.mean[a] = ha;
        for (Eigen::Index b = 0; b < n; ++b) {
          out.cov(a, b) = ha * h_2fpc(grid[static_cast<std::size_t>(b)]) + 1.0;
        }
      }
      return out;
    case Dgp::lmm_ri:
      for (Eigen::Index a = 0; a < n; ++a) {
        out.mean[a] = spec.lmm_ri.beta0 + spec.lmm_ri.beta1 * grid[static_cast<std::size_t>(a)];
      }
      out.cov.setConstant(spec.lmm_ri.sigma_u * spec.lmm_ri.sigma_u);
      return out;
    case Dgp::sitar:
      break;
  }

  const SitarParams& p = spec.sitar;
  if (p.mc_draws < 2) throw DomainError("SITAR truth needs at least two Monte Carlo draws");
  const NaturalCubicSpline& h = sitar_curve(p);
  // Centre on h(t) to limit cancellation in the second moment.
  Eigen::VectorXd centre(n);
  for (Eigen::Index a = 0; a < n; ++a) centre[a] = h(grid[static_cast<std::size_t>(a)]);
  CounterRng rng(p.mc_seed, derive_seed(dgp_tag(Dgp::sitar), 0xC0FFEEu));
  constexpr Eigen::Index kChunk = 4096;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd block(kChunk, n);
  for (int start = 0; start < p.mc_draws; start += static_cast<int>(kChunk)) {
    const Eigen::Index rows = std::min<Eigen::Index>(kChunk, p.mc_draws - start);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double alpha = p.sigma_alpha * rng.normal();
      const double beta = p.sigma_beta * rng.normal();
      const double gamma = p.sigma_gamma * rng.normal();
      const double scale = std::exp(gamma);
      for (Eigen::Index a = 0; a < n; ++a) {
        block(r, a) = alpha + h((grid[static_cast<std::size_t>(a)] - beta) * scale) - centre[a];
      }
    }
    const auto used = block.topRows(rows);
    sum += used.colwise().sum().transpose();
    second.selfadjointView<Eigen::Lower>().rankUpdate(used.transpose());
  }
  second = second.selfadjointView<Eigen::Lower>();
  const double m = static_cast<double>(p.mc_draws);
  const Eigen::VectorXd mean_dev = sum / m;
  out.mean = centre + mean_dev;
  out.cov = second / m - mean_dev * mean_dev.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

}  // namespace hmfpc
