#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hmfpc/errors.hpp"
#include "hmfpc/fit.hpp"
#include "hmfpc/simgen.hpp"
#include "test_support.hpp"

namespace hmfpc {
namespace {

SimSpec make_spec(Dgp dgp, int d, int n_i, std::uint64_t seed = 1) {
  SimSpec spec;
  spec.dgp = dgp;
  spec.d = d;
  spec.n_i = n_i;
  spec.seed = seed;
  return spec;
}

TEST(Spline, InterpolatesAndIsNatural) {
  const std::vector<double> x{0.0, 1.0, 2.5, 4.0};
  const std::vector<double> y{1.0, -1.0, 2.0, 0.5};
  const NaturalCubicSpline s(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(s(x[i]), y[i], 1e-14);
  // Zero curvature at the ends; linear continuation beyond them.
  const double h = 1e-4;
  EXPECT_NEAR((s(0.0 + 2 * h) - 2 * s(0.0 + h) + s(0.0)) / (h * h), 0.0, 1e-3);
  EXPECT_NEAR(s(5.0) - s(4.0), s(6.0) - s(5.0), 1e-12);
  const NaturalCubicSpline line({0.0, 1.0, 3.0}, {1.0, 3.0, 7.0});
  for (double t : {-1.0, 0.3, 2.2, 4.0}) EXPECT_NEAR(line(t), 1.0 + 2.0 * t, 1e-12);
  EXPECT_THROW(NaturalCubicSpline({0.0, 0.0}, {1.0, 2.0}), DomainError);
}

TEST(Simgen, NamesRoundTrip) {
  for (Dgp d : {Dgp::two_fpc, Dgp::lmm_ri, Dgp::sitar}) EXPECT_EQ(parse_dgp(to_string(d)), d);
  EXPECT_EQ(parse_dgp("lmm-ri"), Dgp::lmm_ri);
  EXPECT_THROW(parse_dgp("PACE"), DomainError);
}

TEST(Simgen, DeterministicAndPrefixStable) {
  const SimulatedDataset a = generate(make_spec(Dgp::two_fpc, 30, 4, 9));
  const SimulatedDataset b = generate(make_spec(Dgp::two_fpc, 30, 4, 9));
  const SimulatedDataset c = generate(make_spec(Dgp::two_fpc, 60, 4, 9));
  const SimulatedDataset other = generate(make_spec(Dgp::two_fpc, 30, 4, 10));
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(a.data.subject(i).times, b.data.subject(i).times);
    EXPECT_EQ(a.data.subject(i).values, c.data.subject(i).values);
  }
  EXPECT_NE(a.data.subject(0).values, other.data.subject(0).values);
  EXPECT_EQ(a.data.subject(0).id, "1");
  EXPECT_THROW(generate(make_spec(Dgp::two_fpc, 0, 4)), DomainError);
  EXPECT_THROW(gen_sitar(make_spec(Dgp::two_fpc, 3, 3)), DomainError);
}

TEST(TwoFpc, StructureAndTruth) {
  const SimSpec spec = make_spec(Dgp::two_fpc, 10, 5);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  for (double t : {0.0, 1.0, 7.0}) EXPECT_DOUBLE_EQ(dgp_trajectory(spec, zero, t), t / 2.0 + std::sin(t));
  const auto grid = testing::linspace(0.0, 3.0 * std::numbers::pi, 7);
  const GpEstimate gp = true_gp(spec, grid);
  for (Eigen::Index a = 0; a < 7; ++a) {
    const double h = grid[static_cast<std::size_t>(a)] / 2.0 + std::sin(grid[static_cast<std::size_t>(a)]);
    EXPECT_NEAR(gp.mean[a], h, 1e-15);
    EXPECT_NEAR(gp.cov(a, a), h * h + 1.0, 1e-13);
  }
  const SimulatedDataset sim = generate(spec);
  for (const auto& s : sim.data.subjects()) {
    for (double t : s.times) {
      EXPECT_GE(t, 0.0);
      EXPECT_LE(t, 3.0 * std::numbers::pi);
    }
  }
}

TEST(TwoFpc, NoiseHasStatedScaleAndIsGaussian) {
  const SimulatedDataset sim = generate(make_spec(Dgp::two_fpc, 20000, 5, 3));
  double s1 = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const auto& s = sim.data.subject(i);
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double e = s.values[j] - sim.trajectory(i, s.times[j]);
      s1 += e;
      s2 += e * e;
      s4 += e * e * e * e;
      n += 1.0;
    }
  }
  ASSERT_EQ(n, 1e5);
  const double var = s2 / n;
  EXPECT_NEAR(s1 / n, 0.0, 4.0 * 0.1 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(var), 0.1, 4.0 * 0.1 / std::sqrt(2.0 * n));
  EXPECT_NEAR(s4 / (n * var * var), 3.0, 4.0 * std::sqrt(24.0 / n));
}

TEST(LmmRi, LineAndConstantCovariance) {
  const SimSpec spec = make_spec(Dgp::lmm_ri, 100000, 1, 5);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  EXPECT_DOUBLE_EQ(dgp_trajectory(spec, zero, 0.0), -1.0);
  EXPECT_DOUBLE_EQ(dgp_trajectory(spec, zero, 0.75), 0.5);
  const std::vector<double> grid{0.0, 0.3, 1.0};
  const GpEstimate gp = true_gp(spec, grid);
  EXPECT_EQ(gp.cov, Eigen::MatrixXd::Constant(3, 3, 0.25));
  const SimulatedDataset sim = generate(spec);
  const std::vector<double> half{0.5};
  const Eigen::MatrixXd mu = sim.trajectories(half);
  EXPECT_NEAR(mu.mean(), 0.0, 3.0 * 0.5 / std::sqrt(1e5));
}

TEST(Sitar, StructureAndTimeDesign) {
  const SimSpec spec = make_spec(Dgp::sitar, 50, 4, 2);
  const NaturalCubicSpline h(spec.sitar.ages, spec.sitar.heights);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(3);
  EXPECT_DOUBLE_EQ(dgp_trajectory(spec, e, 12.3), h(12.3));
  e << 3.0, 1.0, 0.0;
  EXPECT_NEAR(dgp_trajectory(spec, e, 12.3), 3.0 + h(11.3), 1e-12);
  e << 0.0, 0.0, 0.2;
  EXPECT_NEAR(dgp_trajectory(spec, e, 12.0), h(12.0 * std::exp(0.2)), 1e-12);
  const SimulatedDataset sim = generate(spec);
  for (const auto& s : sim.data.subjects()) {
    ASSERT_EQ(s.size(), 4u);
    EXPECT_GE(s.times[0], 8.0);
    EXPECT_LE(s.times[0], 10.5);
    for (std::size_t j = 1; j < 4; ++j) EXPECT_NEAR(s.times[j] - s.times[j - 1], 2.5, 1e-12);
  }
}

TEST(Sitar, ThreeComponentsExplainNearlyAllVariance) {
  SimSpec spec = make_spec(Dgp::sitar, 10, 5);
  const auto grid = testing::linspace(8.0, 18.0, 100);
  const GpEstimate gp = true_gp(spec, grid);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gp.cov);
  const Eigen::VectorXd ev = eig.eigenvalues().reverse();
  EXPECT_GE(ev.head(3).sum() / ev.sum(), 0.99);
  // Monte Carlo mean against a direct average with a different seed.
  spec.sitar.mc_seed = 77;
  spec.sitar.mc_draws = 20000;
  const GpEstimate other = true_gp(spec, grid);
  EXPECT_LT((other.mean - gp.mean).cwiseAbs().maxCoeff(), 0.2);
  EXPECT_LT((other.cov - gp.cov).cwiseAbs().maxCoeff() / gp.cov.cwiseAbs().maxCoeff(), 0.05);
}

TEST(TwoFpc, LargeSampleFitRecoversTheComponentSpan) {
  const SimulatedDataset sim = generate(make_spec(Dgp::two_fpc, 500, 10, 4));
  const OrthoBasis basis = OrthoBasis::build(sim.data.pooled_times(), 10);
  const PenalizedObjective obj(basis, sim.data, 0.05);
  FitOptions opts;
  opts.compute_hessian = false;
  const FittedModel m = fit_sequence(obj, 2, opts).back();
  ASSERT_TRUE(m.convergence.converged);
  // Principal angles in L2 on a fine grid.
  const auto grid = testing::linspace(basis.lower(), basis.upper(), 400);
  const Eigen::MatrixXd comps = component_functions(m, basis, grid);
  Eigen::MatrixXd truth(400, 2);
  for (std::size_t j = 0; j < 400; ++j) {
    truth(static_cast<Eigen::Index>(j), 0) = grid[j] / 2.0 + std::sin(grid[j]);
    truth(static_cast<Eigen::Index>(j), 1) = 1.0;
  }
  const Eigen::MatrixXd qa = comps.rightCols(2).householderQr().householderQ() * Eigen::MatrixXd::Identity(400, 2);
  const Eigen::MatrixXd qb = truth.householderQr().householderQ() * Eigen::MatrixXd::Identity(400, 2);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(qa.transpose() * qb);
  const double smallest = std::min(1.0, svd.singularValues().minCoeff());
  EXPECT_LT(std::acos(smallest), 0.1);
}

}  // namespace
}  // namespace hmfpc
