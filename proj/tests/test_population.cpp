#include <gtest/gtest.h>

#include <cmath>

#include "hmfpc/errors.hpp"
#include "hmfpc/population.hpp"
#include "test_support.hpp"

namespace hmfpc {
namespace {

FittedModel model_with(const OrthoBasis& basis, const ParamVector& params, Eigen::MatrixXd scores) {
  FittedModel m;
  m.params = params;
  m.n_components = params.n_components();
  m.coefs = expand(params, basis.penalty());
  m.sigma2 = params.sigma2();
  m.scores = std::move(scores);
  return m;
}

class Population : public ::testing::Test {
 protected:
  Population() : basis_(OrthoBasis::build(testing::linspace(0.0, 2.0, 80), 8)) {}
  OrthoBasis basis_;
};

TEST_F(Population, RegularGrid) {
  const auto g = regular_grid(1.0, 3.0, 5);
  EXPECT_EQ(g, (std::vector<double>{1.0, 1.5, 2.0, 2.5, 3.0}));
  EXPECT_EQ(regular_grid(0.0, 1.0).size(), 100u);
  EXPECT_EQ(regular_grid(0.5, 1.0, 1), std::vector<double>{0.5});
  EXPECT_THROW(regular_grid(0.0, 1.0, 0), DomainError);
}

TEST_F(Population, FpcWithoutComponentsHasZeroCovariance) {
  ParamVector p = ParamVector::zeros(8, 0);
  p.beta0 = basis_.project([](double t) { return std::exp(-t); });
  const auto grid = regular_grid(0.0, 2.0, 20);
  const GpEstimate gp = gp_fpc(model_with(basis_, p, Eigen::MatrixXd(3, 0)), basis_, grid);
  EXPECT_EQ(gp.cov, Eigen::MatrixXd::Zero(20, 20));
  for (Eigen::Index j = 0; j < 20; ++j) {
    EXPECT_NEAR(gp.mean[j], std::exp(-grid[static_cast<std::size_t>(j)]), 1e-4);
  }
  EXPECT_EQ(gp.method, GpMethod::fpc);
}

TEST_F(Population, ConstantComponentGivesConstantCovariance) {
  ParamVector p = ParamVector::zeros(8, 1);
  p.alphas[0] = basis_.project([](double) { return 1.7; });
  const auto grid = regular_grid(0.0, 2.0, 15);
  const GpEstimate gp = gp_fpc(model_with(basis_, p, Eigen::MatrixXd::Zero(4, 1)), basis_, grid);
  EXPECT_LT((gp.cov - Eigen::MatrixXd::Constant(15, 15, 1.7 * 1.7)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(Population, FpcCovarianceEntrywiseAndLowRank) {
  CounterRng rng(2);
  const ParamVector p = testing::random_params(rng, 8, 3);
  const FittedModel m = model_with(basis_, p, Eigen::MatrixXd::Zero(5, 3));
  const auto grid = regular_grid(0.0, 2.0, 30);
  const GpEstimate gp = gp_fpc(m, basis_, grid);
  for (std::size_t a = 0; a < grid.size(); a += 3) {
    for (std::size_t b = 0; b < grid.size(); b += 4) {
      double c = 0.0;
      for (const auto& beta : m.coefs.betas) c += beta.dot(basis_.eval(grid[a])) * beta.dot(basis_.eval(grid[b]));
      EXPECT_NEAR(gp.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), c, 1e-12);
    }
  }
  EXPECT_LT((gp.cov - gp.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gp.cov).eigenvalues().reverse();
  EXPECT_LT(ev[3], 1e-8 * ev[0]);
  EXPECT_GT(ev.minCoeff(), -1e-10 * ev[0]);
}

TEST_F(Population, EmpiricalEdgeCases) {
  CounterRng rng(3);
  const ParamVector p = testing::random_params(rng, 8, 2);
  const auto grid = regular_grid(0.0, 2.0, 12);

  Eigen::MatrixXd same(6, 2);
  same.rowwise() = Eigen::RowVector2d(0.4, -1.1);
  const GpEstimate flat = gp_empirical(model_with(basis_, p, same), basis_, grid);
  EXPECT_LT(flat.cov.cwiseAbs().maxCoeff(), 1e-12);

  Eigen::MatrixXd pm(2, 2);
  pm << 0.8, -0.3, -0.8, 0.3;
  const FittedModel two = model_with(basis_, p, pm);
  const GpEstimate gp = gp_empirical(two, basis_, grid);
  const Eigen::MatrixXd mu = predicted_trajectories(two, basis_, grid);
  const Eigen::VectorXd half = 0.5 * (mu.row(0) - mu.row(1)).transpose();
  EXPECT_LT((gp.cov - half * half.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((gp.mean - 0.5 * (mu.row(0) + mu.row(1)).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(gp.method, GpMethod::empirical);

  EXPECT_THROW(gp_empirical(model_with(basis_, p, pm.topRows(1)), basis_, grid), DomainError);
}

TEST_F(Population, SubgridRestrictionIsExact) {
  CounterRng rng(4);
  const ParamVector p = testing::random_params(rng, 8, 2);
  Eigen::MatrixXd u(9, 2);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
  const FittedModel m = model_with(basis_, p, u);
  const auto fine = regular_grid(0.0, 2.0, 41);
  std::vector<double> coarse;
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < fine.size(); j += 4) {
    coarse.push_back(fine[j]);
    idx.push_back(static_cast<Eigen::Index>(j));
  }
  for (const bool empirical : {false, true}) {
    const GpEstimate f = empirical ? gp_empirical(m, basis_, fine) : gp_fpc(m, basis_, fine);
    const GpEstimate c = empirical ? gp_empirical(m, basis_, coarse) : gp_fpc(m, basis_, coarse);
    for (std::size_t a = 0; a < idx.size(); ++a) {
      EXPECT_EQ(c.mean[static_cast<Eigen::Index>(a)], f.mean[idx[a]]);
      for (std::size_t b = 0; b < idx.size(); ++b) {
        EXPECT_EQ(c.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), f.cov(idx[a], idx[b]));
      }
    }
  }
}

TEST_F(Population, InvariantUnderSignFlip) {
  CounterRng rng(5);
  const ParamVector p = testing::random_params(rng, 8, 2);
  Eigen::MatrixXd u(7, 2);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
  const FittedModel m = model_with(basis_, p, u);
  std::vector<Eigen::VectorXd> betas = m.coefs.betas;
  betas[1] *= -1.0;
  ParamVector q = p;
  q.alphas = recover_alphas(betas);
  Eigen::MatrixXd v = u;
  v.col(1) *= -1.0;
  const FittedModel flipped = model_with(basis_, q, v);
  const auto grid = regular_grid(0.0, 2.0, 10);
  EXPECT_LT((gp_fpc(m, basis_, grid).cov - gp_fpc(flipped, basis_, grid).cov).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((gp_empirical(m, basis_, grid).cov - gp_empirical(flipped, basis_, grid).cov).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_F(Population, EmpiricalConvergesToFpcAtRootDRate) {
  CounterRng rng(6);
  const ParamVector p = testing::random_params(rng, 8, 2);
  const auto grid = regular_grid(0.0, 2.0, 10);
  const auto error_at = [&](int d, std::uint64_t seed) {
    CounterRng draw(seed);
    Eigen::MatrixXd u(d, 2);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = draw.normal();
    const FittedModel m = model_with(basis_, p, u);
    return (gp_empirical(m, basis_, grid).cov - gp_fpc(m, basis_, grid).cov).cwiseAbs().maxCoeff();
  };
  double small = 0.0;
  double large = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    small += error_at(100, 100 + s);
    large += error_at(10000, 200 + s);
  }
  // Ten times the root of d: expect a ratio near 10.
  EXPECT_GT(small / large, 5.0);
  EXPECT_LT(small / large, 20.0);
}

}  // namespace
}  // namespace hmfpc
