#include <gtest/gtest.h>

#include <cmath>

#include "hmfpc/basis.hpp"
#include "hmfpc/errors.hpp"
#include "hmfpc/orthoparam.hpp"
#include "hmfpc/rng.hpp"
#include "test_support.hpp"

namespace hmfpc {
namespace {

double max_cross_product(const OrthoCoefs& c) {
  double worst = 0.0;
  for (int i = 0; i < c.n_components(); ++i) {
    for (int j = 0; j < i; ++j) {
      worst = std::max(worst, std::abs(c.betas[static_cast<std::size_t>(i)].dot(
                                  c.betas[static_cast<std::size_t>(j)])));
    }
  }
  return worst;
}

TEST(ParamVector, DimensionAndFlatten) {
  EXPECT_EQ(ParamVector::dimension(10, 0), 11);
  EXPECT_EQ(ParamVector::dimension(10, 2), 10 + 10 + 9 + 1);
  CounterRng rng(1);
  const ParamVector p = testing::random_params(rng, 7, 3);
  EXPECT_EQ(p.dimension(), 7 + 7 + 6 + 5 + 1);
  const ParamVector q = ParamVector::unflatten(p.flatten(), 7, 3);
  EXPECT_EQ(q.flatten(), p.flatten());
  ParamVector bad = p;
  bad.alphas[1].resize(3);
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Expand, FirstComponentIsAlpha) {
  ParamVector p = ParamVector::zeros(6, 1);
  p.alphas[0] = Eigen::VectorXd::Unit(6, 2);
  const OrthoCoefs c = expand(p);
  EXPECT_EQ(c.betas[0], Eigen::VectorXd::Unit(6, 2));
}

TEST(Expand, SecondComponentOrthogonalToFirstAxis) {
  ParamVector p = ParamVector::zeros(4, 2);
  p.alphas[0] = Eigen::VectorXd::Unit(4, 0);
  CounterRng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    for (Eigen::Index j = 0; j < 3; ++j) p.alphas[1][j] = rng.normal();
    const OrthoCoefs c = expand(p);
    EXPECT_EQ(c.betas[1][0], 0.0);
    EXPECT_NEAR(c.betas[1].norm(), p.alphas[1].norm(), 1e-14);
  }
}

TEST(Expand, RandomDrawsAreMutuallyOrthogonal) {
  CounterRng rng(3);
  double worst = 0.0;
  for (int rep = 0; rep < 500; ++rep) {
    const ParamVector p = testing::random_params(rng, 10, 4);
    worst = std::max(worst, max_cross_product(expand(p)));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Expand, NullSpaceMatricesAndProjectedPenalties) {
  const OrthoBasis basis = OrthoBasis::build(testing::linspace(0.0, 1.0, 100), 8);
  CounterRng rng(4);
  const ParamVector p = testing::random_params(rng, 8, 3);
  const OrthoCoefs c = expand(p, basis.penalty());
  ASSERT_EQ(c.t_matrices.size(), 3u);
  ASSERT_EQ(c.s_matrices.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    const Eigen::MatrixXd& t = c.t_matrices[static_cast<std::size_t>(k)];
    ASSERT_EQ(t.rows(), 8);
    ASSERT_EQ(t.cols(), 8 - k);
    EXPECT_LT((t.transpose() * t - Eigen::MatrixXd::Identity(8 - k, 8 - k)).cwiseAbs().maxCoeff(),
              1e-12);
    for (int j = 0; j < k; ++j) {
      EXPECT_LT((t.transpose() * c.betas[static_cast<std::size_t>(j)]).norm(), 1e-12);
    }
    EXPECT_LT((t * p.alphas[static_cast<std::size_t>(k)] - c.betas[static_cast<std::size_t>(k)])
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    EXPECT_LT((c.s_matrices[static_cast<std::size_t>(k)] - t.transpose() * basis.penalty() * t)
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12 * basis.penalty().cwiseAbs().maxCoeff());
  }
}

TEST(Expand, MatchesIndependentQrNullSpace) {
  // Oracle: Eigen's Householder QR, sign-fixed so diag(R) >= 0.
  CounterRng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const ParamVector p = testing::random_params(rng, 9, 3);
    const OrthoCoefs c = expand(p);
    Eigen::MatrixXd b(9, 2);
    b << c.betas[0], c.betas[1];
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(9, 9);
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < 2; ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    const Eigen::MatrixXd t = q.rightCols(7);
    // Null-space bases agree up to a rotation; compare projectors.
    EXPECT_LT((t * t.transpose() - c.t_matrices[2] * c.t_matrices[2].transpose()).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Expand, IsDeterministic) {
  CounterRng rng(6);
  const ParamVector p = testing::random_params(rng, 12, 5);
  const OrthoCoefs a = expand(p);
  const OrthoCoefs b = expand(p);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(a.betas[static_cast<std::size_t>(k)], b.betas[static_cast<std::size_t>(k)]);
}

TEST(Expand, SurjectivityRoundTrip) {
  CounterRng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const int n_basis = 6 + rep % 10;
    const int n_comp = 1 + rep % 4;
    Eigen::MatrixXd raw(n_basis, n_comp);
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = rng.normal();
    const Eigen::MatrixXd q =
        raw.householderQr().householderQ() * Eigen::MatrixXd::Identity(n_basis, n_comp);
    std::vector<Eigen::VectorXd> betas;
    for (int k = 0; k < n_comp; ++k) betas.push_back((0.2 + 3.0 * rng.uniform()) * q.col(k));

    ParamVector p = ParamVector::zeros(n_basis, n_comp);
    p.alphas = recover_alphas(betas);
    const OrthoCoefs c = expand(p);
    for (int k = 0; k < n_comp; ++k) {
      const auto& target = betas[static_cast<std::size_t>(k)];
      const auto& got = c.betas[static_cast<std::size_t>(k)];
      const double err = std::min((got - target).cwiseAbs().maxCoeff(),
                                  (got + target).cwiseAbs().maxCoeff());
      EXPECT_LT(err, 1e-9) << "rep=" << rep << " k=" << k;
    }
  }
}

TEST(Expand, LambdaIsSquaredFunctionNorm) {
  const OrthoBasis basis = OrthoBasis::build(testing::linspace(0.0, 2.0, 200), 10);
  CounterRng rng(8);
  const ParamVector p = testing::random_params(rng, 10, 3);
  const OrthoCoefs c = expand(p);
  for (const auto& beta : c.betas) {
    double norm2 = 0.0;
    const auto& knots = basis.knots();
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
      norm2 += testing::romberg([&](double t) {
        const double v = beta.dot(basis.eval(t));
        return v * v;
      }, knots[k], knots[k + 1]);
    }
    EXPECT_NEAR(beta.squaredNorm(), norm2, 1e-8 * std::max(1.0, norm2));
  }
}

TEST(Expand, ZeroEarlierComponentIsFlagged) {
  ParamVector p = ParamVector::zeros(5, 2);
  p.alphas[1] = Eigen::VectorXd::Constant(4, 1.0);
  const OrthoCoefs c = expand(p);
  EXPECT_TRUE(c.rank_deficient);
  EXPECT_EQ(c.betas[0].norm(), 0.0);
  EXPECT_EQ(c.betas[1].head(1)[0], 0.0);
}

TEST(Normalize, AlreadyNormalizedIsUnchanged) {
  const OrthoBasis basis = OrthoBasis::build(testing::linspace(0.0, 1.0, 50), 6);
  std::vector<Eigen::VectorXd> betas{3.0 * basis.project([](double t) { return 1.0 + t; }),
                                     basis.project([](double t) { return t * t; })};
  // Make the second orthogonal to the first in coefficient space.
  betas[1] -= betas[1].dot(betas[0]) / betas[0].squaredNorm() * betas[0];
  if (betas[1].dot(basis.integrals()) < 0) betas[1] = -betas[1];
  ParamVector p = ParamVector::zeros(6, 2);
  p.alphas = recover_alphas(betas);
  const OrthoCoefs c = expand(p);
  const NormalizedCoefs n = normalize_fit(c, basis.integrals());
  EXPECT_EQ(n.order, (std::vector<int>{0, 1}));
  EXPECT_EQ(n.signs, (std::vector<double>{1.0, 1.0}));
  for (int k = 0; k < 2; ++k) {
    EXPECT_LT((n.coefs.betas[static_cast<std::size_t>(k)] - c.betas[static_cast<std::size_t>(k)]).norm(), 1e-12);
  }
}

TEST(Normalize, NegativeIntegralFlipsSign) {
  const OrthoBasis basis = OrthoBasis::build(testing::linspace(0.0, 1.0, 50), 6);
  ParamVector p = ParamVector::zeros(6, 1);
  p.alphas[0] = -basis.project([](double) { return 1.0; });
  const OrthoCoefs c = expand(p);
  const NormalizedCoefs n = normalize_fit(c, basis.integrals());
  EXPECT_EQ(n.signs[0], -1.0);
  EXPECT_GE(n.coefs.betas[0].dot(basis.integrals()), 0.0);
  EXPECT_DOUBLE_EQ(n.coefs.betas[0].squaredNorm(), c.betas[0].squaredNorm());
}

TEST(Normalize, SwappedPairIsReordered) {
  CounterRng rng(9);
  const OrthoBasis basis = OrthoBasis::build(testing::linspace(0.0, 1.0, 50), 8);
  ParamVector p = testing::random_params(rng, 8, 3);
  p.alphas[0] *= 0.1;
  p.alphas[2] *= 5.0;
  const OrthoCoefs c = expand(p);
  const NormalizedCoefs n = normalize_fit(c, basis.integrals(), basis.penalty());
  const auto& b = n.coefs.betas;
  EXPECT_GE(b[0].norm(), b[1].norm());
  EXPECT_GE(b[1].norm(), b[2].norm());
  for (const auto& beta : b) EXPECT_GE(beta.dot(basis.integrals()), 0.0);
  EXPECT_LT(max_cross_product(n.coefs), 1e-10);
  // Re-derived alphas reproduce the normalized set.
  ParamVector q = p;
  q.alphas = n.alphas;
  const OrthoCoefs again = expand(q);
  for (int k = 0; k < 3; ++k) {
    EXPECT_LT((again.betas[static_cast<std::size_t>(k)] - b[static_cast<std::size_t>(k)]).norm(), 1e-10);
    const int old = n.order[static_cast<std::size_t>(k)];
    EXPECT_LT((b[static_cast<std::size_t>(k)] - n.signs[static_cast<std::size_t>(k)] * c.betas[static_cast<std::size_t>(old)]).norm(), 1e-10);
  }
  EXPECT_EQ(n.coefs.s_matrices.size(), 3u);
}

}  // namespace
}  // namespace hmfpc
