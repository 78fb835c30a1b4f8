#include <gtest/gtest.h>

#include <cmath>

#include "hmfpc/errors.hpp"
#include "hmfpc/inference.hpp"
#include "test_support.hpp"

namespace hmfpc {
namespace {

TEST(Quantile, TypeSevenHandValues) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
  EXPECT_DOUBLE_EQ(sorted_quantile(x, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(x, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(x, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(sorted_quantile(x, 0.3), 2.2);
  EXPECT_DOUBLE_EQ(sorted_quantile(std::vector<double>{7.0}, 0.9), 7.0);
  EXPECT_THROW(sorted_quantile(x, 1.5), DomainError);
}

class ToyBootstrap : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new LongitudinalDataset(testing::toy_dataset(21, 40, 5, 0.1));
    basis_ = new OrthoBasis(OrthoBasis::build(data_->pooled_times(), 8));
    obj_ = new PenalizedObjective(*basis_, *data_, 0.05);
    model_ = new FittedModel(fit_sequence(*obj_, 2).back());
    sample_ = new BootstrapSample(draw_bootstrap(*model_, *obj_, 400, 99));
  }
  static void TearDownTestSuite() {
    delete sample_;
    delete model_;
    delete obj_;
    delete basis_;
    delete data_;
  }
  static LongitudinalDataset* data_;
  static OrthoBasis* basis_;
  static PenalizedObjective* obj_;
  static FittedModel* model_;
  static BootstrapSample* sample_;
};

LongitudinalDataset* ToyBootstrap::data_ = nullptr;
OrthoBasis* ToyBootstrap::basis_ = nullptr;
PenalizedObjective* ToyBootstrap::obj_ = nullptr;
FittedModel* ToyBootstrap::model_ = nullptr;
BootstrapSample* ToyBootstrap::sample_ = nullptr;

TEST_F(ToyBootstrap, ShapesAndReconstruction) {
  ASSERT_EQ(sample_->deltas.size(), 400u);
  EXPECT_EQ(sample_->deltas[0].rows(), 8);
  EXPECT_EQ(sample_->deltas[0].cols(), 40);
  for (std::size_t j = 0; j < 400; j += 37) {
    const ParamVector p = ParamVector::unflatten(sample_->thetas[j], 8, 2);
    const Eigen::MatrixXd b = expand(p).matrix(8);
    for (Eigen::Index i = 0; i < 40; ++i) {
      const Eigen::VectorXd delta = p.beta0 + b * sample_->scores[j].row(i).transpose();
      EXPECT_LT((delta - sample_->deltas[j].col(i)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST_F(ToyBootstrap, SeededAndPrefixStable) {
  const BootstrapSample again = draw_bootstrap(*model_, *obj_, 400, 99, Exec::serial);
  const BootstrapSample longer = draw_bootstrap(*model_, *obj_, 500, 99);
  const BootstrapSample other = draw_bootstrap(*model_, *obj_, 400, 100);
  for (std::size_t j = 0; j < 400; ++j) {
    EXPECT_EQ(again.deltas[j], sample_->deltas[j]);
    EXPECT_EQ(longer.deltas[j], sample_->deltas[j]);
  }
  EXPECT_NE(other.deltas[0], sample_->deltas[0]);
}

TEST_F(ToyBootstrap, BandsNestAndHoldTheirLevel) {
  const auto grid = testing::linspace(basis_->lower(), basis_->upper(), 30);
  const ConfidenceBand b95 = confidence_band(*sample_, *model_, *basis_, 3, grid, 0.95);
  const ConfidenceBand b99 = confidence_band(*sample_, *basis_, 3, grid, 0.99);
  EXPECT_EQ(b95.estimate.size(), 30);
  EXPECT_EQ(b99.estimate.size(), 0);
  for (Eigen::Index q = 0; q < 30; ++q) {
    EXPECT_LE(b95.lower[q], b95.upper[q]);
    EXPECT_LE(b99.lower[q], b95.lower[q]);
    EXPECT_GE(b99.upper[q], b95.upper[q]);
    // Fraction of draws inside the band.
    const Eigen::VectorXd bt = basis_->eval(grid[static_cast<std::size_t>(q)]);
    int inside = 0;
    for (const auto& d : sample_->deltas) {
      const double v = d.col(3).dot(bt);
      inside += v >= b95.lower[q] && v <= b95.upper[q];
    }
    EXPECT_NEAR(inside / 400.0, 0.95, 2.0 / 400.0 + 1e-12);
  }
}

TEST_F(ToyBootstrap, LevelZeroIsTheMedian) {
  const std::vector<double> t{1.0, 2.0};
  const ConfidenceBand b = confidence_band(*sample_, *basis_, 0, t, 0.0);
  for (Eigen::Index q = 0; q < 2; ++q) {
    EXPECT_EQ(b.lower[q], b.upper[q]);
    std::vector<double> v;
    for (const auto& d : sample_->deltas) v.push_back(d.col(0).dot(basis_->eval(t[static_cast<std::size_t>(q)])));
    std::sort(v.begin(), v.end());
    EXPECT_NEAR(b.lower[q], 0.5 * (v[199] + v[200]), 1e-12);
  }
}

TEST_F(ToyBootstrap, PrecisionWarningAndErrors) {
  const std::vector<double> t{1.0};
  EXPECT_TRUE(confidence_band(*sample_, *basis_, 0, t, 0.95).warning.empty());
  EXPECT_FALSE(confidence_band(*sample_, *basis_, 0, t, 0.99).warning.empty());
  EXPECT_THROW(confidence_band(*sample_, *basis_, 40, t), DomainError);
  EXPECT_THROW(confidence_band(*sample_, *basis_, 0, t, 1.0), DomainError);
  EXPECT_THROW(confidence_band(*sample_, *basis_, 0, t, 0.9, 2), DomainError);
  EXPECT_THROW(draw_bootstrap(*model_, *obj_, 99, 1), DomainError);
  FittedModel bad = *model_;
  bad.hessian = -bad.hessian;
  EXPECT_THROW(draw_bootstrap(bad, *obj_, 100, 1), IndefiniteHessianError);
  bad.hessian.resize(0, 0);
  EXPECT_THROW(draw_bootstrap(bad, *obj_, 100, 1), DomainError);
}

TEST_F(ToyBootstrap, CollapsesWhenUncertaintyVanishes) {
  FittedModel m = *model_;
  m.params.log_sigma = std::log(1e-7);
  m.sigma2 = m.params.sigma2();
  m.hessian *= 1e12;
  m.scores = estimate_scores(m, *obj_);
  const BootstrapSample s = draw_bootstrap(m, *obj_, 100, 5);
  double worst = 0.0;
  for (const auto& d : s.deltas) {
    for (Eigen::Index i = 0; i < 40; ++i) {
      worst = std::max(worst, (d.col(i) - m.subject_coefficients(static_cast<std::size_t>(i))).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LT(worst, 1e-4);
  const auto grid = testing::linspace(basis_->lower(), basis_->upper(), 10);
  const ConfidenceBand b = confidence_band(s, *basis_, 2, grid);
  EXPECT_LT((b.upper - b.lower).maxCoeff(), 1e-4);
}

TEST(Bootstrap, ScalarConditionalMoments) {
  // K = 1 and one observation per subject: u | y ~ N(f r / (s2 + f^2), s2 / (s2 + f^2)).
  const LongitudinalDataset data = testing::toy_dataset(22, 30, 1, 0.3);
  const OrthoBasis basis = OrthoBasis::build(data.pooled_times(), 4);
  const PenalizedObjective obj(basis, data, 1.0);
  FittedModel m;
  m.n_components = 1;
  m.params = ParamVector::zeros(4, 1);
  m.params.beta0 = basis.project([](double t) { return 0.5 * t; });
  m.params.alphas[0] = basis.project([](double) { return 0.8; });
  m.params.log_sigma = std::log(0.3);
  m.coefs = expand(m.params);
  m.sigma2 = m.params.sigma2();
  // Tiny parameter uncertainty isolates the score draw.
  m.hessian = -1e16 * Eigen::MatrixXd::Identity(m.params.dimension(), m.params.dimension());
  const int n_s = 10000;
  const BootstrapSample s = draw_bootstrap(m, obj, n_s, 7);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& blk = obj.blocks()[i];
    const double f = (blk.x * m.coefs.betas[0])[0];
    const double r = blk.y[0] - (blk.x * m.params.beta0)[0];
    const double mean = f * r / (m.sigma2 + f * f);
    const double var = m.sigma2 / (m.sigma2 + f * f);
    double su = 0.0;
    double su2 = 0.0;
    for (const auto& u : s.scores) {
      su += u(static_cast<Eigen::Index>(i), 0);
      su2 += u(static_cast<Eigen::Index>(i), 0) * u(static_cast<Eigen::Index>(i), 0);
    }
    const double m1 = su / n_s;
    const double v1 = su2 / n_s - m1 * m1;
    EXPECT_NEAR(m1, mean, 3.0 * std::sqrt(var / n_s));
    EXPECT_NEAR(v1, var, 3.0 * var * std::sqrt(2.0 / n_s));
  }
}

TEST(Band, ConstantDrawsGiveZeroWidthDerivativeBand) {
  const OrthoBasis basis = OrthoBasis::build(testing::linspace(0.0, 1.0, 40), 6);
  BootstrapSample s;
  s.n_s = 200;
  s.n_basis = 6;
  s.n_subjects = 1;
  CounterRng rng(3);
  for (int j = 0; j < 200; ++j) {
    const double c = rng.normal();
    s.deltas.emplace_back(basis.project([c](double) { return c; }));
  }
  const auto grid = testing::linspace(0.0, 1.0, 15);
  const ConfidenceBand b = confidence_band(s, basis, 0, grid, 0.9, 1);
  EXPECT_LT(b.lower.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(b.upper.cwiseAbs().maxCoeff(), 1e-9);
  const ConfidenceBand level = confidence_band(s, basis, 0, grid, 0.9, 0);
  EXPECT_GT((level.upper - level.lower).minCoeff(), 1.0);
}

}  // namespace
}  // namespace hmfpc
