#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "hmfpc/errors.hpp"
#include "hmfpc/serialize.hpp"
#include "test_support.hpp"

namespace hmfpc {
namespace {

class Serialize : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new LongitudinalDataset(testing::toy_dataset(31, 25, 5, 0.1));
    basis_ = new OrthoBasis(OrthoBasis::build(data_->pooled_times(), 8));
    obj_ = new PenalizedObjective(*basis_, *data_, 0.1);
    model_ = new FittedModel(fit_sequence(*obj_, 2).back());
  }
  static void TearDownTestSuite() {
    delete model_;
    delete obj_;
    delete basis_;
    delete data_;
  }
  static LongitudinalDataset* data_;
  static OrthoBasis* basis_;
  static PenalizedObjective* obj_;
  static FittedModel* model_;
};

LongitudinalDataset* Serialize::data_ = nullptr;
OrthoBasis* Serialize::basis_ = nullptr;
PenalizedObjective* Serialize::obj_ = nullptr;
FittedModel* Serialize::model_ = nullptr;

TEST_F(Serialize, ModelRoundTripIsBitExact) {
  const SavedModel saved = make_saved_model(*basis_, *model_, *data_);
  const std::string text = model_to_json(saved);
  const SavedModel back = model_from_json(text);
  EXPECT_EQ(back.basis.hash(), basis_->hash());
  EXPECT_EQ(back.basis.knots(), basis_->knots());
  EXPECT_EQ(back.model.params.flatten(), model_->params.flatten());
  for (int k = 0; k < model_->n_components; ++k) {
    EXPECT_EQ(back.model.coefs.betas[static_cast<std::size_t>(k)], model_->coefs.betas[static_cast<std::size_t>(k)]);
  }
  EXPECT_EQ(back.model.scores, model_->scores);
  EXPECT_EQ(back.model.hessian, model_->hessian);
  EXPECT_EQ(back.model.sigma2, model_->sigma2);
  EXPECT_EQ(back.model.gamma, model_->gamma);
  EXPECT_EQ(back.model.loglik_pen, model_->loglik_pen);
  EXPECT_EQ(back.model.seed, model_->seed);
  EXPECT_EQ(back.model.convergence.message, model_->convergence.message);
  EXPECT_EQ(back.subject_ids, saved.subject_ids);
  // Serializing again gives the same bytes.
  EXPECT_EQ(model_to_json(back), text);
  EXPECT_NO_THROW(check_model_matches(back, *data_));
}

TEST_F(Serialize, TamperingIsDetected) {
  const std::string text = model_to_json(make_saved_model(*basis_, *model_, *data_));
  auto doc = nlohmann::json::parse(text);
  doc["basis"]["hash"] = "0000000000000000";
  EXPECT_THROW(model_from_json(doc.dump()), IntegrityError);

  doc = nlohmann::json::parse(text);
  doc["coefficients"]["betas"][0][0] = doc["coefficients"]["betas"][0][0].get<double>() + 1.0;
  EXPECT_THROW(model_from_json(doc.dump()), IntegrityError);

  doc = nlohmann::json::parse(text);
  doc["version"] = 99;
  EXPECT_THROW(model_from_json(doc.dump()), ParseError);
  EXPECT_THROW(model_from_json("{"), ParseError);
  EXPECT_THROW(model_from_json("{\"format\": \"hmfpc-model\"}"), ParseError);

  const SavedModel saved = model_from_json(text);
  const LongitudinalDataset other = testing::toy_dataset(32, 25, 5, 0.1);
  EXPECT_THROW(check_model_matches(saved, other), IntegrityError);
  const LongitudinalDataset fewer = testing::toy_dataset(31, 24, 5, 0.1);
  EXPECT_THROW(check_model_matches(saved, fewer), IntegrityError);
}

TEST_F(Serialize, NonFiniteValuesSurvive) {
  FittedModel m = *model_;
  m.convergence.gradient_norm = std::numeric_limits<double>::quiet_NaN();
  m.loglik_pen = -std::numeric_limits<double>::infinity();
  const SavedModel back = model_from_json(model_to_json(make_saved_model(*basis_, m, *data_)));
  EXPECT_TRUE(std::isnan(back.model.convergence.gradient_norm));
  EXPECT_EQ(back.model.loglik_pen, -std::numeric_limits<double>::infinity());
}

TEST(SerializeCsv, BandColumnsAndValues) {
  ConfidenceBand b;
  b.subject = 1;
  b.times = {0.5, 1.25};
  b.estimate = Eigen::Vector2d(1.0, 2.0);
  b.lower = Eigen::Vector2d(0.5, 1.5);
  b.upper = Eigen::Vector2d(1.5, 2.5);
  b.level = 0.9;
  b.deriv = 1;
  const std::vector<std::string> ids{"a", "b"};
  std::ostringstream out;
  write_bands_csv(out, std::span<const ConfidenceBand>(&b, 1), ids);
  EXPECT_EQ(out.str(),
            "subject,time,estimate,lower,upper,level,deriv\n"
            "b,0.5,1,0.5,1.5,0.9,1\n"
            "b,1.25,2,1.5,2.5,0.9,1\n");
  b.subject = 2;
  std::ostringstream bad;
  EXPECT_THROW(write_bands_csv(bad, std::span<const ConfidenceBand>(&b, 1), ids), DomainError);
}

TEST(SerializeCsv, GpTables) {
  GpEstimate gp;
  gp.grid = {0.0, 1.0};
  gp.mean = Eigen::Vector2d(1.0, -1.0);
  gp.cov.resize(2, 2);
  gp.cov << 2.0, 0.5, 0.5, 3.0;
  std::ostringstream mean, cov;
  write_gp_mean_csv(mean, gp);
  write_gp_cov_csv(cov, gp);
  EXPECT_EQ(mean.str(), "time,mean,variance\n0,1,2\n1,-1,3\n");
  EXPECT_EQ(cov.str(), "time,0,1\n0,2,0.5\n1,0.5,3\n");
  const auto doc = nlohmann::json::parse(gp_to_json(gp));
  EXPECT_EQ(doc["method"], "fpc");
  EXPECT_EQ(doc["cov"][1][1].get<double>(), 3.0);
}

TEST(SerializeSpec, RoundTripAndDefaults) {
  SimSpec spec;
  spec.dgp = Dgp::sitar;
  spec.d = 77;
  spec.n_i = 4;
  spec.seed = 123456789012345ULL;
  spec.sitar.sigma_beta = 0.1 + 0.2;
  spec.sitar.heights[2] = 150.5;
  const SimSpec back = simspec_from_json(simspec_to_json(spec));
  EXPECT_EQ(simspec_to_json(back), simspec_to_json(spec));
  EXPECT_EQ(back.sitar.sigma_beta, spec.sitar.sigma_beta);
  EXPECT_EQ(back.seed, spec.seed);
  const SimSpec partial = simspec_from_json(R"({"dgp": "LMM-RI", "d": 10})");
  EXPECT_EQ(partial.dgp, Dgp::lmm_ri);
  EXPECT_EQ(partial.n_i, SimSpec{}.n_i);
  EXPECT_EQ(partial.lmm_ri.beta1, 2.0);
  EXPECT_THROW(simspec_from_json(R"({"dgp": "PACE"})"), DomainError);
  EXPECT_THROW(simspec_from_json(R"({"d": "x"})"), ParseError);
  EXPECT_THROW(simspec_from_json(R"({"d": 0})"), DomainError);
}

TEST(SerializeFile, AtomicWriteReplacesContent) {
  const auto dir = std::filesystem::temp_directory_path() / "hmfpc_serialize_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "x.txt").string();
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "second");
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  EXPECT_THROW(write_file_atomic((dir / "missing" / "y.txt").string(), "z"), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace hmfpc
