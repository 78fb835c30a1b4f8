#include "hmfpc/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "hmfpc/errors.hpp"

namespace hmfpc {
namespace {

using nlohmann::json;

constexpr const char* kModelFormat = "hmfpc-model";

class Fnv {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void number(double x) { bytes(&x, sizeof x); }
  void text(const std::string& s) {
    const std::uint64_t n = s.size();
    bytes(&n, sizeof n);
    bytes(s.data(), s.size());
  }
  std::string hex() const {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h_;
    return out.str();
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

// JSON has no NaN or infinity; they travel as strings.
json num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ParseError("expected a number, got " + j.dump(), 0);
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

json vec(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

Eigen::VectorXd get_vec(const json& j) {
  if (!j.is_array()) throw ParseError("expected an array", 0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = get_num(j[i]);
  return v;
}

// Row-major nested arrays.
json mat(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(num(m(r, c)));
    a.push_back(std::move(row));
  }
  return a;
}

Eigen::MatrixXd get_mat(const json& j, Eigen::Index cols_if_empty = 0) {
  if (!j.is_array()) throw ParseError("expected a matrix", 0);
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? cols_if_empty : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError("ragged matrix", 0);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_num(row[static_cast<std::size_t>(c)]);
  }
  return m;
}

std::string csv_num(double x) { return format_double(x); }

}  // namespace

std::string data_hash(const LongitudinalDataset& data) {
  Fnv f;
  const std::uint64_t n = data.size();
  f.bytes(&n, sizeof n);
  for (const auto& s : data.subjects()) {
    f.text(s.id);
    const std::uint64_t m = s.size();
    f.bytes(&m, sizeof m);
    for (std::size_t j = 0; j < s.size(); ++j) {
      f.number(s.times[j]);
      f.number(s.values[j]);
    }
  }
  return f.hex();
}

SavedModel make_saved_model(const OrthoBasis& basis, const FittedModel& model,
                            const LongitudinalDataset& data) {
  SavedModel s{basis, model, data_hash(data), {}, {{"fit", model.seed}}};
  for (const auto& subj : data.subjects()) s.subject_ids.push_back(subj.id);
  return s;
}

std::string model_to_json(const SavedModel& saved) {
  const FittedModel& m = saved.model;
  json doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelFormatVersion;
  doc["basis"] = {{"n_basis", saved.basis.size()},
                  {"knots", vec(saved.basis.knots())},
                  {"transform", mat(saved.basis.transform())},
                  {"hash", saved.basis.hash()}};
  doc["data"] = {{"hash", saved.data_hash}, {"subjects", saved.subject_ids}};
  doc["n_components"] = m.n_components;
  doc["gamma"] = num(m.gamma);
  doc["sigma2"] = num(m.sigma2);
  doc["loglik_pen"] = num(m.loglik_pen);
  doc["theta"] = vec(m.params.flatten());
  json betas = json::array();
  for (const auto& b : m.coefs.betas) betas.push_back(vec(b));
  doc["coefficients"] = {{"beta0", vec(m.params.beta0)}, {"betas", betas}};
  doc["lambdas"] = vec(m.lambdas());
  doc["scores"] = mat(m.scores);
  doc["hessian"] = mat(m.hessian);
  const ConvergenceInfo& c = m.convergence;
  doc["convergence"] = {{"converged", c.converged},        {"iterations", c.iterations},
                        {"evaluations", c.evaluations},    {"attempt", c.attempt},
                        {"attempts_tried", c.attempts_tried}, {"gradient_norm", num(c.gradient_norm)},
                        {"message", c.message}};
  json seeds = json::object();
  for (const auto& [name, value] : saved.seeds) seeds[name] = value;
  doc["seeds"] = seeds;
  return doc.dump(1) + "\n";
}

SavedModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model JSON: ") + e.what(), 0);
  }
  try {
    if (doc.value("format", "") != kModelFormat) throw ParseError("not an hmfpc model document", 0);
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParseError("unsupported model format version " + std::to_string(version), 0);
    }
    const json& jb = doc.at("basis");
    const Eigen::VectorXd knots = get_vec(jb.at("knots"));
    OrthoBasis basis = OrthoBasis::from_knots(std::vector<double>(knots.data(), knots.data() + knots.size()));
    const Eigen::MatrixXd transform = get_mat(jb.at("transform"));
    if (basis.size() != jb.at("n_basis").get<int>() || transform != basis.transform() ||
        basis.hash() != jb.at("hash").get<std::string>()) {
      throw IntegrityError("model basis does not match its recorded hash");
    }
    const int n_b = basis.size();

    FittedModel m;
    m.n_components = doc.at("n_components").get<int>();
    const Eigen::VectorXd theta = get_vec(doc.at("theta"));
    if (theta.size() != ParamVector::dimension(n_b, m.n_components)) {
      throw ParseError("theta has the wrong length", 0);
    }
    m.params = ParamVector::unflatten(theta, n_b, m.n_components);
    m.coefs = expand(m.params, basis.penalty());
    const json& jc = doc.at("coefficients");
    if (get_vec(jc.at("beta0")) != m.params.beta0) throw IntegrityError("beta0 does not match theta");
    const json& jbetas = jc.at("betas");
    if (static_cast<int>(jbetas.size()) != m.n_components) throw ParseError("wrong number of betas", 0);
    for (int k = 0; k < m.n_components; ++k) {
      const Eigen::VectorXd b = get_vec(jbetas[static_cast<std::size_t>(k)]);
      if (b.size() != n_b) throw ParseError("beta has the wrong length", 0);
      if ((b - m.coefs.betas[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() > 1e-12) {
        throw IntegrityError("stored coefficients do not match theta");
      }
      m.coefs.betas[static_cast<std::size_t>(k)] = b;
    }
    m.gamma = get_num(doc.at("gamma"));
    m.sigma2 = get_num(doc.at("sigma2"));
    m.loglik_pen = get_num(doc.at("loglik_pen"));
    m.scores = get_mat(doc.at("scores"), m.n_components);
    if (m.scores.cols() != m.n_components) throw ParseError("scores have the wrong width", 0);
    m.hessian = get_mat(doc.at("hessian"));
    if (m.hessian.size() != 0 && (m.hessian.rows() != theta.size() || m.hessian.cols() != theta.size())) {
      throw ParseError("hessian has the wrong shape", 0);
    }
    const json& jv = doc.at("convergence");
    m.convergence.converged = jv.at("converged").get<bool>();
    m.convergence.iterations = jv.at("iterations").get<int>();
    m.convergence.evaluations = jv.at("evaluations").get<int>();
    m.convergence.attempt = jv.at("attempt").get<int>();
    m.convergence.attempts_tried = jv.at("attempts_tried").get<int>();
    m.convergence.gradient_norm = get_num(jv.at("gradient_norm"));
    m.convergence.message = jv.at("message").get<std::string>();

    const json& jd = doc.at("data");
    SavedModel saved{std::move(basis), std::move(m), jd.at("hash").get<std::string>(),
                     jd.at("subjects").get<std::vector<std::string>>(), {}};
    if (static_cast<std::size_t>(saved.model.scores.rows()) != saved.subject_ids.size()) {
      throw ParseError("scores and subject list disagree", 0);
    }
    for (const auto& [name, value] : doc.at("seeds").items()) {
      saved.seeds.emplace_back(name, value.get<std::uint64_t>());
    }
    for (const auto& [name, value] : saved.seeds) {
      if (name == "fit") saved.model.seed = value;
    }
    return saved;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model JSON: ") + e.what(), 0);
  }
}

void check_model_matches(const SavedModel& saved, const LongitudinalDataset& data) {
  if (data.size() != saved.subject_ids.size()) {
    throw IntegrityError("data has " + std::to_string(data.size()) + " subjects, model was fit to " +
                         std::to_string(saved.subject_ids.size()));
  }
  if (data_hash(data) != saved.data_hash) {
    throw IntegrityError("data does not match the dataset the model was fit to");
  }
}

std::string trace_to_json(const TuningTrace& trace) {
  json doc;
  doc["fve_threshold"] = num(trace.fve_threshold);
  doc["chosen_index"] = trace.chosen_index;
  doc["chosen_gamma"] = num(trace.chosen_gamma);
  doc["chosen_k"] = trace.chosen_k;
  json pts = json::array();
  for (const auto& p : trace.points) {
    pts.push_back({{"gamma", num(p.gamma)},
                   {"valid", p.valid},
                   {"k", p.k},
                   {"criterion", num(p.criterion)},
                   {"sigma2", num(p.sigma2)},
                   {"sigma2_by_k", vec(p.sigma2_by_k)},
                   {"saturated", p.saturated},
                   {"degenerate", p.degenerate},
                   {"converged", p.converged},
                   {"error", p.error},
                   {"warnings", p.warnings}});
  }
  doc["points"] = pts;
  return doc.dump(1) + "\n";
}

void write_bands_csv(std::ostream& out, std::span<const ConfidenceBand> bands,
                     std::span<const std::string> ids) {
  out << "subject,time,estimate,lower,upper,level,deriv\n";
  for (const auto& b : bands) {
    if (b.subject >= ids.size()) throw DomainError("band subject index out of range");
    for (std::size_t q = 0; q < b.times.size(); ++q) {
      const auto e = static_cast<Eigen::Index>(q);
      out << ids[b.subject] << ',' << csv_num(b.times[q]) << ','
          << (b.estimate.size() ? csv_num(b.estimate[e]) : std::string()) << ',' << csv_num(b.lower[e])
          << ',' << csv_num(b.upper[e]) << ',' << csv_num(b.level) << ',' << b.deriv << '\n';
    }
  }
}

void write_gp_mean_csv(std::ostream& out, const GpEstimate& gp) {
  out << "time,mean,variance\n";
  for (std::size_t j = 0; j < gp.grid.size(); ++j) {
    const auto e = static_cast<Eigen::Index>(j);
    out << csv_num(gp.grid[j]) << ',' << csv_num(gp.mean[e]) << ',' << csv_num(gp.cov(e, e)) << '\n';
  }
}

void write_gp_cov_csv(std::ostream& out, const GpEstimate& gp) {
  out << "time";
  for (double t : gp.grid) out << ',' << csv_num(t);
  out << '\n';
  for (Eigen::Index r = 0; r < gp.cov.rows(); ++r) {
    out << csv_num(gp.grid[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < gp.cov.cols(); ++c) out << ',' << csv_num(gp.cov(r, c));
    out << '\n';
  }
}

std::string gp_to_json(const GpEstimate& gp) {
  json doc;
  doc["method"] = to_string(gp.method);
  doc["grid"] = vec(gp.grid);
  doc["mean"] = vec(gp.mean);
  doc["cov"] = mat(gp.cov);
  return doc.dump(1) + "\n";
}

std::string simspec_to_json(const SimSpec& spec) {
  json doc;
  doc["dgp"] = to_string(spec.dgp);
  doc["d"] = spec.d;
  doc["n_i"] = spec.n_i;
  doc["seed"] = spec.seed;
  doc["2FPC"] = {{"sigma", spec.two_fpc.sigma}};
  const LmmRiParams& l = spec.lmm_ri;
  doc["LMM-RI"] = {{"beta0", l.beta0}, {"beta1", l.beta1}, {"sigma_u", l.sigma_u}, {"sigma", l.sigma}};
  const SitarParams& s = spec.sitar;
  doc["SITAR"] = {{"ages", s.ages},
                  {"heights", s.heights},
                  {"sigma_alpha", s.sigma_alpha},
                  {"sigma_beta", s.sigma_beta},
                  {"sigma_gamma", s.sigma_gamma},
                  {"sigma", s.sigma},
                  {"mc_draws", s.mc_draws},
                  {"mc_seed", s.mc_seed}};
  return doc.dump(1) + "\n";
}

SimSpec simspec_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("spec JSON: ") + e.what(), 0);
  }
  SimSpec spec;
  try {
    if (doc.contains("dgp")) spec.dgp = parse_dgp(doc["dgp"].get<std::string>());
    spec.d = doc.value("d", spec.d);
    spec.n_i = doc.value("n_i", spec.n_i);
    spec.seed = doc.value("seed", spec.seed);
    if (doc.contains("2FPC")) spec.two_fpc.sigma = doc["2FPC"].value("sigma", spec.two_fpc.sigma);
    if (doc.contains("LMM-RI")) {
      const json& j = doc["LMM-RI"];
      LmmRiParams& l = spec.lmm_ri;
      l.beta0 = j.value("beta0", l.beta0);
      l.beta1 = j.value("beta1", l.beta1);
      l.sigma_u = j.value("sigma_u", l.sigma_u);
      l.sigma = j.value("sigma", l.sigma);
    }
    if (doc.contains("SITAR")) {
      const json& j = doc["SITAR"];
      SitarParams& s = spec.sitar;
      s.ages = j.value("ages", s.ages);
      s.heights = j.value("heights", s.heights);
      s.sigma_alpha = j.value("sigma_alpha", s.sigma_alpha);
      s.sigma_beta = j.value("sigma_beta", s.sigma_beta);
      s.sigma_gamma = j.value("sigma_gamma", s.sigma_gamma);
      s.sigma = j.value("sigma", s.sigma);
      s.mc_draws = j.value("mc_draws", s.mc_draws);
      s.mc_seed = j.value("mc_seed", s.mc_seed);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("spec JSON: ") + e.what(), 0);
  }
  if (spec.d < 1 || spec.n_i < 1) throw DomainError("spec needs d >= 1 and n_i >= 1");
  return spec;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + ": " + ec.message());
  }
}

}  // namespace hmfpc
