#include "hmfpc/benchmark_harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include <omp.h>

#include "hmfpc/errors.hpp"
#include "hmfpc/fit.hpp"
#include "hmfpc/inference.hpp"
#include "hmfpc/rng.hpp"
#include "hmfpc/serialize.hpp"
#include "hmfpc/tuning.hpp"

namespace hmfpc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<int> kFullD{50, 100, 200, 300, 400, 500};
const std::vector<int> kFullNi{3, 5, 10};

std::vector<BenchmarkCell> full_cells(Dgp dgp) {
  std::vector<BenchmarkCell> cells;
  for (int n_i : kFullNi) {
    for (int d : kFullD) {
      BenchmarkCell c;
      c.spec.dgp = dgp;
      c.spec.d = d;
      c.spec.n_i = n_i;
      cells.push_back(c);
    }
  }
  return cells;
}

BenchmarkCell make_cell(Dgp dgp, int d, int n_i) {
  BenchmarkCell c;
  c.spec.dgp = dgp;
  c.spec.d = d;
  c.spec.n_i = n_i;
  return c;
}

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

int parse_positive(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v < 1) throw DomainError("cell " + what + " must be a positive integer, got '" + s + "'");
  return v;
}

std::string csv(double x) { return format_double(x); }

}  // namespace

std::string BenchmarkCell::label() const {
  return to_string(spec.dgp) + "_d" + std::to_string(spec.d) + "_n" + std::to_string(spec.n_i);
}

std::vector<BenchmarkCell> grid_preset(const std::string& name) {
  const std::string n = lower_case(name);
  if (n == "full-2fpc") return full_cells(Dgp::two_fpc);
  if (n == "full-lmm-ri") return full_cells(Dgp::lmm_ri);
  if (n == "full-sitar") return full_cells(Dgp::sitar);
  if (n == "full") {
    std::vector<BenchmarkCell> all;
    for (Dgp d : {Dgp::two_fpc, Dgp::lmm_ri, Dgp::sitar}) {
      const auto part = full_cells(d);
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  if (n == "desk") return {make_cell(Dgp::two_fpc, 100, 5)};
  if (n == "rmwe-2fpc") {
    std::vector<BenchmarkCell> cells;
    for (int d : {50, 100, 200, 300}) cells.push_back(make_cell(Dgp::two_fpc, d, 3));
    return cells;
  }
  throw DomainError("unknown grid preset '" + name + "'");
}

std::vector<BenchmarkCell> parse_cells(const std::string& text) {
  std::vector<BenchmarkCell> cells;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto a = item.find('/');
    const auto b = a == std::string::npos ? a : item.find('/', a + 1);
    if (b == std::string::npos) throw DomainError("cell '" + item + "' is not DGP/d/n_i");
    cells.push_back(make_cell(parse_dgp(item.substr(0, a)), parse_positive(item.substr(a + 1, b - a - 1), "d"),
                              parse_positive(item.substr(b + 1), "n_i")));
  }
  if (cells.empty()) throw DomainError("no cells given");
  return cells;
}

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  return derive_seed(seed, 0xBE4C, static_cast<std::uint64_t>(replicate));
}

ReplicateResult run_replicate(const SimSpec& spec, const BenchmarkOptions& options, bool parallel_inner) {
  ReplicateResult r;
  r.seed = spec.seed;
  const Exec exec = parallel_inner ? Exec::parallel : Exec::serial;
  try {
    const SimulatedDataset sim = generate(spec);
    const OrthoBasis basis = OrthoBasis::build(sim.data.pooled_times(), options.n_basis);
    const std::vector<double> gammas = options.gamma_grid.empty() ? default_gamma_grid() : options.gamma_grid;
    const PenalizedObjective obj(basis, sim.data, gammas.front());
    TuningOptions topts;
    topts.t_fve = options.t_fve;
    topts.fit.seed = derive_seed(spec.seed, 0xF17);
    topts.fit.exec = exec;
    topts.grid_exec = exec;
    const TuningTrace trace = select_gamma(obj, gammas, topts);
    const FittedModel& model = trace.chosen_fit;
    r.k = model.n_components;
    r.gamma = trace.chosen_gamma;
    r.sigma2 = model.sigma2;
    r.lambdas = model.lambdas();

    r.grid = regular_grid(basis.lower(), basis.upper(), options.eval_points);
    const Eigen::MatrixXd est = predicted_trajectories(model, basis, r.grid);
    const Eigen::MatrixXd truth = sim.trajectories(r.grid);
    Eigen::MatrixXd lower, upper;
    if (options.bands) {
      try {
        const BootstrapSample sample = draw_bootstrap(model, obj.with_gamma(trace.chosen_gamma), options.n_s,
                                                      derive_seed(spec.seed, 0xB00), exec);
        lower.resize(est.rows(), est.cols());
        upper.resize(est.rows(), est.cols());
        for (Eigen::Index i = 0; i < est.rows(); ++i) {
          const ConfidenceBand b =
              confidence_band(sample, basis, static_cast<std::size_t>(i), r.grid, options.level);
          lower.row(i) = b.lower.transpose();
          upper.row(i) = b.upper.transpose();
        }
      } catch (const Error& e) {
        // Intervals fail independently of the point estimate.
        lower.resize(0, 0);
        upper.resize(0, 0);
        r.error = std::string("bands: ") + e.what();
      }
    }
    const TrajectoryScore score = score_trajectories(r.grid, est, truth, lower, upper);
    const GpEstimate true_pop = true_gp(spec, r.grid);
    const WassersteinScore wf = wasserstein2(gp_fpc(model, basis, r.grid), true_pop);
    const WassersteinScore we = wasserstein2(gp_empirical(model, basis, r.grid), true_pop);
    r.fpc = {score.mise, score.coverage, score.mean_width, wf.w2_bar, wf.dm2_bar, wf.dc2_bar};
    r.empirical = {score.mise, score.coverage, score.mean_width, we.w2_bar, we.dm2_bar, we.dc2_bar};

    const std::vector<double> ise(score.ise_per_subject.data(),
                                  score.ise_per_subject.data() + score.ise_per_subject.size());
    const std::vector<double> probs{0.0, 0.25, 0.5, 0.75, 1.0};
    r.subjects = quantile_indices(ise, probs);
    const auto n = static_cast<Eigen::Index>(r.subjects.size());
    r.truth.resize(n, truth.cols());
    r.estimate.resize(n, est.cols());
    r.lower = Eigen::MatrixXd::Constant(n, est.cols(), kNaN);
    r.upper = Eigen::MatrixXd::Constant(n, est.cols(), kNaN);
    for (Eigen::Index q = 0; q < n; ++q) {
      const auto i = static_cast<Eigen::Index>(r.subjects[static_cast<std::size_t>(q)]);
      r.truth.row(q) = truth.row(i);
      r.estimate.row(q) = est.row(i);
      if (lower.size()) {
        r.lower.row(q) = lower.row(i);
        r.upper.row(q) = upper.row(i);
      }
    }
    r.ok = true;
  } catch (const Error& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

BenchmarkResult run_benchmark(std::span<const BenchmarkCell> cells, const BenchmarkOptions& options) {
  if (options.replicates < 1) throw DomainError("replicates must be at least 1");
  BenchmarkResult out;
  out.cells.assign(cells.begin(), cells.end());
  const int n_tasks = static_cast<int>(cells.size()) * options.replicates;
  out.replicates.resize(static_cast<std::size_t>(n_tasks));
  const int workers = options.workers > 0 ? options.workers : omp_get_max_threads();
  const bool parallel_inner = workers <= 1;

#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (int task = 0; task < n_tasks; ++task) {
    const auto c = static_cast<std::size_t>(task / options.replicates);
    const int rep = task % options.replicates;
    SimSpec spec = cells[c].spec;
    spec.seed = replicate_seed(options.seed, rep);
    ReplicateResult r = run_replicate(spec, options, parallel_inner);
    r.cell = c;
    r.replicate = rep;
    out.replicates[static_cast<std::size_t>(task)] = std::move(r);
  }

  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<RunMetrics> fpc, emp;
    std::vector<double> combined;
    std::vector<int> index;
    for (int rep = 0; rep < options.replicates; ++rep) {
      const ReplicateResult& r = out.replicates[c * static_cast<std::size_t>(options.replicates) +
                                               static_cast<std::size_t>(rep)];
      if (!r.error.empty()) {
        out.failures.push_back({c, rep, r.seed, r.ok ? "HM-FPC bands" : "HM-FPC", r.error});
      }
      if (!r.ok) continue;
      fpc.push_back(r.fpc);
      emp.push_back(r.empirical);
      combined.push_back(r.fpc.mise);
      index.push_back(rep);
    }
    out.typical.push_back(combined.empty() ? -1 : index[typical_run(combined)]);
    if (fpc.empty()) continue;
    const SimSpec& s = cells[c].spec;
    const std::string dgp = to_string(s.dgp);
    for (const SummaryRow& row : aggregate_runs(fpc)) {
      if (row.metric == "RMISE" || row.metric == "coverage" || row.metric == "width") {
        out.summary.push_back({dgp, s.d, s.n_i, "HM-FPC", row});
      }
    }
    for (const auto& [method, runs] : {std::pair{"HM-FPC/FPC", &fpc}, std::pair{"HM-FPC/empirical", &emp}}) {
      for (const SummaryRow& row : aggregate_runs(*runs)) {
        if (row.metric == "RMWE" || row.metric == "RMSE_m" || row.metric == "RMSE_C") {
          out.summary.push_back({dgp, s.d, s.n_i, method, row});
        }
      }
    }
  }
  return out;
}

std::vector<SummaryTableRow> reference_rows() {
  std::vector<SummaryTableRow> rows;
  const auto add = [&rows](const std::string& method, double rmise, double width, double coverage) {
    for (const auto& [metric, value] : {std::pair{"RMISE", rmise}, {"width", width}, {"coverage", coverage}}) {
      rows.push_back({"2FPC", 100, 5, method, {metric, value, kNaN, kNaN, 1}});
    }
  };
  add("HM-FPC (reported)", 0.34, 0.39, 0.97);
  add("HGAM-GS (reported)", 2.36, 1.99, 0.93);
  add("PACE (reported)", 2.91, 1.68, 0.66);
  return rows;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryTableRow> rows) {
  out << "dgp,d,n_i,method,metric,value,ci_lo,ci_hi\n";
  for (const auto& r : rows) {
    out << r.dgp << ',' << r.d << ',' << r.n_i << ',' << r.method << ',' << r.row.metric << ','
        << csv(r.row.value) << ',' << csv(r.row.ci_lo) << ',' << csv(r.row.ci_hi) << '\n';
  }
}

void write_replicates_csv(std::ostream& out, const BenchmarkResult& result) {
  out << "dgp,d,n_i,replicate,seed,ok,k,gamma,sigma2,mise,coverage,width,"
         "w2_fpc,dm2_fpc,dc2_fpc,w2_empirical,dm2_empirical,dc2_empirical\n";
  for (const auto& r : result.replicates) {
    const SimSpec& s = result.cells[r.cell].spec;
    out << to_string(s.dgp) << ',' << s.d << ',' << s.n_i << ',' << r.replicate << ',' << r.seed << ','
        << (r.ok ? 1 : 0) << ',';
    if (r.ok) {
      out << r.k << ',' << csv(r.gamma) << ',' << csv(r.sigma2) << ',' << csv(r.fpc.mise) << ','
          << csv(r.fpc.coverage) << ',' << csv(r.fpc.mean_width) << ',' << csv(r.fpc.w2_bar) << ','
          << csv(r.fpc.dm2_bar) << ',' << csv(r.fpc.dc2_bar) << ',' << csv(r.empirical.w2_bar) << ','
          << csv(r.empirical.dm2_bar) << ',' << csv(r.empirical.dc2_bar) << '\n';
    } else {
      out << ",,,,,,,,,,,\n";
    }
  }
}

void write_failures_csv(std::ostream& out, const BenchmarkResult& result) {
  out << "dgp,d,n_i,replicate,seed,method,error\n";
  for (const auto& f : result.failures) {
    const SimSpec& s = result.cells[f.cell].spec;
    std::string msg = f.error;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << to_string(s.dgp) << ',' << s.d << ',' << s.n_i << ',' << f.replicate << ',' << f.seed << ','
        << f.method << ",\"" << msg << "\"\n";
  }
}

void write_typical_csv(std::ostream& out, const ReplicateResult& run) {
  out << "subject,time,truth,estimate,lower,upper\n";
  for (std::size_t q = 0; q < run.subjects.size(); ++q) {
    const auto row = static_cast<Eigen::Index>(q);
    for (std::size_t j = 0; j < run.grid.size(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      out << run.subjects[q] + 1 << ',' << csv(run.grid[j]) << ',' << csv(run.truth(row, col)) << ','
          << csv(run.estimate(row, col)) << ',' << csv(run.lower(row, col)) << ',' << csv(run.upper(row, col))
          << '\n';
    }
  }
}

std::string summary_report(const BenchmarkResult& result, const BenchmarkOptions& options) {
  std::ostringstream out;
  out << "replicates per cell: " << options.replicates << "  seed: " << options.seed
      << "  n_basis: " << options.n_basis << "  t_fve: " << options.t_fve;
  if (options.bands) out << "  n_s: " << options.n_s << "  level: " << options.level;
  out << "\n\n";
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const SimSpec& s = result.cells[c].spec;
    int ok = 0;
    std::vector<int> ks;
    for (const auto& r : result.replicates) {
      if (r.cell != c || !r.ok) continue;
      ++ok;
      ks.push_back(r.k);
    }
    out << result.cells[c].label() << ": " << ok << "/" << options.replicates << " ok";
    if (!ks.empty()) {
      const int kmax = *std::max_element(ks.begin(), ks.end());
      out << "  K:";
      for (int k = 0; k <= kmax; ++k) {
        const auto n = std::count(ks.begin(), ks.end(), k);
        if (n) out << ' ' << k << "x" << n;
      }
    }
    out << '\n';
    for (const auto& row : result.summary) {
      if (row.dgp != to_string(s.dgp) || row.d != s.d || row.n_i != s.n_i) continue;
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-18s %-9s %10.4f  [%.4f, %.4f]\n", row.method.c_str(),
                    row.row.metric.c_str(), row.row.value, row.row.ci_lo, row.row.ci_hi);
      out << buf;
    }
  }
  out << "\nfailures: " << result.failures.size() << '\n';
  return out.str();
}

void write_benchmark_outputs(const std::string& dir, const BenchmarkResult& result,
                             const BenchmarkOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto put = [&dir](const std::string& name, const std::string& content) {
    write_file_atomic((fs::path(dir) / name).string(), content);
  };
  std::ostringstream summary, reps, fails, ref;
  write_summary_csv(summary, result.summary);
  write_replicates_csv(reps, result);
  write_failures_csv(fails, result);
  const auto reference = reference_rows();
  write_summary_csv(ref, reference);
  put("summary.csv", summary.str());
  put("replicates.csv", reps.str());
  put("failures.csv", fails.str());
  put("reference.csv", ref.str());
  put("report.txt", summary_report(result, options));
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    if (result.typical[c] < 0) continue;
    const auto& run = result.replicates[c * static_cast<std::size_t>(options.replicates) +
                                        static_cast<std::size_t>(result.typical[c])];
    std::ostringstream t;
    write_typical_csv(t, run);
    put("typical_" + result.cells[c].label() + ".csv", t.str());
  }
}

}  // namespace hmfpc
