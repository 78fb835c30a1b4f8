#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>


#include "CLI11.hpp"
#include "json.hpp"

#include "hmfpc/benchmark_harness.hpp"
#include "hmfpc/errors.hpp"
#include "hmfpc/fit.hpp"
#include "hmfpc/inference.hpp"
#include "hmfpc/population.hpp"
#include "hmfpc/rng.hpp"
#include "hmfpc/serialize.hpp"
#include "hmfpc/simgen.hpp"
#include "hmfpc/tuning.hpp"

namespace fs = std::filesystem;
using namespace hmfpc;

namespace {

enum Exit { kOk = 0, kParse = 2, kConvergence = 3, kIntegrity = 4, kNumerical = 5 };

struct Config {
  std::string input;
  std::string model;
  std::string spec;
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  int n_basis = OrthoBasis::kDefaultSize;
  std::string gamma_grid;
  double t_fve = 0.999;
  int n_s = 1000;
  double level = 0.95;
  std::string grid;
  std::string subjects;
  std::string method = "both";
  std::string warm_start;
  std::string dgp = "2FPC";
  int d = 100;
  int n_i = 5;
  int replicates = 100;
  std::string cells;
  int workers = 0;
  bool no_bands = false;
};

const char* kDefaultsFooter = R"(Defaults:
  basis           orthonormal cubic B-splines, n_basis = 10, interior knots at quantiles of pooled times
  gamma grid      13 points 10^(-4 + 8j/12), j = 0..12 (1e-4 .. 1e4)
  K selection     smallest K with FVE > t_fve = 0.999; K_max starts at 2, cap 8; K = 0 if sigma2_0 - sigma2_Kmax < 1e-10 sigma2_0
  optimizer       BFGS, strong Wolfe (c1 1e-4, c2 0.9), gradient tol 1e-6 relative, 500 iterations, 5 seeded restarts,
                  new components start at N(0, 0.01^2); Newton polish when BFGS stalls
  Hessian         central differences of the exact gradient, step 1e-5 (1 + |theta_j|)
  Laplace jitter  0, 1e-8 .. 1e-4 times max(1, mean |diag H|)
  bootstrap       n_s = 1000 draws, level 0.95, Cholesky jitter 1e-10 .. 1e-6 trace/p, type-7 quantiles
  evaluation      100-point regular grid over the observed time range
  exit codes      0 ok, 2 parse or invalid-input error, 3 convergence failure, 4 integrity error, 5 numerical error
)";

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw DomainError("bad " + what + " entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw DomainError(what + " is empty");
  return out;
}

std::vector<double> gamma_grid(const Config& c) {
  return c.gamma_grid.empty() ? default_gamma_grid() : parse_list(c.gamma_grid, "gamma grid");
}

// "N" for N points over [lo, hi] or "lo:hi:N".
std::vector<double> eval_grid(const std::string& text, double lo, double hi) {
  if (text.empty()) return regular_grid(lo, hi, 100);
  if (text.find(':') == std::string::npos) {
    const auto n = parse_list(text, "grid");
    return regular_grid(lo, hi, static_cast<int>(n.at(0)));
  }
  std::string t = text;
  std::replace(t.begin(), t.end(), ':', ',');
  const auto v = parse_list(t, "grid");
  if (v.size() != 3) throw DomainError("grid must be N or lo:hi:N");
  return regular_grid(v[0], v[1], static_cast<int>(v[2]));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path, 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw DomainError(flag + " is required");
  if (!fs::is_regular_file(path)) throw ParseError(flag + ": no such file " + path, 0);
}

std::string out_path(const Config& c, const std::string& name) { return (fs::path(c.output_dir) / name).string(); }

void prepare_output(const Config& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (!fs::is_directory(c.output_dir)) throw DomainError("cannot create output directory " + c.output_dir);
}

void put(const Config& c, const std::string& name, const std::string& content) {
  write_file_atomic(out_path(c, name), content);
}

std::vector<std::size_t> subject_indices(const Config& c, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  if (c.subjects.empty()) {
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(c.subjects);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto it = std::find(ids.begin(), ids.end(), item);
    if (it == ids.end()) throw DomainError("unknown subject '" + item + "'");
    out.push_back(static_cast<std::size_t>(it - ids.begin()));
  }
  return out;
}

int cmd_simulate(const Config& c) {
  SimSpec spec;
  if (!c.spec.empty()) {
    require_file(c.spec, "--spec");
    spec = simspec_from_json(read_file(c.spec));
  } else {
    spec.dgp = parse_dgp(c.dgp);
    spec.d = c.d;
    spec.n_i = c.n_i;
    spec.seed = c.seed;
  }
  prepare_output(c);
  const SimulatedDataset sim = generate(spec);
  std::ostringstream data;
  sim.data.write_csv(data);
  const auto [lo, hi] = design_range(spec);
  const auto grid = eval_grid(c.grid, lo, hi);
  const Eigen::MatrixXd mu = sim.trajectories(grid);
  std::ostringstream truth;
  truth << "subject,time,value\n";
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      truth << sim.data.subject(static_cast<std::size_t>(i)).id << ',' << format_double(grid[j]) << ','
            << format_double(mu(i, static_cast<Eigen::Index>(j))) << '\n';
    }
  }
  put(c, "data.csv", data.str());
  put(c, "truth.csv", truth.str());
  put(c, "spec.json", simspec_to_json(spec));
  std::cout << "simulated " << to_string(spec.dgp) << " d=" << spec.d << " n_i=" << spec.n_i
            << " seed=" << spec.seed << " -> " << c.output_dir << "\n";
  return kOk;
}

void print_trace(const TuningTrace& trace) {
  std::printf("%12s %3s %14s %16s\n", "gamma", "K", "sigma2_K", "criterion");
  for (std::size_t j = 0; j < trace.points.size(); ++j) {
    const auto& p = trace.points[j];
    if (p.valid) {
      std::printf("%12.4g %3d %14.6g %16.6f%s\n", p.gamma, p.k, p.sigma2, p.criterion,
                  j == trace.chosen_index ? "  <-" : "");
    } else {
      std::printf("%12.4g %3s %14s %16s  (%s)\n", p.gamma, "-", "-", "invalid", p.error.c_str());
    }
  }
  std::printf("chosen gamma %.6g, K = %d\n", trace.chosen_gamma, trace.chosen_k);
}

std::string trajectories_csv(const FittedModel& m, const OrthoBasis& basis, const LongitudinalDataset& data,
                             const std::vector<double>& grid) {
  const Eigen::MatrixXd mu = predicted_trajectories(m, basis, grid);
  std::ostringstream out;
  out << "subject,time,estimate\n";
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      out << data.subject(static_cast<std::size_t>(i)).id << ',' << format_double(grid[j]) << ','
          << format_double(mu(i, static_cast<Eigen::Index>(j))) << '\n';
    }
  }
  return out.str();
}

int cmd_fit(const Config& c) {
  require_file(c.input, "--input");
  if (!c.warm_start.empty()) require_file(c.warm_start, "--warm-start");
  prepare_output(c);
  const LongitudinalDataset data = LongitudinalDataset::read_csv_file(c.input);
  if (data.size() < 2) throw ParseError("need at least two subjects, found " + std::to_string(data.size()), 0);

  FitOptions fopts;
  fopts.seed = derive_seed(c.seed, 0xF17);
  if (!c.warm_start.empty()) {
    // Refit at the saved gamma and K starting from the saved optimum.
    const SavedModel prev = model_from_json(read_file(c.warm_start));
    const PenalizedObjective obj(prev.basis, data, prev.model.gamma);
    FittedModel m = maximize(obj, prev.model.n_components, prev.model.params, fopts);
    if (!m.convergence.converged) throw ConvergenceError("warm-started fit did not converge: " + m.convergence.message);
    SavedModel saved = make_saved_model(prev.basis, m, data);
    put(c, "model.json", model_to_json(saved));
    put(c, "trajectories.csv",
        trajectories_csv(m, prev.basis, data, regular_grid(prev.basis.lower(), prev.basis.upper())));
    std::printf("warm start: gamma %.6g, K = %d, sigma2 %.6g\n", m.gamma, m.n_components, m.sigma2);
    return kOk;
  }

  const OrthoBasis basis = OrthoBasis::build(data.pooled_times(), c.n_basis);
  const auto gammas = gamma_grid(c);
  TuningOptions topts;
  topts.t_fve = c.t_fve;
  topts.fit = fopts;
  const TuningTrace trace = select_gamma(PenalizedObjective(basis, data, gammas.front()), gammas, topts);
  print_trace(trace);
  put(c, "model.json", model_to_json(make_saved_model(basis, trace.chosen_fit, data)));
  put(c, "trace.json", trace_to_json(trace));
  put(c, "trajectories.csv",
      trajectories_csv(trace.chosen_fit, basis, data, regular_grid(basis.lower(), basis.upper())));
  return kOk;
}

int cmd_predict(const Config& c) {
  require_file(c.input, "--input");
  require_file(c.model, "--model");
  prepare_output(c);
  SavedModel saved = model_from_json(read_file(c.model));
  const LongitudinalDataset data = LongitudinalDataset::read_csv_file(c.input);
  check_model_matches(saved, data);
  const PenalizedObjective obj(saved.basis, data, saved.model.gamma);
  const std::uint64_t boot_seed = derive_seed(c.seed, 0xB00);
  const BootstrapSample sample = draw_bootstrap(saved.model, obj, c.n_s, boot_seed);
  const auto grid = eval_grid(c.grid, saved.basis.lower(), saved.basis.upper());
  std::vector<ConfidenceBand> bands;
  std::string warning;
  for (int deriv : {0, 1}) {
    for (std::size_t i : subject_indices(c, saved.subject_ids)) {
      bands.push_back(confidence_band(sample, saved.model, saved.basis, i, grid, c.level, deriv));
      if (!bands.back().warning.empty()) warning = bands.back().warning;
    }
  }
  std::ostringstream out;
  write_bands_csv(out, bands, saved.subject_ids);
  put(c, "bands.csv", out.str());
  if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
  std::cout << bands.size() / 2 << " subjects, " << grid.size() << " times, n_s = " << c.n_s << "\n";
  return kOk;
}

int cmd_population(const Config& c) {
  require_file(c.input, "--input");
  require_file(c.model, "--model");
  if (c.method != "fpc" && c.method != "empirical" && c.method != "both") {
    throw DomainError("--method must be fpc, empirical or both");
  }
  prepare_output(c);
  const SavedModel saved = model_from_json(read_file(c.model));
  const LongitudinalDataset data = LongitudinalDataset::read_csv_file(c.input);
  check_model_matches(saved, data);
  const auto grid = eval_grid(c.grid, saved.basis.lower(), saved.basis.upper());
  std::vector<GpEstimate> gps;
  if (c.method != "empirical") gps.push_back(gp_fpc(saved.model, saved.basis, grid));
  if (c.method != "fpc") gps.push_back(gp_empirical(saved.model, saved.basis, grid));
  for (const auto& gp : gps) {
    const std::string stem = "gp_" + to_string(gp.method);
    std::ostringstream mean, cov;
    write_gp_mean_csv(mean, gp);
    write_gp_cov_csv(cov, gp);
    put(c, stem + "_mean.csv", mean.str());
    put(c, stem + "_cov.csv", cov.str());
    put(c, stem + ".json", gp_to_json(gp));
  }
  return kOk;
}

int cmd_benchmark(const Config& c) {
  std::vector<BenchmarkCell> cells;
  if (!c.cells.empty()) {
    cells = parse_cells(c.cells);
  } else {
    cells = grid_preset(c.grid.empty() ? "desk" : c.grid);
  }
  prepare_output(c);
  BenchmarkOptions o;
  o.replicates = c.replicates;
  o.seed = c.seed;
  o.n_basis = c.n_basis;
  o.gamma_grid = gamma_grid(c);
  o.t_fve = c.t_fve;
  o.n_s = c.n_s;
  o.level = c.level;
  o.bands = !c.no_bands;
  o.workers = c.workers;
  const BenchmarkResult r = run_benchmark(cells, o);
  write_benchmark_outputs(c.output_dir, r, o);
  std::cout << summary_report(r, o);
  return kOk;
}

int exit_code_for(const std::exception& e) {
  // Invalid input values count as parse errors.
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kParse;
  if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const TuningError*>(&e)) return kConvergence;
  if (dynamic_cast<const IntegrityError*>(&e)) return kIntegrity;
  return kNumerical;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ConvergenceError*>(&e)) return "convergence";
  if (dynamic_cast<const TuningError*>(&e)) return "tuning";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const IndefiniteHessianError*>(&e)) return "numerical";
  return "internal";
}

int report_error(const Config& c, const std::string& command, const std::exception& e) {
  const int code = exit_code_for(e);
  nlohmann::json doc{{"command", command}, {"error", error_kind(e)}, {"message", e.what()}, {"exit_code", code}};
  if (const auto* pe = dynamic_cast<const ParseError*>(&e); pe && pe->line() > 0) doc["line"] = pe->line();
  std::cerr << doc.dump() << "\n";
  std::error_code ec;
  if (fs::is_directory(c.output_dir, ec)) {
    try {
      write_file_atomic(out_path(c, "error.json"), doc.dump(1) + "\n");
    } catch (const std::exception&) {
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical functional principal components for sparse longitudinal data"};
  app.require_subcommand(1);
  app.footer(kDefaultsFooter);
  app.option_defaults()->always_capture_default();
  Config c;

  const auto common = [&c](CLI::App* s) {
    s->add_option("--output-dir", c.output_dir, "Directory for outputs");
    s->add_option("--seed", c.seed, "Base random seed");
  };
  const auto tuning = [&c](CLI::App* s) {
    s->add_option("--n-basis", c.n_basis, "Number of basis functions")->check(CLI::Range(4, 1000));
    s->add_option("--gamma-grid", c.gamma_grid, "Comma-separated gamma values (default: 13-point log grid 1e-4..1e4)");
    s->add_option("--t-fve", c.t_fve, "FVE threshold for choosing K")->check(CLI::Range(0.0, 1.0));
  };

  auto* sim = app.add_subcommand("simulate", "Generate a dataset from 2FPC, LMM-RI or SITAR");
  common(sim);
  sim->add_option("--dgp", c.dgp, "2FPC, LMM-RI or SITAR");
  sim->add_option("--d", c.d, "Number of subjects")->check(CLI::PositiveNumber);
  sim->add_option("--n-i", c.n_i, "Observations per subject")->check(CLI::PositiveNumber);
  sim->add_option("--spec", c.spec, "Spec JSON (overrides --dgp/--d/--n-i/--seed)");
  sim->add_option("--grid", c.grid, "Truth grid: N or lo:hi:N (default 100 points over the design range)");

  auto* fit = app.add_subcommand("fit", "Tune gamma and K and fit a model to long-format CSV");
  common(fit);
  tuning(fit);
  fit->add_option("--input", c.input, "CSV with header subject,time,value");
  fit->add_option("--warm-start", c.warm_start, "Model JSON; refit at its gamma and K from its optimum");

  auto* pred = app.add_subcommand("predict", "Trajectory and derivative bands from a fitted model");
  common(pred);
  pred->add_option("--input", c.input, "CSV the model was fit to");
  pred->add_option("--model", c.model, "Model JSON from fit");
  pred->add_option("--n-s", c.n_s, "Bootstrap draws")->check(CLI::Range(100, 100000000));
  pred->add_option("--level", c.level, "Pointwise confidence level")->check(CLI::Range(0.0, 0.999999));
  pred->add_option("--grid", c.grid, "Times: N or lo:hi:N (default 100 points over the data range)");
  pred->add_option("--subjects", c.subjects, "Comma-separated subject ids (default all)");

  auto* pop = app.add_subcommand("population", "Population mean and covariance from a fitted model");
  common(pop);
  pop->add_option("--input", c.input, "CSV the model was fit to");
  pop->add_option("--model", c.model, "Model JSON from fit");
  pop->add_option("--grid", c.grid, "Times: N or lo:hi:N (default 100 points over the data range)");
  pop->add_option("--method", c.method, "fpc, empirical or both");

  auto* bench = app.add_subcommand("benchmark", "Simulation study over a grid of (dgp, d, n_i) cells");
  common(bench);
  tuning(bench);
  bench->add_option("--grid", c.grid, "Preset: desk, rmwe-2fpc, full-2fpc, full-lmm-ri, full-sitar, full (default desk)");
  bench->add_option("--cells", c.cells, "Explicit cells DGP/d/n_i,... (overrides --grid)");
  bench->add_option("--replicates", c.replicates, "Replicates per cell")->check(CLI::PositiveNumber);
  bench->add_option("--workers", c.workers, "Worker threads (0 = all logical cores)")->check(CLI::NonNegativeNumber);
  bench->add_option("--n-s", c.n_s, "Bootstrap draws")->check(CLI::Range(100, 100000000));
  bench->add_option("--level", c.level, "Pointwise confidence level")->check(CLI::Range(0.0, 0.999999));
  bench->add_flag("--no-bands", c.no_bands, "Skip bootstrap bands");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string command;
  try {
    if (*sim) return command = "simulate", cmd_simulate(c);
    if (*fit) return command = "fit", cmd_fit(c);
    if (*pred) return command = "predict", cmd_predict(c);
    if (*pop) return command = "population", cmd_population(c);
    if (*bench) return command = "benchmark", cmd_benchmark(c);
  } catch (const std::exception& e) {
    return report_error(c, command, e);
  }
  return kOk;
}
