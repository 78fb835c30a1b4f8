#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/metrics.hpp"
#include "hmfpc/simgen.hpp"

namespace hmfpc {

struct BenchmarkOptions {
  int replicates = 100;
  std::uint64_t seed = 1;
  int n_basis = 10;
  std::vector<double> gamma_grid;  // empty: default grid
  double t_fve = 0.999;
  int n_s = 1000;
  double level = 0.95;
  int eval_points = 100;
  /// Skip the bootstrap; coverage and width become NaN.
  bool bands = true;
  /// Worker threads for replicates; 0 uses every logical core.
  int workers = 0;
};

/// One (dgp, d, n_i) cell; the dgp parameter blocks come from `spec`.
struct BenchmarkCell {
  SimSpec spec;
  std::string label() const;
};

/// Named grids: "full-2fpc", "full-lmm-ri", "full-sitar" (18 cells
/// each), "full" (all 54), "desk" (one 2FPC cell), "rmwe-2fpc" (2FPC,
/// n_i = 3, d = 50..300).
std::vector<BenchmarkCell> grid_preset(const std::string& name);
/// "DGP/d/n_i" entries separated by commas, e.g. "2FPC/100/5,LMM-RI/300/5".
std::vector<BenchmarkCell> parse_cells(const std::string& text);

struct ReplicateResult {
  std::size_t cell = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  int k = 0;
  double gamma = 0.0;
  double sigma2 = 0.0;
  std::vector<double> lambdas;
  RunMetrics fpc;        // trajectory scores + FPC population method
  RunMetrics empirical;  // trajectory scores + empirical population method
  /// Subjects at the (0, .25, .5, .75, 1) quantiles of ISE with their
  /// curves on `grid` (rows follow `subjects`).
  std::vector<std::size_t> subjects;
  std::vector<double> grid;
  Eigen::MatrixXd truth, estimate, lower, upper;
};

struct FailureRecord {
  std::size_t cell = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::string error;
};

struct SummaryTableRow {
  std::string dgp;
  int d = 0;
  int n_i = 0;
  std::string method;
  SummaryRow row;
};

struct BenchmarkResult {
  std::vector<BenchmarkCell> cells;
  std::vector<ReplicateResult> replicates;  // (cell, replicate) order
  std::vector<FailureRecord> failures;
  std::vector<SummaryTableRow> summary;
  /// Typical replicate per cell; -1 when every replicate failed.
  std::vector<int> typical;
};

/// Seed of replicate r; independent of the cell so that datasets for the
/// same replicate are nested across d.
std::uint64_t replicate_seed(std::uint64_t seed, int replicate);

/// Generate, tune, fit, bootstrap and score one replicate. Never throws for
/// library errors: they are returned in `error`.
ReplicateResult run_replicate(const SimSpec& spec, const BenchmarkOptions& options, bool parallel_inner);

BenchmarkResult run_benchmark(std::span<const BenchmarkCell> cells, const BenchmarkOptions& options);

/// Rows reported for single 2FPC dataset (d = 100, n_i = 5) figures; kept for
/// context next to the summary table.
std::vector<SummaryTableRow> reference_rows();

/// dgp,d,n_i,method,metric,value,ci_lo,ci_hi
void write_summary_csv(std::ostream& out, std::span<const SummaryTableRow> rows);
void write_replicates_csv(std::ostream& out, const BenchmarkResult& result);
void write_failures_csv(std::ostream& out, const BenchmarkResult& result);
/// subject,time,truth,estimate,lower,upper for the typical replicate of a cell.
void write_typical_csv(std::ostream& out, const ReplicateResult& run);
std::string summary_report(const BenchmarkResult& result, const BenchmarkOptions& options);

/// Writes summary.csv, replicates.csv, failures.csv, reference.csv,
/// report.txt and typical_<cell>.csv into `dir` (atomic per file).
void write_benchmark_outputs(const std::string& dir, const BenchmarkResult& result,
                             const BenchmarkOptions& options);

}  // namespace hmfpc
