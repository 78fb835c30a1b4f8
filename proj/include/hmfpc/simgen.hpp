#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmfpc/dataset.hpp"
#include "hmfpc/population.hpp"

namespace hmfpc {

enum class Dgp { two_fpc, lmm_ri, sitar };

std::string to_string(Dgp dgp);
/// Accepts "2FPC", "LMM-RI", "SITAR" (case-insensitive).
Dgp parse_dgp(const std::string& name);

struct TwoFpcParams {
  double sigma = 0.1;
};

struct LmmRiParams {
  double beta0 = -1.0;
  double beta1 = 2.0;
  double sigma_u = 0.5;
  double sigma = 0.1;
};

/// Synthetic growth-curve defaults; h passes through the control points as
/// a natural cubic spline.
struct SitarParams {
  std::vector<double> ages{8.0, 10.0, 12.0, 14.0, 16.0, 18.0};
  std::vector<double> heights{128.0, 138.0, 151.0, 160.0, 163.0, 164.0};
  double sigma_alpha = 5.0;
  double sigma_beta = 0.6;
  double sigma_gamma = 0.15;
  double sigma = 0.5;
  int mc_draws = 100000;
  std::uint64_t mc_seed = 1;
};

struct SimSpec {
  Dgp dgp = Dgp::two_fpc;
  int d = 100;
  int n_i = 5;
  std::uint64_t seed = 1;
  TwoFpcParams two_fpc;
  LmmRiParams lmm_ri;
  SitarParams sitar;
};

/// Interpolating natural cubic spline, continued linearly outside its knots.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
};

struct SimulatedDataset {
  SimSpec spec;
  LongitudinalDataset data;
  /// Per-subject random effects: (u1, u2) for 2FPC, (u0) for LMM-RI,
  /// (alpha, beta, gamma) for SITAR.
  Eigen::MatrixXd effects;

  /// True mu_i(t).
  double trajectory(std::size_t subject, double t) const;
  Eigen::MatrixXd trajectories(std::span<const double> grid) const;
};

/// Support of the observation-time design.
std::pair<double, double> design_range(const SimSpec& spec);

SimulatedDataset generate(const SimSpec& spec);
SimulatedDataset gen_2fpc(const SimSpec& spec);
SimulatedDataset gen_lmm_ri(const SimSpec& spec);
SimulatedDataset gen_sitar(const SimSpec& spec);

/// mu(t) given one subject's random effects.
double dgp_trajectory(const SimSpec& spec, const Eigen::VectorXd& effects, double t);

/// True population mean and covariance on `grid`: closed form for 2FPC and
/// LMM-RI, Monte Carlo over the random effects for SITAR.
GpEstimate true_gp(const SimSpec& spec, std::span<const double> grid);

}  // namespace hmfpc
