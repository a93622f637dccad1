#pragma once

#include <cstdint>
#include <vector>

#include "asmc/engine.hpp"

namespace asmc {

/// Constants of the symmetric-martingale moment inequality; b(2m)^(2m) is
/// the 2m-th standard normal moment, which is what the oracle tests check.
/// Evaluated through log-factorials so large orders do not overflow.
double khinchine_b(int m);

/// 6 exp(-N eps^2 / (8 sigma1)); the raw value, callers cap at 1 when a
/// probability is reported.
double bound_main(double eps, double n, double sigma1);

/// The optimized splitting factor in (0,1], tending to 1 as eps -> 0.
double alpha_factor(double eps, double sigma_sq, double sigma1);

/// 6 exp(-N eps^2 alpha^2 / (2 sigma_n^2)).
double bound_improved(double eps, double n, double sigma_sq, double sigma1);

/// (1 + eps sqrt(N)) exp(-N eps^2 / (2 sigma_tilde^2)).
double bound_fk743(double eps, double n, double sigma_tilde_sq);

/// The level exceeded with probability at most rho under the one-block
/// mixing condition: (4 rbar / delta^2) sqrt(2 m runder rbar log(6/rho) /
/// (N delta)).
double uniform_quantile(double rho, double n, double delta, double r_bar, double r_under,
                        int m);

double osc(const Vector& f);

/// Tail exceedance counts of |eta_n^N(f) - eta_n(f)| over a grid of levels,
/// checked against the exponential bound with a Wilson 99% upper limit.
struct TailReport {
  int block = 0;
  int n_particles = 0;
  int replicates = 0;
  double sigma1 = 0.0;
  double exact_value = 0.0;  // eta_n(f)
  Vector eps_grid;
  std::vector<int> exceed_counts;
  Vector frequencies;
  Vector wilson_upper;  // 99% upper limits
  Vector bounds;        // min(1, bound_main)
  bool pass = false;
};

TailReport tail_experiment(const FiniteModel& model, const BlockSchedule& schedule,
                           const Vector& f, int block, const Vector& eps_grid, int n_particles,
                           int replicates, std::uint64_t seed,
                           ResamplerKind resampler = ResamplerKind::select);

/// Re-derives the verdict from the stored numbers alone.
bool tail_verdict(const TailReport& report);

struct LmPoint {
  int order = 0;
  double value = 0.0;      // sqrt(N) * empirical L_m norm
  double se = 0.0;         // same scale as value
  double bound = 0.0;
  bool pass = false;
};

struct BiasReport {
  int block = 0;
  int n_particles = 0;
  int replicates = 0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double exact_value = 0.0;
  double bias = 0.0;     // mean of eta_n^N(f) - eta_n(f)
  double se_bias = 0.0;
  bool bias_pass = false;
  std::vector<LmPoint> lm;
  bool pass = false;
};

BiasReport bias_and_lm_experiment(const FiniteModel& model, const BlockSchedule& schedule,
                                  const Vector& f, int block, int n_particles, int replicates,
                                  const std::vector<int>& orders, std::uint64_t seed,
                                  ResamplerKind resampler = ResamplerKind::select);

/// One-step local field V_n^N(f): the centered difference between the
/// boundary-n estimate and its exact conditional expectation given the
/// recorded boundary-(n-1) configuration.
struct LocalFieldReport {
  int block = 0;
  int n_particles = 0;
  int replicates = 0;
  double mean = 0.0;
  double se_mean = 0.0;
  bool mean_pass = false;
  double variance = 0.0;
  double se_variance = 0.0;
  double exact_variance = 0.0;
  bool variance_pass = false;
  std::vector<LmPoint> lm;  // bounds b(m) osc(f)
  bool pass = false;
};

LocalFieldReport local_field_experiment(const FiniteModel& model, const BlockSchedule& schedule,
                                        const Vector& f, int block, int n_particles,
                                        int replicates, const std::vector<int>& orders,
                                        std::uint64_t seed,
                                        ResamplerKind resampler = ResamplerKind::select);

struct CltReport {
  int block = 0;
  int n_particles = 0;
  int replicates = 0;
  double exact_variance = 0.0;
  double empirical_variance = 0.0;
  double se_variance = 0.0;
  double ratio = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double ratio_lo = 0.9;
  double ratio_hi = 1.1;
  double skew_max = 0.2;
  double kurtosis_max = 0.5;
  bool pass = false;
};

CltReport clt_experiment(const FiniteModel& model, const BlockSchedule& schedule, const Vector& f,
                         int block, int n_particles, int replicates, std::uint64_t seed,
                         ResamplerKind resampler = ResamplerKind::select,
                         std::uint64_t enum_cap = 1000000);

/// Side-by-side improved / reference bound values over an (eps, N) grid.
struct BoundComparison {
  Vector eps_grid;
  std::vector<int> n_grid;
  std::vector<std::vector<double>> improved;  // [eps][n]
  std::vector<std::vector<double>> reference;
};

BoundComparison compare_bounds(const Vector& eps_grid, const std::vector<int>& n_grid,
                               double sigma_sq, double sigma1, double sigma_tilde_sq);

}  // namespace asmc
