#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "asmc/engine.hpp"

namespace asmc {

/// Adaptive and reference runs under shared keyed randomness. While their
/// resampling schedules agree the two trajectories are identical draw for
/// draw, so divergence is detected by comparing time sequences alone.
struct CoupledRun {
  std::vector<int> adaptive_times;
  std::vector<int> reference_times;
  std::optional<int> first_divergence;  // boundary index, or none
  std::uint64_t shared_seed = 0;
  RunRecord adaptive;
  RunRecord reference;
};

/// Runs the pair on a common (seed, replicate) key set and compares the
/// first `blocks` boundaries against the exact schedule.
CoupledRun run_coupled(const FiniteModel& model, const CriterionSpec& spec,
                       const BlockSchedule& exact_schedule, int n, std::uint64_t seed,
                       std::uint64_t replicate, int blocks, const RunOptions& options = {});

/// blocks+1 threshold levels drawn uniformly from (lower, upper), one per
/// block index from the threshold keys.
std::vector<double> sample_thresholds(const KeyedRng& rng, double lower, double upper,
                                      int blocks);

/// Two-sided Wilson score interval for a binomial frequency.
std::pair<double, double> wilson_interval(int count, int total, double z);

struct SweepPoint {
  int n_particles = 0;
  int failures = 0;
  int replicates = 0;
  double freq = 0.0;
  double wilson_lo = 0.0;
  double wilson_hi = 0.0;
};

struct FailureSweep {
  std::vector<SweepPoint> points;
  // least-squares fit of log(freq) against N over the non-zero counts
  bool fit_valid = false;
  double slope = 0.0;
  double intercept = 0.0;
  int points_used = 0;
};

/// Coupling-failure frequency as a function of N, over R independent
/// replicates per point. The spec and schedule must share their thresholds.
FailureSweep failure_sweep(const FiniteModel& model, const CriterionSpec& spec,
                           const BlockSchedule& exact_schedule, int blocks,
                           const std::vector<int>& n_list, int replicates, std::uint64_t seed);

}  // namespace asmc
