#include "asmc/coupling.hpp"

#include <cmath>

#include "asmc/parallel.hpp"

namespace asmc {

CoupledRun run_coupled(const FiniteModel& model, const CriterionSpec& spec,
                       const BlockSchedule& exact_schedule, int n, std::uint64_t seed,
                       std::uint64_t replicate, int blocks, const RunOptions& options) {
  if (spec.fixed) throw Error("the adaptive side of a coupled pair cannot be fixed");
  if (blocks < 1 || blocks > exact_schedule.num_complete_blocks())
    throw Error("coupled comparison needs complete blocks 1.." + std::to_string(blocks));

  CoupledRun out;
  out.shared_seed = seed;
  out.adaptive = run_adaptive(model, spec, n, seed, replicate, options);

  std::vector<int> times(exact_schedule.times.begin(),
                         exact_schedule.times.begin() + exact_schedule.num_complete_blocks() + 1);
  CriterionSpec ref = CriterionSpec::fixed_times(times, spec.resampler);
  ref.kind = spec.kind;  // keep the recorded criterion trace comparable
  out.reference = run_adaptive(model, ref, n, seed, replicate, options);

  out.adaptive_times = out.adaptive.resampling_times;
  out.reference_times = times;
  for (int b = 1; b <= blocks; ++b) {
    const bool adaptive_has = static_cast<std::size_t>(b) < out.adaptive_times.size();
    if (!adaptive_has ||
        out.adaptive_times[static_cast<std::size_t>(b)] != times[static_cast<std::size_t>(b)]) {
      out.first_divergence = b;
      break;
    }
  }
  return out;
}

std::vector<double> sample_thresholds(const KeyedRng& rng, double lower, double upper,
                                      int blocks) {
  if (!(lower > 0.0) || !(lower < upper)) throw InvalidInterval();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(blocks) + 1);
  for (int b = 0; b <= blocks; ++b)
    out.push_back(lower +
                  (upper - lower) * rng.uniform(static_cast<std::uint64_t>(b), 0, Role::threshold));
  return out;
}

std::pair<double, double> wilson_interval(int count, int total, double z) {
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(count) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = p + z2 / (2.0 * n);
  const double spread = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  double lo = std::max(0.0, (center - spread) / denom);
  double hi = std::min(1.0, (center + spread) / denom);
  if (count == 0) lo = 0.0;
  if (count == total) hi = 1.0;
  return {lo, hi};
}

FailureSweep failure_sweep(const FiniteModel& model, const CriterionSpec& spec,
                           const BlockSchedule& exact_schedule, int blocks,
                           const std::vector<int>& n_list, int replicates, std::uint64_t seed) {
  if (replicates < 1) throw Error("failure sweep needs replicates");
  FailureSweep sweep;

  RunOptions light;
  light.record_snapshots = false;
  light.record_estimates = false;

  for (int n_particles : n_list) {
    std::vector<char> diverged(static_cast<std::size_t>(replicates), 0);
    parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t r) {
      const CoupledRun run = run_coupled(model, spec, exact_schedule, n_particles, seed,
                                         static_cast<std::uint64_t>(r), blocks, light);
      diverged[r] = run.first_divergence.has_value() ? 1 : 0;
    });
    SweepPoint point;
    point.n_particles = n_particles;
    point.replicates = replicates;
    for (char d : diverged) point.failures += d;
    point.freq = static_cast<double>(point.failures) / static_cast<double>(replicates);
    constexpr double kZ95 = 1.959963984540054;
    const auto [lo, hi] = wilson_interval(point.failures, replicates, kZ95);
    point.wilson_lo = lo;
    point.wilson_hi = hi;
    sweep.points.push_back(point);
  }

  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int used = 0;
  for (const SweepPoint& p : sweep.points) {
    if (p.failures == 0) continue;  // zero counts are reported, never fitted
    const double x = static_cast<double>(p.n_particles);
    const double y = std::log(p.freq);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++used;
  }
  sweep.points_used = used;
  if (used >= 2) {
    const double denom = used * sxx - sx * sx;
    if (denom != 0.0) {
      sweep.fit_valid = true;
      sweep.slope = (used * sxy - sx * sy) / denom;
      sweep.intercept = (sy - sweep.slope * sx) / used;
    }
  }
  return sweep;
}

}  // namespace asmc
