#include "asmc/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace asmc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int sample_from(const Vector& prob, double u) {
  double c = 0.0;
  const int k = static_cast<int>(prob.size());
  for (int i = 0; i < k; ++i) {
    c += prob[static_cast<std::size_t>(i)];
    if (u < c) return i;
  }
  for (int i = k - 1; i >= 0; --i)
    if (prob[static_cast<std::size_t>(i)] > 0.0) return i;
  return k - 1;
}

int sample_cumulative(const Vector& cum, double target) {
  // first index whose cumulative sum exceeds the target (right-open)
  const int n = static_cast<int>(cum.size());
  int lo = 0, hi = n - 1;
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (target < cum[static_cast<std::size_t>(mid)])
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

Vector state_histogram(const std::vector<int>& states, int k) {
  Vector h(static_cast<std::size_t>(k), 0.0);
  const double w = 1.0 / static_cast<double>(states.size());
  for (int s : states) h[static_cast<std::size_t>(s)] += w;
  return h;
}

Vector weighted_histogram(const std::vector<int>& states, const Vector& log_weights, int k) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) mx = std::max(mx, lw);
  Vector h(static_cast<std::size_t>(k), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    const double w = std::exp(log_weights[i] - mx);
    h[static_cast<std::size_t>(states[i])] += w;
    total += w;
  }
  if (!(total > 0.0)) throw AllWeightsUnderflow();
  for (double& v : h) v /= total;
  return h;
}

}  // namespace

ParticleSystem init_particles(const FiniteModel& model, int n, const KeyedRng& rng) {
  if (n < 1) throw Error("need at least one particle");
  ParticleSystem system;
  system.states.resize(static_cast<std::size_t>(n));
  system.block_log_weights.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    system.states[static_cast<std::size_t>(i)] =
        sample_from(model.initial, rng.uniform(0, static_cast<std::uint64_t>(i), Role::init));
  return system;
}

void mutate(ParticleSystem& system, const FiniteModel& model, const KeyedRng& rng) {
  if (system.time >= model.horizon) throw HorizonExhausted();
  const int s = system.time + 1;
  const Vector& g = model.potential_at(s);
  for (int i = 0; i < system.num_particles(); ++i) {
    const double u = rng.uniform(static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(i),
                                 Role::mutation);
    const int next = sample_step(model, s - 1, system.states[static_cast<std::size_t>(i)], u);
    system.states[static_cast<std::size_t>(i)] = next;
    system.block_log_weights[static_cast<std::size_t>(i)] +=
        std::log(g[static_cast<std::size_t>(next)]);
  }
  system.time = s;
}

CriterionValue criterion_value(const ParticleSystem& system, CriterionKind kind) {
  if (system.time == system.block_start) throw EmptyBlock();
  const int n = system.num_particles();
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : system.block_log_weights) mx = std::max(mx, lw);
  double s1 = 0.0, s2 = 0.0, sum_lw = 0.0;
  for (double lw : system.block_log_weights) {
    const double w = std::exp(lw - mx);
    s1 += w;
    s2 += w * w;
    sum_lw += lw;
  }
  if (!(s1 > 0.0)) throw AllWeightsUnderflow();
  CriterionValue out;
  out.cv2 = static_cast<double>(n) * s2 / (s1 * s1) - 1.0;
  out.ess = static_cast<double>(n) / (1.0 + out.cv2);
  out.value = kind == CriterionKind::entropy ? -sum_lw / static_cast<double>(n) : out.cv2;
  return out;
}

namespace {

void finish_resampling(ParticleSystem& system, std::vector<int>&& new_states,
                       std::vector<int>&& parents) {
  system.states = std::move(new_states);
  std::fill(system.block_log_weights.begin(), system.block_log_weights.end(), 0.0);
  system.block_index += 1;
  system.block_start = system.time;
  system.resampling_times.push_back(system.time);
  if (system.record_ancestry) system.ancestry.push_back(std::move(parents));
}

}  // namespace

void resample_multinomial(ParticleSystem& system, const KeyedRng& rng) {
  const int n = system.num_particles();
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : system.block_log_weights) mx = std::max(mx, lw);
  Vector cum(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += std::exp(system.block_log_weights[static_cast<std::size_t>(i)] - mx);
    cum[static_cast<std::size_t>(i)] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) throw AllWeightsUnderflow();

  std::vector<int> new_states(static_cast<std::size_t>(n));
  std::vector<int> parents(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(static_cast<std::uint64_t>(system.time),
                                 static_cast<std::uint64_t>(i), Role::selection);
    const int j = sample_cumulative(cum, u * total);
    parents[static_cast<std::size_t>(i)] = j;
    new_states[static_cast<std::size_t>(i)] = system.states[static_cast<std::size_t>(j)];
  }
  finish_resampling(system, std::move(new_states), std::move(parents));
}

void resample_selection_kernel(ParticleSystem& system, const KeyedRng& rng) {
  const int n = system.num_particles();
  Vector weights(static_cast<std::size_t>(n));
  Vector cum(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double w = std::exp(system.block_log_weights[static_cast<std::size_t>(i)]);
    if (!(w > 0.0) || w >= 1.0) throw WeightNotInUnitInterval(w);
    weights[static_cast<std::size_t>(i)] = w;
    total += w;
    cum[static_cast<std::size_t>(i)] = total;
  }

  std::vector<int> new_states(static_cast<std::size_t>(n));
  std::vector<int> parents(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double keep = rng.uniform(static_cast<std::uint64_t>(system.time),
                                    static_cast<std::uint64_t>(i), Role::keep);
    int j = i;
    if (keep >= weights[static_cast<std::size_t>(i)]) {
      const double u = rng.uniform(static_cast<std::uint64_t>(system.time),
                                   static_cast<std::uint64_t>(i), Role::selection);
      j = sample_cumulative(cum, u * total);
    }
    parents[static_cast<std::size_t>(i)] = j;
    new_states[static_cast<std::size_t>(i)] = system.states[static_cast<std::size_t>(j)];
  }
  finish_resampling(system, std::move(new_states), std::move(parents));
}

namespace {

void validate_spec(const CriterionSpec& spec, int horizon) {
  if (spec.fixed) {
    if (spec.schedule.empty() || spec.schedule.front() != 0)
      throw Error("fixed schedule must start at 0");
    for (std::size_t i = 1; i < spec.schedule.size(); ++i)
      if (spec.schedule[i] <= spec.schedule[i - 1] || spec.schedule[i] > horizon)
        throw Error("fixed schedule must be strictly increasing within the horizon");
    return;
  }
  if (spec.randomized) {
    if (!(spec.lower > 0.0) || !(spec.lower < spec.upper)) throw InvalidInterval();
  } else {
    if (spec.thresholds.empty()) throw Error("thresholds required for adaptive runs");
    for (double a : spec.thresholds)
      if (!(a > 0.0)) throw Error("thresholds must be positive");
  }
}

double block_threshold(const CriterionSpec& spec, int block, const KeyedRng& rng) {
  if (spec.randomized)
    return spec.lower + (spec.upper - spec.lower) *
                            rng.uniform(static_cast<std::uint64_t>(block), 0, Role::threshold);
  const std::size_t idx = std::min(static_cast<std::size_t>(block), spec.thresholds.size() - 1);
  return spec.thresholds[idx];
}

double raw_mean_weight(const ParticleSystem& system) {
  double acc = 0.0;
  for (double lw : system.block_log_weights) acc += std::exp(lw);
  return acc / static_cast<double>(system.num_particles());
}

BoundaryRecord make_boundary(const ParticleSystem& system, const FiniteModel& model, int block,
                             bool truncated, double threshold, double criterion, double ess,
                             const RunOptions& options) {
  BoundaryRecord b;
  b.block = block;
  b.time = system.time;
  b.truncated = truncated;
  b.threshold = threshold;
  b.criterion = criterion;
  b.ess = ess;
  b.mean_weight = block == 0 ? 1.0 : raw_mean_weight(system);
  b.pre_hist = state_histogram(system.states, model.num_states);
  if (options.record_snapshots) {
    b.pre_states = system.states;
    b.pre_log_weights = system.block_log_weights;
  }
  return b;
}

RunRecord run_core(const FiniteModel& model, const CriterionSpec& spec, int n,
                   std::uint64_t seed, std::uint64_t replicate, const RunOptions& options) {
  validate_spec(spec, model.horizon);
  const KeyedRng rng(seed, replicate);

  ParticleSystem system = init_particles(model, n, rng);
  system.record_ancestry = options.record_ancestry;

  RunRecord record;
  record.n_particles = n;

  BoundaryRecord first = make_boundary(system, model, 0, false, kNaN, kNaN, kNaN, options);
  first.post_hist = first.pre_hist;
  record.boundaries.push_back(std::move(first));
  if (options.record_estimates) {
    record.weighted_estimates.push_back(state_histogram(system.states, model.num_states));
    record.criterion_trace.push_back(kNaN);
  }

  double threshold = kNaN;
  std::size_t next_fixed = 1;  // index into spec.schedule

  while (system.time < model.horizon) {
    if (!spec.fixed && system.time == system.block_start) {
      // drawn once per block, before its scan begins
      threshold = block_threshold(spec, system.block_index, rng);
      record.thresholds_used.push_back(threshold);
    }
    mutate(system, model, rng);
    const CriterionValue crit = criterion_value(system, spec.kind);
    if (options.record_estimates) {
      record.weighted_estimates.push_back(
          weighted_histogram(system.states, system.block_log_weights, model.num_states));
      record.criterion_trace.push_back(crit.value);
    }

    bool trigger;
    if (spec.fixed)
      trigger = next_fixed < spec.schedule.size() &&
                system.time == spec.schedule[next_fixed];
    else
      trigger = crit.value >= threshold;

    if (trigger) {
      const int block = system.block_index + 1;
      BoundaryRecord boundary =
          make_boundary(system, model, block, false, threshold, crit.value, crit.ess, options);
      record.log_gamma += std::log(boundary.mean_weight);
      if (spec.resampler == ResamplerKind::select)
        resample_selection_kernel(system, rng);
      else
        resample_multinomial(system, rng);
      boundary.post_hist = state_histogram(system.states, model.num_states);
      record.boundaries.push_back(std::move(boundary));
      if (spec.fixed) ++next_fixed;
    }
  }

  if (system.block_start < model.horizon) {
    // open block at the horizon: close it without resampling
    const CriterionValue crit = criterion_value(system, spec.kind);
    record.final_truncated = true;
    record.boundaries.push_back(make_boundary(system, model, system.block_index + 1, true,
                                              spec.fixed ? kNaN : threshold, crit.value, crit.ess,
                                              options));
  }

  record.resampling_times = system.resampling_times;
  record.final_states = std::move(system.states);
  return record;
}

}  // namespace

RunRecord run_adaptive(const FiniteModel& model, const CriterionSpec& spec, int n,
                       std::uint64_t seed, std::uint64_t replicate, const RunOptions& options) {
  return run_core(model, spec, n, seed, replicate, options);
}

RunRecord run_reference(const FiniteModel& model, const std::vector<int>& times, int n,
                        std::uint64_t seed, std::uint64_t replicate, const RunOptions& options,
                        ResamplerKind resampler) {
  return run_core(model, CriterionSpec::fixed_times(times, resampler), n, seed, replicate,
                  options);
}

namespace {

bool bitwise_equal(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool both_nan = std::isnan(a[i]) && std::isnan(b[i]);
    if (!both_nan && a[i] != b[i]) return false;
  }
  return true;
}

bool same_boundary(const BoundaryRecord& x, const BoundaryRecord& y) {
  if (x.block != y.block || x.time != y.time || x.truncated != y.truncated) return false;
  if (x.mean_weight != y.mean_weight) return false;
  if (!bitwise_equal(x.pre_hist, y.pre_hist) || !bitwise_equal(x.post_hist, y.post_hist))
    return false;
  if (x.pre_states != y.pre_states) return false;
  return bitwise_equal(x.pre_log_weights, y.pre_log_weights);
}

}  // namespace

bool same_trajectory(const RunRecord& a, const RunRecord& b) {
  if (a.n_particles != b.n_particles) return false;
  if (a.resampling_times != b.resampling_times) return false;
  if (a.final_truncated != b.final_truncated) return false;
  if (a.log_gamma != b.log_gamma) return false;
  if (a.final_states != b.final_states) return false;
  if (a.boundaries.size() != b.boundaries.size()) return false;
  for (std::size_t i = 0; i < a.boundaries.size(); ++i)
    if (!same_boundary(a.boundaries[i], b.boundaries[i])) return false;
  if (a.weighted_estimates.size() != b.weighted_estimates.size()) return false;
  for (std::size_t i = 0; i < a.weighted_estimates.size(); ++i)
    if (!bitwise_equal(a.weighted_estimates[i], b.weighted_estimates[i])) return false;
  if (!bitwise_equal(a.criterion_trace, b.criterion_trace)) return false;
  return true;
}

bool same_trajectory_through(const RunRecord& a, const RunRecord& b, int blocks) {
  if (a.n_particles != b.n_particles) return false;
  const std::size_t count = static_cast<std::size_t>(blocks) + 1;
  if (a.boundaries.size() < count || b.boundaries.size() < count) return false;
  if (a.resampling_times.size() < count || b.resampling_times.size() < count) return false;
  for (std::size_t i = 0; i < count; ++i) {
    if (a.resampling_times[i] != b.resampling_times[i]) return false;
    if (!same_boundary(a.boundaries[i], b.boundaries[i])) return false;
  }
  const std::size_t horizon = static_cast<std::size_t>(a.boundaries[count - 1].time);
  if (!a.weighted_estimates.empty() && !b.weighted_estimates.empty()) {
    if (a.weighted_estimates.size() <= horizon || b.weighted_estimates.size() <= horizon)
      return false;
    for (std::size_t s = 0; s <= horizon; ++s) {
      if (!bitwise_equal(a.weighted_estimates[s], b.weighted_estimates[s])) return false;
      const bool both_nan = std::isnan(a.criterion_trace[s]) && std::isnan(b.criterion_trace[s]);
      if (!both_nan && a.criterion_trace[s] != b.criterion_trace[s]) return false;
    }
  }
  return true;
}

double boundary_estimate(const RunRecord& record, int n, const Vector& f) {
  const BoundaryRecord& b = record.boundaries.at(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) acc += b.pre_hist[x] * f[x];
  return acc;
}

double conditional_boundary_mean(const FiniteModel& model, const RunRecord& record,
                                 const std::vector<int>& times, int n, const Vector& f,
                                 ResamplerKind resampler) {
  const BoundaryRecord& prev = record.boundaries.at(static_cast<std::size_t>(n) - 1);
  if (prev.pre_states.empty()) throw Error("conditional mean needs recorded snapshots");

  // push f back through block n without weighting
  Vector h = f;
  for (int s = times.at(static_cast<std::size_t>(n)); s > times.at(static_cast<std::size_t>(n) - 1);
       --s) {
    const Matrix& m = model.kernel_into(s);
    Vector next(h.size(), 0.0);
    for (std::size_t x = 0; x < h.size(); ++x)
      for (std::size_t y = 0; y < h.size(); ++y) next[x] += m[x][y] * h[y];
    h = std::move(next);
  }

  const std::size_t count = prev.pre_states.size();
  double bg = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double w = std::exp(prev.pre_log_weights[i]);
    bg += w * h[static_cast<std::size_t>(prev.pre_states[i])];
    mass += w;
  }
  bg /= mass;

  if (resampler == ResamplerKind::multinomial) return bg;

  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double w = std::exp(prev.pre_log_weights[i]);
    acc += w * h[static_cast<std::size_t>(prev.pre_states[i])] + (1.0 - w) * bg;
  }
  return acc / static_cast<double>(count);
}

}  // namespace asmc
