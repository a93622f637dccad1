#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "asmc/exact.hpp"
#include "asmc/model.hpp"
#include "asmc/rng.hpp"

namespace asmc {

class HorizonExhausted : public Error {
 public:
  HorizonExhausted() : Error("mutation past the horizon") {}
};

class EmptyBlock : public Error {
 public:
  EmptyBlock() : Error("criterion requested at a block start") {}
};

class AllWeightsUnderflow : public Error {
 public:
  AllWeightsUnderflow() : Error("no particle carries finite weight") {}
};

class WeightNotInUnitInterval : public Error {
 public:
  explicit WeightNotInUnitInterval(double w)
      : Error("block weight outside (0,1): " + std::to_string(w)) {}
};

class InvalidInterval : public Error {
 public:
  InvalidInterval() : Error("threshold interval must satisfy 0 < lower < upper") {}
};

enum class ResamplerKind { select, multinomial };

/// What triggers resampling and at which levels.
struct CriterionSpec {
  CriterionKind kind = CriterionKind::cv2;

  bool fixed = false;
  std::vector<int> schedule;  // fixed boundaries, starting at 0

  // Explicit thresholds a_n per block (last entry reused), or a uniform law
  // sampled once per block from the threshold key.
  std::vector<double> thresholds;
  bool randomized = false;
  double lower = 0.0;
  double upper = 0.0;

  ResamplerKind resampler = ResamplerKind::select;

  static CriterionSpec fixed_times(std::vector<int> times,
                                   ResamplerKind r = ResamplerKind::select) {
    CriterionSpec s;
    s.fixed = true;
    s.schedule = std::move(times);
    s.resampler = r;
    return s;
  }
};

/// The interacting particle state between operations.
struct ParticleSystem {
  std::vector<int> states;
  std::vector<double> block_log_weights;  // log W_{t_n, time} per particle, <= 0
  int time = 0;
  int block_index = 0;
  int block_start = 0;
  std::vector<int> resampling_times{0};
  bool record_ancestry = false;
  std::vector<std::vector<int>> ancestry;  // parent indices per resampling

  int num_particles() const { return static_cast<int>(states.size()); }
};

/// N i.i.d. draws from the initial law, one keyed draw per particle.
ParticleSystem init_particles(const FiniteModel& model, int n, const KeyedRng& rng);

/// Advances every particle one base step and folds the new potential into
/// the block log-weights.
void mutate(ParticleSystem& system, const FiniteModel& model, const KeyedRng& rng);

struct CriterionValue {
  double value = 0.0;  // the criterion of the requested kind
  double cv2 = 0.0;
  double ess = 0.0;    // N / (1 + cv2), whatever the kind
};

/// Empirical criterion of the current block. CV2 uses max-shifted weights;
/// entropy averages the raw log-weights, so the scale of the potentials
/// matters, as it should.
CriterionValue criterion_value(const ParticleSystem& system, CriterionKind kind);

/// N categorical draws from the weighted empirical measure; weights reset.
void resample_multinomial(ParticleSystem& system, const KeyedRng& rng);

/// Keep each particle with probability equal to its block weight, otherwise
/// replace it by a Boltzmann-Gibbs draw from the weighted population.
void resample_selection_kernel(ParticleSystem& system, const KeyedRng& rng);

/// State of the system recorded at a block boundary t_n, before and after
/// the resampling step.
struct BoundaryRecord {
  int block = 0;
  int time = 0;
  bool truncated = false;   // closed at the horizon without a trigger
  double threshold = 0.0;   // level that closed the block (NaN at n = 0)
  double criterion = 0.0;   // criterion value at the trigger (NaN at n = 0)
  double ess = 0.0;
  double mean_weight = 1.0;  // (1/N) sum of block weights at t_n
  Vector pre_hist;           // unweighted state histogram before resampling
  Vector post_hist;          // after resampling (empty when truncated)
  std::vector<int> pre_states;
  Vector pre_log_weights;
};

struct RunRecord {
  int n_particles = 0;
  std::vector<int> resampling_times;  // [0, t_1, ...]; excludes a truncated close
  bool final_truncated = false;
  std::vector<double> thresholds_used;  // adaptive mode only
  double log_gamma = 0.0;               // sum of log mean block weights, complete blocks
  std::vector<BoundaryRecord> boundaries;
  std::vector<Vector> weighted_estimates;  // per time s: weighted state histogram
  std::vector<double> criterion_trace;     // per time s (NaN where undefined)
  std::vector<int> final_states;

  double gamma() const { return std::exp(log_gamma); }
};

struct RunOptions {
  bool record_snapshots = true;
  bool record_estimates = true;
  bool record_ancestry = false;
};

/// The online algorithm: mutate, evaluate the criterion after every step,
/// resample at the first step it reaches the block threshold.
RunRecord run_adaptive(const FiniteModel& model, const CriterionSpec& spec, int n,
                       std::uint64_t seed, std::uint64_t replicate = 0,
                       const RunOptions& options = {});

/// Resampling at prescribed times; identical code path to run_adaptive with
/// a fixed schedule, so equal seeds give bitwise-equal records.
RunRecord run_reference(const FiniteModel& model, const std::vector<int>& times, int n,
                        std::uint64_t seed, std::uint64_t replicate = 0,
                        const RunOptions& options = {},
                        ResamplerKind resampler = ResamplerKind::select);

/// True when the two records describe the same particle trajectory
/// (everything except the threshold echo is compared, bit for bit).
bool same_trajectory(const RunRecord& a, const RunRecord& b);

/// Same comparison restricted to boundaries 0..blocks and the base times up
/// to the blocks-th resampling time; trajectories may differ afterwards.
bool same_trajectory_through(const RunRecord& a, const RunRecord& b, int blocks);

/// Mean of f at boundary n, read from the recorded pre-resampling histogram.
double boundary_estimate(const RunRecord& record, int n, const Vector& f);

/// Conditional expectation of the boundary-n estimate given the recorded
/// configuration at boundary n-1, under the engine's actual transition
/// (selection via the stored block weights, then the unweighted block
/// kernels). Exact, no sampling.
double conditional_boundary_mean(const FiniteModel& model, const RunRecord& record,
                                 const std::vector<int>& times, int n, const Vector& f,
                                 ResamplerKind resampler);

}  // namespace asmc
