#include <cmath>
#include <cstdlib>
#include <vector>

#include "asmc/engine.hpp"
#include "doctest.h"
#include "models.hpp"
#include "oracle.hpp"
#include "statutil.hpp"

using namespace asmc;

namespace {

ParticleSystem system_with_weights(const std::vector<int>& states,
                                   const std::vector<double>& weights) {
  ParticleSystem s;
  s.states = states;
  for (double w : weights) s.block_log_weights.push_back(std::log(w));
  s.time = 1;
  s.block_start = 0;
  return s;
}

}  // namespace

TEST_CASE("criterion: equal weights give zero cv2 and full ess") {
  const ParticleSystem s = system_with_weights({0, 1, 0, 1}, {0.3, 0.3, 0.3, 0.3});
  const CriterionValue c = criterion_value(s, CriterionKind::cv2);
  CHECK(c.cv2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.ess == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("criterion: direct arithmetic on four weights") {
  const ParticleSystem s = system_with_weights({0, 0, 1, 1}, {0.1, 0.2, 0.3, 0.4});
  const CriterionValue c = criterion_value(s, CriterionKind::cv2);
  CHECK(c.cv2 == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(c.ess == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  const CriterionValue e = criterion_value(s, CriterionKind::entropy);
  const double expect = -(std::log(0.1) + std::log(0.2) + std::log(0.3) + std::log(0.4)) / 4.0;
  CHECK(e.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("criterion: a dominant particle drives ess to one") {
  ParticleSystem s;
  s.states = {0, 1, 1, 0};
  s.block_log_weights = {0.0, -800.0, -800.0, -800.0};
  s.time = 1;
  const CriterionValue c = criterion_value(s, CriterionKind::cv2);
  CHECK(c.cv2 == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(c.ess == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("criterion at a block start is an error") {
  ParticleSystem s;
  s.states = {0};
  s.block_log_weights = {0.0};
  CHECK_THROWS_AS(criterion_value(s, CriterionKind::cv2), EmptyBlock);
}

TEST_CASE("mutate: frozen particle accumulates the potential of its state") {
  const FiniteModel m = fixtures::identity_two_state(5);
  const KeyedRng rng(99, 0);
  ParticleSystem s;
  s.states = {1};
  s.block_log_weights = {0.0};
  for (int step = 0; step < 4; ++step) mutate(s, m, rng);
  CHECK(s.states[0] == 1);
  CHECK(s.block_log_weights[0] == doctest::Approx(4.0 * std::log(0.8)).epsilon(1e-14));
  mutate(s, m, rng);
  CHECK_THROWS_AS(mutate(s, m, rng), HorizonExhausted);
}

TEST_CASE("mutate: empirical next-state law matches the kernel row") {
  const FiniteModel m = fixtures::mixing_three_state(2);
  const KeyedRng rng(1234, 5);
  ParticleSystem s;
  const int n = 100000;
  s.states.assign(n, 1);
  s.block_log_weights.assign(n, 0.0);
  mutate(s, m, rng);
  std::vector<long> counts(3, 0);
  for (int state : s.states) ++counts[static_cast<std::size_t>(state)];
  CHECK(statutil::gof_pvalue(counts, {0.1, 0.8, 0.1}, n) > 0.001);
}

TEST_CASE("multinomial resampling: equal weights draw ancestors uniformly") {
  const KeyedRng rng(7, 0);
  const int n = 100000;
  ParticleSystem s;
  s.states.resize(n);
  for (int i = 0; i < n; ++i) s.states[static_cast<std::size_t>(i)] = i % 2;
  s.block_log_weights.assign(n, std::log(0.4));
  s.time = 1;
  s.record_ancestry = true;
  resample_multinomial(s, rng);
  REQUIRE(s.ancestry.size() == 1);
  // each ancestor is chosen Binomial(n, 1/n) times; 12 is far beyond 5 sigma
  std::vector<int> hits(n, 0);
  for (int parent : s.ancestry[0]) ++hits[static_cast<std::size_t>(parent)];
  long max_hits = 0;
  for (int h : hits) max_hits = std::max<long>(max_hits, h);
  CHECK(max_hits < 12);
  CHECK(s.resampling_times == std::vector<int>{0, 1});
  for (double lw : s.block_log_weights) CHECK(lw == 0.0);
}

TEST_CASE("multinomial resampling: a single heavy particle captures all offspring") {
  const KeyedRng rng(8, 0);
  ParticleSystem s;
  s.states = {2, 0, 1, 0};
  s.block_log_weights = {std::log(1e-280), 0.0, std::log(1e-280), std::log(1e-290)};
  s.time = 3;
  resample_multinomial(s, rng);
  for (int state : s.states) CHECK(state == 0);
}

TEST_CASE("multinomial resampling: support restricted to positive weights") {
  const KeyedRng rng(9, 0);
  const int n = 100000;
  ParticleSystem s;
  s.states.resize(n);
  s.block_log_weights.assign(n, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) s.states[static_cast<std::size_t>(i)] = i < 2 ? i : 3;
  s.block_log_weights[0] = std::log(0.5);
  s.block_log_weights[1] = std::log(0.5);
  s.time = 2;
  resample_multinomial(s, rng);
  long ones = 0;
  for (int state : s.states) {
    CHECK(state <= 1);
    ones += state;
  }
  const double z = (static_cast<double>(ones) - n * 0.5) / std::sqrt(n * 0.25);
  CHECK(statutil::chi_square_pvalue(z * z, 1) > 0.001);
}

TEST_CASE("selection kernel: symmetric weights keep a binomial share") {
  const KeyedRng rng(10, 0);
  const int n = 100000;
  const double w = 0.35;
  ParticleSystem s;
  s.states.resize(n);
  for (int i = 0; i < n; ++i) s.states[static_cast<std::size_t>(i)] = i % 2;
  s.block_log_weights.assign(n, std::log(w));
  s.time = 1;
  s.record_ancestry = true;
  resample_selection_kernel(s, rng);
  long kept = 0;
  for (int i = 0; i < n; ++i)
    if (s.ancestry[0][static_cast<std::size_t>(i)] == i) ++kept;
  // self-ancestry also happens through a replacement draw, adding (1-w)/n
  const double p = w + (1.0 - w) / n;
  const double z = (static_cast<double>(kept) - n * p) / std::sqrt(n * p * (1.0 - p));
  CHECK(statutil::chi_square_pvalue(z * z, 1) > 0.001);
}

TEST_CASE("selection kernel: weights near one leave the system unchanged") {
  const KeyedRng rng(11, 0);
  const int n = 10000;
  ParticleSystem s;
  s.states.resize(n);
  for (int i = 0; i < n; ++i) s.states[static_cast<std::size_t>(i)] = (i * 7) % 3 % 2;
  const std::vector<int> before = s.states;
  s.block_log_weights.assign(n, std::log(1.0 - 1e-12));
  s.time = 1;
  resample_selection_kernel(s, rng);
  CHECK(s.states == before);
}

TEST_CASE("selection kernel: two-particle outcome distribution") {
  // W = (0.2, 0.8): particle 0 stays at its state with probability
  // 0.2 + 0.8*0.2 = 0.36, particle 1 with probability 0.8 + 0.2*0.8 = 0.96
  const int trials = 100000;
  std::vector<long> counts(4, 0);
  for (int trial = 0; trial < trials; ++trial) {
    const KeyedRng rng(321, static_cast<std::uint64_t>(trial));
    ParticleSystem s;
    s.states = {0, 1};
    s.block_log_weights = {std::log(0.2), std::log(0.8)};
    s.time = 1;
    resample_selection_kernel(s, rng);
    ++counts[static_cast<std::size_t>(2 * s.states[0] + s.states[1])];
  }
  const std::vector<double> probs = {0.36 * 0.04, 0.36 * 0.96, 0.64 * 0.04, 0.64 * 0.96};
  CHECK(statutil::gof_pvalue(counts, probs, trials) > 0.001);

  // one-step unbiasedness, exactly, from the enumerated outcome law:
  // E[post mean of f] equals the Boltzmann-Gibbs weighted pre mean
  const double f0 = 0.3, f1 = 0.9;  // arbitrary test values on states 0, 1
  const double post_mean = 0.5 * ((0.36 * f0 + 0.64 * f1) + (0.04 * f0 + 0.96 * f1));
  const double weighted_mean = (0.2 * f0 + 0.8 * f1) / (0.2 + 0.8);
  CHECK(post_mean == doctest::Approx(weighted_mean).epsilon(1e-14));
}

TEST_CASE("multinomial resampling reports total weight underflow") {
  const KeyedRng rng(13, 0);
  ParticleSystem s;
  s.states = {0, 1};
  s.block_log_weights = {-std::numeric_limits<double>::infinity(),
                         -std::numeric_limits<double>::infinity()};
  s.time = 1;
  CHECK_THROWS_AS(resample_multinomial(s, rng), AllWeightsUnderflow);
}

TEST_CASE("selection kernel rejects weights outside the unit interval") {
  const KeyedRng rng(12, 0);
  ParticleSystem s;
  s.states = {0, 1};
  s.block_log_weights = {0.0, std::log(0.5)};  // weight exactly one
  s.time = 1;
  CHECK_THROWS_AS(resample_selection_kernel(s, rng), WeightNotInUnitInterval);
}

TEST_CASE("both resampling schemes are one-step unbiased at five sigma") {
  const int n = 10000;
  const Vector f = {1.0, 0.0};
  for (ResamplerKind kind : {ResamplerKind::select, ResamplerKind::multinomial}) {
    const int trials = 2000;
    std::vector<double> post_means;
    double weighted_mean = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      const KeyedRng rng(555, static_cast<std::uint64_t>(trial));
      ParticleSystem s;
      s.states.resize(n);
      s.block_log_weights.resize(n);
      for (int i = 0; i < n; ++i) {
        s.states[static_cast<std::size_t>(i)] = (i % 3) == 0 ? 0 : 1;
        s.block_log_weights[static_cast<std::size_t>(i)] =
            std::log(0.1 + 0.8 * ((i * 37) % 100) / 100.0);
      }
      if (trial == 0) {
        double num = 0.0, den = 0.0;
        for (int i = 0; i < n; ++i) {
          const double w = std::exp(s.block_log_weights[static_cast<std::size_t>(i)]);
          num += w * f[static_cast<std::size_t>(s.states[static_cast<std::size_t>(i)])];
          den += w;
        }
        weighted_mean = num / den;
      }
      s.time = 1;
      if (kind == ResamplerKind::select)
        resample_selection_kernel(s, rng);
      else
        resample_multinomial(s, rng);
      double acc = 0.0;
      for (int state : s.states) acc += f[static_cast<std::size_t>(state)];
      post_means.push_back(acc / n);
    }
    const double mean = statutil::mean(post_means);
    const double se = statutil::sample_sd(post_means) / std::sqrt(static_cast<double>(trials));
    CHECK(std::abs(mean - weighted_mean) < 5.0 * se);
  }
}

TEST_CASE("run_adaptive: state-independent potentials never trigger cv2") {
  const FiniteModel m = fixtures::flat_potential_two_state(8, 0.6);
  CriterionSpec spec;
  spec.kind = CriterionKind::cv2;
  spec.thresholds = {0.3};
  const RunRecord r = run_adaptive(m, spec, 64, 2024, 0);
  CHECK(r.resampling_times == std::vector<int>{0});
  CHECK(r.final_truncated);
}

TEST_CASE("run_adaptive with a fixed schedule is bitwise run_reference") {
  const FiniteModel m = fixtures::reference_two_state(10);
  const std::vector<int> times = {0, 2, 4, 7};
  CriterionSpec spec = CriterionSpec::fixed_times(times);
  const RunRecord a = run_adaptive(m, spec, 256, 99, 3);
  const RunRecord b = run_reference(m, times, 256, 99, 3);
  CHECK(same_trajectory(a, b));
  const RunRecord c = run_reference(m, times, 256, 100, 3);
  CHECK_FALSE(same_trajectory(a, c));
}

TEST_CASE("run_adaptive: entropy with flat potentials hits the closed-form times") {
  const double g = 0.6;
  const FiniteModel m = fixtures::flat_potential_two_state(8, g);
  CriterionSpec spec;
  spec.kind = CriterionKind::entropy;
  spec.thresholds = {1.8 * (-std::log(g))};
  RunOptions light;
  light.record_snapshots = false;
  light.record_estimates = false;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const RunRecord r = run_adaptive(m, spec, 4096, seed, 0, light);
    CHECK(r.resampling_times == std::vector<int>{0, 2, 4, 6, 8});
  }
}

TEST_CASE("weight reset: max block log weight is exactly zero after resampling") {
  const FiniteModel m = fixtures::reference_two_state(10);
  const KeyedRng rng(5, 0);
  ParticleSystem s = init_particles(m, 128, rng);
  for (int step = 0; step < 3; ++step) mutate(s, m, rng);
  resample_selection_kernel(s, rng);
  double mx = -1e300;
  for (double lw : s.block_log_weights) mx = std::max(mx, lw);
  CHECK(mx == 0.0);
}

TEST_CASE("ess stays within [1, N] along a run") {
  const FiniteModel m = fixtures::reference_two_state(12);
  const KeyedRng rng(77, 0);
  ParticleSystem s = init_particles(m, 512, rng);
  for (int step = 0; step < 12; ++step) {
    mutate(s, m, rng);
    const CriterionValue c = criterion_value(s, CriterionKind::cv2);
    CHECK(c.ess >= 1.0 - 1e-12);
    CHECK(c.ess <= 512.0 + 1e-9);
  }
}

TEST_CASE("reference run: single state makes every estimate exact") {
  const FiniteModel m = fixtures::single_state(5, 0.5);
  const RunRecord r = run_reference(m, {0, 1, 2, 3, 4, 5}, 32, 1, 0);
  CHECK(r.gamma() == doctest::Approx(std::pow(0.5, 5)).epsilon(1e-12));
  for (const auto& est : r.weighted_estimates) CHECK(est[0] == 1.0);
}

TEST_CASE("reference run: estimates converge to the exact marginals") {
  const FiniteModel m = fixtures::reference_two_state(12);
  const BlockSchedule sched = deterministic_times(m, CriterionKind::cv2, {0.3});
  const std::vector<int> times(sched.times.begin(),
                               sched.times.begin() + sched.num_complete_blocks() + 1);
  const Vector f = {0.0, 1.0};
  const int n = 10000;
  RunOptions light;
  light.record_snapshots = false;
  light.record_estimates = false;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const RunRecord r = run_reference(m, times, n, 4000 + seed, 0, light);
    for (int b = 1; b <= sched.num_complete_blocks(); ++b) {
      const Vector marg = block_prediction_marginal(m, sched, b);
      CHECK(std::abs(boundary_estimate(r, b, f) - marg[1]) < 5.0 / std::sqrt(n));
    }
  }
}

TEST_CASE("weighted estimates track the exact updated marginals at every time") {
  const FiniteModel m = fixtures::reference_two_state(12);
  const MarginalsTable table = fk_marginals(m);
  const BlockSchedule sched = deterministic_times(m, CriterionKind::cv2, {0.3});
  const std::vector<int> times(sched.times.begin(),
                               sched.times.begin() + sched.num_complete_blocks() + 1);
  const int n = 20000;
  RunOptions opts;
  opts.record_snapshots = false;
  const RunRecord r = run_reference(m, times, n, 321, 0, opts);
  for (int s = 1; s <= m.horizon; ++s)
    for (int x = 0; x < 2; ++x)
      CHECK(std::abs(r.weighted_estimates[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)] -
                     table.updated[static_cast<std::size_t>(s)][static_cast<std::size_t>(x)]) <
            6.0 / std::sqrt(n));
}

TEST_CASE("reference run: the normalizing-constant estimate is unbiased") {
  const FiniteModel m = fixtures::reference_two_state(8);
  const std::vector<int> times = {0, 2, 4, 6, 8};
  const MarginalsTable table = fk_marginals(m);
  const double exact = table.gamma[8];
  const int replicates = 2000;
  std::vector<double> gammas;
  RunOptions light;
  light.record_snapshots = false;
  light.record_estimates = false;
  for (int r = 0; r < replicates; ++r)
    gammas.push_back(
        run_reference(m, times, 256, 31, static_cast<std::uint64_t>(r), light).gamma());
  const double mean = statutil::mean(gammas);
  const double se = statutil::sample_sd(gammas) / std::sqrt(static_cast<double>(replicates));
  CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("conditional boundary mean is centered on the realized estimates") {
  const FiniteModel m = fixtures::reference_two_state(8);
  const std::vector<int> times = {0, 2, 4};
  const Vector f = {0.0, 1.0};
  const int n = 4096;
  const int replicates = 3000;
  std::vector<double> gaps;
  for (int r = 0; r < replicates; ++r) {
    const RunRecord record = run_reference(m, times, n, 606, static_cast<std::uint64_t>(r));
    const double predicted =
        conditional_boundary_mean(m, record, times, 2, f, ResamplerKind::select);
    gaps.push_back(boundary_estimate(record, 2, f) - predicted);
  }
  const double mean = statutil::mean(gaps);
  const double se = statutil::sample_sd(gaps) / std::sqrt(static_cast<double>(replicates));
  CHECK(std::abs(mean) < 5.0 * se);
}

TEST_CASE("runs are deterministic in the full key") {
  const FiniteModel m = fixtures::reference_two_state(10);
  CriterionSpec spec;
  spec.kind = CriterionKind::cv2;
  spec.thresholds = {0.3};
  const RunRecord a = run_adaptive(m, spec, 128, 42, 9);
  const RunRecord b = run_adaptive(m, spec, 128, 42, 9);
  CHECK(same_trajectory(a, b));
  CHECK(a.thresholds_used == b.thresholds_used);
}

TEST_CASE("randomized thresholds are drawn once per block inside the band") {
  const FiniteModel m = fixtures::reference_two_state(12);
  CriterionSpec spec;
  spec.kind = CriterionKind::entropy;
  spec.randomized = true;
  spec.lower = 0.9;
  spec.upper = 1.3;
  const RunRecord r = run_adaptive(m, spec, 64, 7, 0);
  CHECK(!r.thresholds_used.empty());
  for (double a : r.thresholds_used) {
    CHECK(a > 0.9);
    CHECK(a < 1.3);
  }
  CriterionSpec bad = spec;
  bad.upper = spec.lower;
  CHECK_THROWS_AS(run_adaptive(m, bad, 64, 7, 0), InvalidInterval);
}
