#include "asmc/stats.hpp"

#include <algorithm>
#include <cmath>

#include "asmc/coupling.hpp"
#include "asmc/parallel.hpp"

namespace asmc {

namespace {

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

constexpr double kZ99 = 2.3263478740408408;  // one-sided 99%

double mean_of(const Vector& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double sd_of(const Vector& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

double khinchine_b(int m) {
  if (m < 1) throw Error("khinchine order must be >= 1");
  if (m % 2 == 0) {
    const int half = m / 2;
    const double log_b_pow = log_factorial(m) - log_factorial(half) -
                             static_cast<double>(half) * std::log(2.0);
    return std::exp(log_b_pow / static_cast<double>(m));
  }
  const int half = (m - 1) / 2;  // m = 2*half + 1
  const double log_b_pow = log_factorial(m) - log_factorial(half) -
                           0.5 * std::log(static_cast<double>(half) + 0.5) -
                           (static_cast<double>(half) + 0.5) * std::log(2.0);
  return std::exp(log_b_pow / static_cast<double>(m));
}

double bound_main(double eps, double n, double sigma1) {
  return 6.0 * std::exp(-n * eps * eps / (8.0 * sigma1));
}

double alpha_factor(double eps, double sigma_sq, double sigma1) {
  const double x = 6.0 * sigma1 * eps / sigma_sq;
  if (x < 1e-8) return 1.0 - x / 4.0;  // series of (sqrt(1+x)-1)/(x/2)
  return (sigma_sq / (3.0 * sigma1 * eps)) * (std::sqrt(1.0 + x) - 1.0);
}

double bound_improved(double eps, double n, double sigma_sq, double sigma1) {
  const double a = alpha_factor(eps, sigma_sq, sigma1);
  return 6.0 * std::exp(-n * eps * eps * a * a / (2.0 * sigma_sq));
}

double bound_fk743(double eps, double n, double sigma_tilde_sq) {
  return (1.0 + eps * std::sqrt(n)) * std::exp(-n * eps * eps / (2.0 * sigma_tilde_sq));
}

double uniform_quantile(double rho, double n, double delta, double r_bar, double r_under,
                        int m) {
  if (!(rho > 0.0 && rho < 1.0)) throw Error("rho must lie in (0,1)");
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("delta must lie in (0,1]");
  return (4.0 * r_bar / (delta * delta)) *
         std::sqrt(2.0 * static_cast<double>(m) * r_under * r_bar * std::log(6.0 / rho) /
                   (n * delta));
}

double osc(const Vector& f) {
  double lo = f[0], hi = f[0];
  for (double v : f) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

namespace {

double exact_mean(const Vector& marginal, const Vector& f) {
  double acc = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) acc += marginal[x] * f[x];
  return acc;
}

std::vector<int> reference_times(const BlockSchedule& schedule) {
  return {schedule.times.begin(),
          schedule.times.begin() + schedule.num_complete_blocks() + 1};
}

void require_osc1(const Vector& f) {
  if (osc(f) > 1.0 + 1e-12) throw Error("test function must have oscillation <= 1");
}

// Errors eta_n^N(f) - eta_n(f) over independent replicates.
Vector replicate_errors(const FiniteModel& model, const std::vector<int>& times, const Vector& f,
                        int block, int n_particles, int replicates, std::uint64_t seed,
                        ResamplerKind resampler, double exact_value) {
  RunOptions light;
  light.record_snapshots = false;
  light.record_estimates = false;
  Vector errors(static_cast<std::size_t>(replicates), 0.0);
  parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t r) {
    const RunRecord record = run_reference(model, times, n_particles, seed,
                                           static_cast<std::uint64_t>(r), light, resampler);
    errors[r] = boundary_estimate(record, block, f) - exact_value;
  });
  return errors;
}

}  // namespace

TailReport tail_experiment(const FiniteModel& model, const BlockSchedule& schedule,
                           const Vector& f, int block, const Vector& eps_grid, int n_particles,
                           int replicates, std::uint64_t seed, ResamplerKind resampler) {
  require_osc1(f);
  const ConstantsReport consts = constants(model, schedule);
  if (block > consts.num_blocks) throw Error("block index beyond the schedule");

  TailReport report;
  report.block = block;
  report.n_particles = n_particles;
  report.replicates = replicates;
  report.sigma1 = consts.sigma1[static_cast<std::size_t>(block)];
  report.exact_value = exact_mean(block_prediction_marginal(model, schedule, block), f);
  report.eps_grid = eps_grid;

  const Vector errors =
      replicate_errors(model, reference_times(schedule), f, block, n_particles, replicates, seed,
                       resampler, report.exact_value);

  for (double eps : eps_grid) {
    int count = 0;
    for (double e : errors)
      if (std::abs(e) >= eps) ++count;
    report.exceed_counts.push_back(count);
    report.frequencies.push_back(static_cast<double>(count) / replicates);
    report.wilson_upper.push_back(wilson_interval(count, replicates, kZ99).second);
    report.bounds.push_back(std::min(1.0, bound_main(eps, n_particles, report.sigma1)));
  }
  report.pass = tail_verdict(report);
  return report;
}

bool tail_verdict(const TailReport& report) {
  for (std::size_t i = 0; i < report.eps_grid.size(); ++i) {
    if (report.exceed_counts[i] == 0) continue;  // nothing observed, nothing violated
    if (report.wilson_upper[i] > report.bounds[i]) return false;
  }
  return true;
}

BiasReport bias_and_lm_experiment(const FiniteModel& model, const BlockSchedule& schedule,
                                  const Vector& f, int block, int n_particles, int replicates,
                                  const std::vector<int>& orders, std::uint64_t seed,
                                  ResamplerKind resampler) {
  require_osc1(f);
  const ConstantsReport consts = constants(model, schedule);
  if (block > consts.num_blocks) throw Error("block index beyond the schedule");

  BiasReport report;
  report.block = block;
  report.n_particles = n_particles;
  report.replicates = replicates;
  report.sigma1 = consts.sigma1[static_cast<std::size_t>(block)];
  report.sigma2 = consts.sigma2[static_cast<std::size_t>(block)];
  report.exact_value = exact_mean(block_prediction_marginal(model, schedule, block), f);

  const Vector errors =
      replicate_errors(model, reference_times(schedule), f, block, n_particles, replicates, seed,
                       resampler, report.exact_value);

  report.bias = mean_of(errors);
  report.se_bias = sd_of(errors, report.bias) / std::sqrt(static_cast<double>(replicates));
  const double n = static_cast<double>(n_particles);
  report.bias_pass = n * std::abs(report.bias) <= report.sigma1 + 3.0 * n * report.se_bias;

  report.pass = report.bias_pass;
  for (int m : orders) {
    Vector powers(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i)
      powers[i] = std::pow(std::abs(errors[i]), static_cast<double>(m));
    const double mean_pow = mean_of(powers);
    const double se_pow = sd_of(powers, mean_pow) / std::sqrt(static_cast<double>(replicates));
    const double lm = std::pow(mean_pow, 1.0 / m);
    // delta method for the root
    const double se_lm =
        mean_pow > 0.0 ? se_pow * lm / (static_cast<double>(m) * mean_pow) : 0.0;

    LmPoint point;
    point.order = m;
    point.value = std::sqrt(n) * lm;
    point.se = std::sqrt(n) * se_lm;
    point.bound = khinchine_b(2 * m) * khinchine_b(2 * m) * report.sigma1 / std::sqrt(n) +
                  khinchine_b(m) * report.sigma2;
    point.pass = point.value <= point.bound + 3.0 * point.se;
    report.pass = report.pass && point.pass;
    report.lm.push_back(point);
  }
  return report;
}

LocalFieldReport local_field_experiment(const FiniteModel& model, const BlockSchedule& schedule,
                                        const Vector& f, int block, int n_particles,
                                        int replicates, const std::vector<int>& orders,
                                        std::uint64_t seed, ResamplerKind resampler) {
  const std::vector<int> times = reference_times(schedule);
  if (block >= static_cast<int>(times.size())) throw Error("block index beyond the schedule");

  LocalFieldReport report;
  report.block = block;
  report.n_particles = n_particles;
  report.replicates = replicates;

  const double exact_init = exact_mean(model.initial, f);
  const double root_n = std::sqrt(static_cast<double>(n_particles));

  Vector fields(static_cast<std::size_t>(replicates), 0.0);
  parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t r) {
    RunOptions options;
    options.record_estimates = false;
    const RunRecord record = run_reference(model, times, n_particles, seed,
                                           static_cast<std::uint64_t>(r), options, resampler);
    const double estimate = boundary_estimate(record, block, f);
    const double predicted =
        block == 0 ? exact_init
                   : conditional_boundary_mean(model, record, times, block, f, resampler);
    fields[r] = root_n * (estimate - predicted);
  });

  report.mean = mean_of(fields);
  report.se_mean = sd_of(fields, report.mean) / std::sqrt(static_cast<double>(replicates));
  report.mean_pass = std::abs(report.mean) <= 3.0 * report.se_mean;

  Vector squares(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i)
    squares[i] = (fields[i] - report.mean) * (fields[i] - report.mean);
  report.variance = mean_of(squares);
  report.se_variance =
      sd_of(squares, report.variance) / std::sqrt(static_cast<double>(replicates));
  report.exact_variance = local_field_variance(model, schedule, f, block);
  report.variance_pass =
      std::abs(report.variance - report.exact_variance) <= 3.0 * report.se_variance;

  report.pass = report.mean_pass && report.variance_pass;
  const double oscillation = osc(f);
  for (int m : orders) {
    Vector powers(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i)
      powers[i] = std::pow(std::abs(fields[i]), static_cast<double>(m));
    const double mean_pow = mean_of(powers);
    const double se_pow = sd_of(powers, mean_pow) / std::sqrt(static_cast<double>(replicates));
    const double lm = std::pow(mean_pow, 1.0 / m);
    const double se_lm =
        mean_pow > 0.0 ? se_pow * lm / (static_cast<double>(m) * mean_pow) : 0.0;

    LmPoint point;
    point.order = m;
    point.value = lm;
    point.se = se_lm;
    point.bound = khinchine_b(m) * oscillation;
    point.pass = point.value <= point.bound + 3.0 * point.se;
    report.pass = report.pass && point.pass;
    report.lm.push_back(point);
  }
  return report;
}

CltReport clt_experiment(const FiniteModel& model, const BlockSchedule& schedule, const Vector& f,
                         int block, int n_particles, int replicates, std::uint64_t seed,
                         ResamplerKind resampler, std::uint64_t enum_cap) {
  CltReport report;
  report.block = block;
  report.n_particles = n_particles;
  report.replicates = replicates;
  report.exact_variance = clt_variance(model, schedule, f, block, enum_cap);

  const double exact_value = exact_mean(block_prediction_marginal(model, schedule, block), f);
  const Vector errors = replicate_errors(model, reference_times(schedule), f, block, n_particles,
                                         replicates, seed, resampler, exact_value);

  const double root_n = std::sqrt(static_cast<double>(n_particles));
  Vector fields(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) fields[i] = root_n * errors[i];

  const double mean = mean_of(fields);
  Vector centered(fields.size());
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const double d = fields[i] - mean;
    centered[i] = d * d;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double r = static_cast<double>(replicates);
  m2 /= r;
  m3 /= r;
  m4 /= r;

  report.empirical_variance = m2 * r / (r - 1.0);
  const double mean_sq = mean_of(centered);
  report.se_variance = sd_of(centered, mean_sq) / std::sqrt(r);
  report.ratio = report.empirical_variance / report.exact_variance;
  report.skewness = m3 / std::pow(m2, 1.5);
  report.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  report.pass = report.ratio >= report.ratio_lo && report.ratio <= report.ratio_hi &&
                std::abs(report.skewness) < report.skew_max &&
                std::abs(report.excess_kurtosis) < report.kurtosis_max;
  return report;
}

BoundComparison compare_bounds(const Vector& eps_grid, const std::vector<int>& n_grid,
                               double sigma_sq, double sigma1, double sigma_tilde_sq) {
  BoundComparison table;
  table.eps_grid = eps_grid;
  table.n_grid = n_grid;
  for (double eps : eps_grid) {
    std::vector<double> imp, ref;
    for (int n : n_grid) {
      imp.push_back(bound_improved(eps, n, sigma_sq, sigma1));
      ref.push_back(bound_fk743(eps, n, sigma_tilde_sq));
    }
    table.improved.push_back(std::move(imp));
    table.reference.push_back(std::move(ref));
  }
  return table;
}

}  // namespace asmc
