#include "asmc/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace asmc {

namespace {

Vector apply_kernel(const Vector& v, const Matrix& m) {
  const std::size_t k = v.size();
  Vector out(k, 0.0);
  for (std::size_t x = 0; x < k; ++x) {
    const double vx = v[x];
    if (vx == 0.0) continue;
    const Vector& row = m[x];
    for (std::size_t y = 0; y < k; ++y) out[y] += vx * row[y];
  }
  return out;
}

void multiply_pointwise(Vector& v, const Vector& g) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= g[i];
}

double sum(const Vector& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

Vector normalized(Vector v) {
  const double s = sum(v);
  for (double& x : v) x /= s;
  return v;
}

Matrix identity(int k) {
  Matrix m(static_cast<std::size_t>(k), Vector(static_cast<std::size_t>(k), 0.0));
  for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  const std::size_t k = a.size();
  Matrix out(k, Vector(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i][l];
      if (ail == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) out[i][j] += ail * b[l][j];
    }
  return out;
}

Vector matvec(const Matrix& m, const Vector& v) {
  const std::size_t k = m.size();
  Vector out(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i] += m[i][j] * v[j];
  return out;
}

}  // namespace

DegenerateThreshold::DegenerateThreshold(int block_, int time_)
    : Error("criterion equals the threshold exactly at block " + std::to_string(block_) +
            ", time " + std::to_string(time_)),
      block(block_),
      time(time_) {}

EnumerationCapExceeded::EnumerationCapExceeded(int block_, std::uint64_t required_,
                                               std::uint64_t cap_)
    : Error("block " + std::to_string(block_) + " needs " + std::to_string(required_) +
            " paths, cap is " + std::to_string(cap_)),
      block(block_),
      required(required_),
      cap(cap_) {}

MarginalsTable fk_marginals(const FiniteModel& model) {
  MarginalsTable table;
  const int t_max = model.horizon;
  table.updated.reserve(static_cast<std::size_t>(t_max) + 1);
  table.predicted.reserve(static_cast<std::size_t>(t_max) + 1);
  table.gamma.reserve(static_cast<std::size_t>(t_max) + 1);

  Vector a = model.initial;  // unnormalized updated vector
  table.updated.push_back(model.initial);
  table.predicted.push_back(model.initial);
  table.gamma.push_back(1.0);
  for (int s = 1; s <= t_max; ++s) {
    Vector moved = apply_kernel(a, model.kernel_into(s));
    table.predicted.push_back(normalized(moved));
    multiply_pointwise(moved, model.potential_at(s));
    a = std::move(moved);
    const double mass = sum(a);
    table.gamma.push_back(mass);
    Vector upd = a;
    for (double& x : upd) x /= mass;
    table.updated.push_back(std::move(upd));
  }
  return table;
}

namespace {

// One incremental scan state for the limiting criteria: a weighted vector, a
// squared-weighted vector and the plain prediction marginal, all started at
// the block's updated marginal.
struct CriterionScan {
  Vector weighted;
  Vector squared;
  Vector plain;
  double entropy = 0.0;
  int time;

  CriterionScan(const Vector& start, int block_start)
      : weighted(start), squared(start), plain(start), time(block_start) {}

  void advance(const FiniteModel& model) {
    ++time;
    const Matrix& m = model.kernel_into(time);
    const Vector& g = model.potential_at(time);
    weighted = apply_kernel(weighted, m);
    multiply_pointwise(weighted, g);
    squared = apply_kernel(squared, m);
    for (std::size_t y = 0; y < squared.size(); ++y) squared[y] *= g[y] * g[y];
    plain = apply_kernel(plain, m);
    for (std::size_t y = 0; y < plain.size(); ++y) entropy -= plain[y] * std::log(g[y]);
  }

  double value(CriterionKind kind) const {
    if (kind == CriterionKind::entropy) return entropy;
    const double mean = sum(weighted);
    if (mean == 0.0) throw DegenerateExpectation();
    return sum(squared) / (mean * mean) - 1.0;
  }
};

}  // namespace

std::vector<double> criterion_curve(const FiniteModel& model, CriterionKind kind,
                                    int block_start, const Vector& start, int s_max) {
  if (block_start < 0 || s_max <= block_start || s_max > model.horizon)
    throw Error("criterion scan window out of range");
  CriterionScan scan(start, block_start);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(s_max - block_start));
  for (int s = block_start + 1; s <= s_max; ++s) {
    scan.advance(model);
    values.push_back(scan.value(kind));
  }
  return values;
}

double limiting_cv2(const FiniteModel& model, int block_start, const Vector& start, int s) {
  return criterion_curve(model, CriterionKind::cv2, block_start, start, s).back();
}

double limiting_entropy(const FiniteModel& model, int block_start, const Vector& start, int s) {
  return criterion_curve(model, CriterionKind::entropy, block_start, start, s).back();
}

double limiting_criterion(const FiniteModel& model, CriterionKind kind, int block_start,
                          const Vector& start, int s) {
  return criterion_curve(model, kind, block_start, start, s).back();
}

BlockSchedule deterministic_times(const FiniteModel& model, CriterionKind kind,
                                  const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw Error("at least one threshold is required");
  for (double a : thresholds)
    if (!(a > 0.0)) throw Error("thresholds must be positive");

  BlockSchedule schedule;
  schedule.kind = kind;
  schedule.times.push_back(0);
  schedule.updated_marginals.push_back(model.initial);

  Vector current = model.initial;
  int t = 0;
  std::size_t block = 0;
  while (t < model.horizon) {
    const double a =
        thresholds[std::min(block, thresholds.size() - 1)];
    schedule.thresholds.push_back(a);

    CriterionScan scan(current, t);
    std::vector<double> curve;
    int hit = -1;
    for (int s = t + 1; s <= model.horizon; ++s) {
      scan.advance(model);
      curve.push_back(scan.value(kind));
      if (curve.back() >= a) {
        hit = s;
        break;
      }
    }
    const int t_next = hit >= 0 ? hit : model.horizon;
    schedule.times.push_back(t_next);
    schedule.criterion_curves.push_back(std::move(curve));
    current = normalized(scan.weighted);
    schedule.updated_marginals.push_back(current);
    if (hit < 0) {
      schedule.truncated = true;
      break;
    }
    t = t_next;
    ++block;
  }
  return schedule;
}

BlockSchedule fixed_schedule(const FiniteModel& model, const std::vector<int>& times) {
  if (times.empty() || times.front() != 0) throw Error("schedule must start at time 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1] || times[i] > model.horizon)
      throw Error("schedule times must be strictly increasing within the horizon");

  BlockSchedule schedule;
  schedule.times = times;
  schedule.updated_marginals.push_back(model.initial);
  Vector current = model.initial;
  for (std::size_t n = 1; n < times.size(); ++n) {
    CriterionScan scan(current, times[n - 1]);
    for (int s = times[n - 1] + 1; s <= times[n]; ++s) scan.advance(model);
    current = normalized(scan.weighted);
    schedule.updated_marginals.push_back(current);
    schedule.thresholds.push_back(std::numeric_limits<double>::infinity());
    schedule.criterion_curves.emplace_back();
  }
  return schedule;
}

Matrix BlockOperators::q_pn(int p, int n) const {
  Matrix out = identity(static_cast<int>(weighted.empty() ? 1 : weighted.front().size()));
  for (int j = p; j < n; ++j) out = matmul(out, weighted[static_cast<std::size_t>(j)]);
  return out;
}

BlockOperators block_operators(const FiniteModel& model, const BlockSchedule& schedule) {
  BlockOperators ops;
  const int k = model.num_states;
  const int blocks = schedule.num_complete_blocks();
  for (int n = 1; n <= blocks; ++n) {
    Matrix w = identity(k);
    Matrix u = identity(k);
    Matrix sq = identity(k);
    for (int s = schedule.times[static_cast<std::size_t>(n - 1)] + 1;
         s <= schedule.times[static_cast<std::size_t>(n)]; ++s) {
      Matrix step = model.kernel_into(s);
      Matrix plain = step;
      Matrix step2 = step;
      const Vector& g = model.potential_at(s);
      for (int x = 0; x < k; ++x)
        for (int y = 0; y < k; ++y) {
          step[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] *= g[static_cast<std::size_t>(y)];
          step2[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] *=
              g[static_cast<std::size_t>(y)] * g[static_cast<std::size_t>(y)];
        }
      w = matmul(w, step);
      u = matmul(u, plain);
      sq = matmul(sq, step2);
    }
    ops.weighted.push_back(std::move(w));
    ops.unweighted.push_back(std::move(u));
    ops.squared.push_back(std::move(sq));
  }
  return ops;
}

namespace {

double total_variation(const Vector& a, const Vector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return 0.5 * acc;
}

// Dobrushin coefficient of the row-normalized matrix: maximal pairwise
// total-variation distance between rows.
double dobrushin(const Matrix& q) {
  const std::size_t k = q.size();
  std::vector<Vector> rows(k);
  for (std::size_t x = 0; x < k; ++x) rows[x] = normalized(q[x]);
  double beta = 0.0;
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = x + 1; y < k; ++y) beta = std::max(beta, total_variation(rows[x], rows[y]));
  return beta;
}

double row_sum_ratio(const Matrix& q) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const Vector& row : q) {
    const double s = sum(row);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return hi / lo;
}

// Minimum ratio min_{x,y,z} M(x,z)/M(y,z); zero as soon as some row lacks
// mass where another row has it.
double min_row_ratio(const Matrix& m) {
  const std::size_t k = m.size();
  double delta = 1.0;
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t y = 0; y < k; ++y) {
      if (x == y) continue;
      for (std::size_t z = 0; z < k; ++z) {
        if (m[y][z] == 0.0) continue;
        if (m[x][z] == 0.0) return 0.0;
        delta = std::min(delta, m[x][z] / m[y][z]);
      }
    }
  return delta;
}

// Ratio bound of the block weight over within-block paths that are
// admissible under the base kernels, by max/min log-weight dynamic
// programming along the support.
double block_weight_ratio(const FiniteModel& model, int t_from, int t_to) {
  const int k = model.num_states;
  const double inf = std::numeric_limits<double>::infinity();
  Vector max_lw(static_cast<std::size_t>(k), -inf);
  Vector min_lw(static_cast<std::size_t>(k), inf);
  bool first = true;
  for (int s = t_from + 1; s <= t_to; ++s) {
    const Matrix& m = model.kernel_into(s);
    const Vector& g = model.potential_at(s);
    Vector nmax(static_cast<std::size_t>(k), -inf);
    Vector nmin(static_cast<std::size_t>(k), inf);
    for (int y = 0; y < k; ++y) {
      bool reachable = false;
      double best = -inf, worst = inf;
      for (int x = 0; x < k; ++x) {
        if (m[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] == 0.0) continue;
        if (first) {
          reachable = true;
          best = 0.0;
          worst = 0.0;
        } else if (max_lw[static_cast<std::size_t>(x)] != -inf) {
          reachable = true;
          best = std::max(best, max_lw[static_cast<std::size_t>(x)]);
          worst = std::min(worst, min_lw[static_cast<std::size_t>(x)]);
        }
      }
      if (reachable) {
        nmax[static_cast<std::size_t>(y)] = best + std::log(g[static_cast<std::size_t>(y)]);
        nmin[static_cast<std::size_t>(y)] = worst + std::log(g[static_cast<std::size_t>(y)]);
      }
    }
    max_lw = std::move(nmax);
    min_lw = std::move(nmin);
    first = false;
  }
  double hi = -inf, lo = inf;
  for (int y = 0; y < k; ++y) {
    if (max_lw[static_cast<std::size_t>(y)] == -inf) continue;
    hi = std::max(hi, max_lw[static_cast<std::size_t>(y)]);
    lo = std::min(lo, min_lw[static_cast<std::size_t>(y)]);
  }
  return std::exp(hi - lo);
}

}  // namespace

ConstantsReport constants(const FiniteModel& model, const BlockSchedule& schedule) {
  ConstantsReport report;
  const int m = schedule.num_complete_blocks();
  report.num_blocks = m;
  const BlockOperators ops = block_operators(model, schedule);

  report.q_pn.assign(static_cast<std::size_t>(m) + 1, Vector(static_cast<std::size_t>(m) + 1, 0.0));
  report.beta_pn.assign(static_cast<std::size_t>(m) + 1, Vector(static_cast<std::size_t>(m) + 1, 0.0));
  for (int p = 0; p <= m; ++p) {
    Matrix q = identity(model.num_states);
    for (int n = p; n <= m; ++n) {
      if (n > p) q = matmul(q, ops.weighted[static_cast<std::size_t>(n - 1)]);
      report.q_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)] = row_sum_ratio(q);
      report.beta_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)] = dobrushin(q);
    }
  }

  report.sigma1.assign(static_cast<std::size_t>(m) + 1, 0.0);
  report.sigma2.assign(static_cast<std::size_t>(m) + 1, 0.0);
  report.sigma_sq.assign(static_cast<std::size_t>(m) + 1, 0.0);
  report.sigma_tilde_sq.assign(static_cast<std::size_t>(m) + 1, 0.0);
  for (int n = 0; n <= m; ++n) {
    double s1 = 0.0, s2 = 0.0, ssq = 0.0, slin = 0.0;
    for (int p = 0; p <= n; ++p) {
      const double q = report.q_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)];
      const double b = report.beta_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)];
      s1 += q * q * q * b;
      s2 += q * b;
      ssq += q * q * b * b;
      slin += q * b;
    }
    report.sigma1[static_cast<std::size_t>(n)] = 4.0 * s1;
    report.sigma2[static_cast<std::size_t>(n)] = 2.0 * s2;
    report.sigma_sq[static_cast<std::size_t>(n)] = 4.0 * ssq;
    report.sigma_tilde_sq[static_cast<std::size_t>(n)] = 4.0 * slin * slin;
  }

  report.delta.assign(static_cast<std::size_t>(m), 0.0);
  report.block_ratio.assign(report.delta.size(), 1.0);
  report.mixing_available = m > 0;
  for (int p = 0; p + 1 <= m; ++p) {
    // First base kernel of block p+1 carries the one-step mixing.
    const Matrix& first = model.kernel_into(schedule.times[static_cast<std::size_t>(p)] + 1);
    report.delta[static_cast<std::size_t>(p)] = min_row_ratio(first);
    report.block_ratio[static_cast<std::size_t>(p)] = block_weight_ratio(
        model, schedule.times[static_cast<std::size_t>(p)], schedule.times[static_cast<std::size_t>(p) + 1]);
    if (report.delta[static_cast<std::size_t>(p)] == 0.0) report.mixing_available = false;
  }

  if (report.mixing_available) {
    report.delta_min = *std::min_element(report.delta.begin(), report.delta.end());
    report.r_bar = 1.0;  // r_{0,1} is an empty product
    for (int p = 1; p + 1 <= m; ++p)
      report.r_bar = std::max(report.r_bar, report.block_ratio[static_cast<std::size_t>(p - 1)]);

    report.ratio_bound_ok = true;
    report.contraction_bound_ok = true;
    for (int p = 0; p < m; ++p) {
      const double r_prev = p == 0 ? 1.0 : report.block_ratio[static_cast<std::size_t>(p - 1)];
      const double q_cap = r_prev / report.delta[static_cast<std::size_t>(p)];
      for (int n = p + 1; n <= m; ++n) {
        if (report.q_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)] > q_cap * (1.0 + 1e-12))
          report.ratio_bound_ok = false;
        double prod = 1.0;
        for (int j = p; j < n; ++j)
          prod *= 1.0 - report.delta[static_cast<std::size_t>(j)] * report.delta[static_cast<std::size_t>(j)];
        if (report.beta_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)] > prod * (1.0 + 1e-12))
          report.contraction_bound_ok = false;
      }
    }

    report.series_bound_ok = true;
    const double d = report.delta_min;
    for (int alpha = 0; alpha <= 3; ++alpha) {
      const double cap = std::pow(report.r_bar, alpha) / std::pow(d, 2.0 + alpha);
      for (int n = 0; n <= m; ++n) {
        double series = 0.0;
        for (int p = 0; p <= n; ++p)
          series += std::pow(report.q_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)], alpha) *
                    report.beta_pn[static_cast<std::size_t>(p)][static_cast<std::size_t>(n)];
        if (series > cap * (1.0 + 1e-12)) report.series_bound_ok = false;
      }
    }
  }
  return report;
}

double epsilon_m(const BlockSchedule& schedule, int m) {
  const int complete = schedule.num_complete_blocks();
  if (m < 0 || m >= complete)
    throw Error("epsilon_m needs complete blocks 0.." + std::to_string(m));
  double eps = std::numeric_limits<double>::infinity();
  for (int n = 0; n <= m; ++n) {
    const double a = schedule.thresholds[static_cast<std::size_t>(n)];
    eps = std::min(eps, a);  // criterion vanishes at the block start
    for (std::size_t j = 0; j < schedule.criterion_curves[static_cast<std::size_t>(n)].size(); ++j) {
      const double v = schedule.criterion_curves[static_cast<std::size_t>(n)][j];
      if (v == a)
        throw DegenerateThreshold(n, schedule.times[static_cast<std::size_t>(n)] + 1 + static_cast<int>(j));
      eps = std::min(eps, std::abs(v - a));
    }
  }
  return eps;
}

Vector block_prediction_marginal(const FiniteModel& model, const BlockSchedule& schedule, int n) {
  if (n == 0) return model.initial;
  Vector v = schedule.updated_marginals[static_cast<std::size_t>(n - 1)];
  for (int s = schedule.times[static_cast<std::size_t>(n - 1)] + 1;
       s <= schedule.times[static_cast<std::size_t>(n)]; ++s)
    v = apply_kernel(v, model.kernel_into(s));
  return v;
}

namespace {

// A field function on block-p configurations: weight_power = 1 means the
// realized block weight multiplies the terminal value, 0 means the terminal
// value alone.
struct FieldFunction {
  Vector terminal;
  int weight_power = 0;
};

// Enumerated within-block path of block n: probability mass under the
// block-model prediction measure, realized block weight, terminal state.
struct BlockPath {
  double prob;
  double weight;
  int terminal;
};

std::vector<BlockPath> enumerate_block(const FiniteModel& model, const BlockSchedule& schedule,
                                       int n, std::uint64_t cap) {
  const int k = model.num_states;
  if (n == 0) {
    std::vector<BlockPath> paths;
    for (int x = 0; x < k; ++x)
      paths.push_back({model.initial[static_cast<std::size_t>(x)], 1.0, x});
    return paths;
  }
  const int t_from = schedule.times[static_cast<std::size_t>(n - 1)];
  const int t_to = schedule.times[static_cast<std::size_t>(n)];
  const int len = t_to - t_from;
  std::uint64_t required = 1;
  for (int i = 0; i < len; ++i) {
    required *= static_cast<std::uint64_t>(k);
    if (required > cap) throw EnumerationCapExceeded(n, required, cap);
  }

  const Vector& start = schedule.updated_marginals[static_cast<std::size_t>(n - 1)];
  std::vector<BlockPath> paths;
  paths.reserve(required);
  std::vector<int> states(static_cast<std::size_t>(len), 0);
  while (true) {
    // mass of this within-block path, integrating over the start state
    double prob = 0.0;
    for (int x = 0; x < k; ++x) {
      double p = start[static_cast<std::size_t>(x)];
      int prev = x;
      for (int i = 0; i < len && p > 0.0; ++i) {
        p *= model.kernel_into(t_from + 1 + i)[static_cast<std::size_t>(prev)][static_cast<std::size_t>(states[static_cast<std::size_t>(i)])];
        prev = states[static_cast<std::size_t>(i)];
      }
      prob += p;
    }
    double log_w = 0.0;
    for (int i = 0; i < len; ++i)
      log_w += std::log(model.potential_at(t_from + 1 + i)[static_cast<std::size_t>(states[static_cast<std::size_t>(i)])]);
    paths.push_back({prob, std::exp(log_w), states[static_cast<std::size_t>(len - 1)]});

    int pos = len - 1;
    while (pos >= 0 && states[static_cast<std::size_t>(pos)] == k - 1) {
      states[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++states[static_cast<std::size_t>(pos)];
  }
  return paths;
}

// E[g(next block configuration) | terminal state x] for a field function on
// block p, as a vector over x: the within-block weight power selects the
// plain, weighted or squared-weight block operator.
Vector expected_through_block(const BlockOperators& ops, int p, const FieldFunction& g) {
  const Matrix* op = nullptr;
  switch (g.weight_power) {
    case 0: op = &ops.unweighted[static_cast<std::size_t>(p - 1)]; break;
    case 1: op = &ops.weighted[static_cast<std::size_t>(p - 1)]; break;
    case 2: op = &ops.squared[static_cast<std::size_t>(p - 1)]; break;
    default: throw Error("unsupported weight power");
  }
  return matvec(*op, g.terminal);
}

// Variance of the local field at boundary p applied to g, at the limiting
// measures: enumerate the block-(p-1) configurations the selection kernel
// acts on, then push g's conditional moments through block p by matrix
// products.
double field_variance_term(const FiniteModel& model, const BlockSchedule& schedule,
                           const BlockOperators& ops, int p, const FieldFunction& g,
                           std::uint64_t cap) {
  if (p == 0) {
    // initial sampling: plain variance under the initial law
    double mean = 0.0, second = 0.0;
    for (int x = 0; x < model.num_states; ++x) {
      const double v = g.terminal[static_cast<std::size_t>(x)];
      mean += model.initial[static_cast<std::size_t>(x)] * v;
      second += model.initial[static_cast<std::size_t>(x)] * v * v;
    }
    return second - mean * mean;
  }

  FieldFunction g2{g.terminal, g.weight_power * 2};
  for (double& v : g2.terminal) v *= v;
  const Vector ek1 = expected_through_block(ops, p, g);
  const Vector ek2 = expected_through_block(ops, p, g2);

  const std::vector<BlockPath> paths = enumerate_block(model, schedule, p - 1, cap);

  // Boltzmann-Gibbs replacement moments over the block-(p-1) configurations.
  double bg_mass = 0.0, bg1 = 0.0, bg2 = 0.0;
  for (const BlockPath& w : paths) {
    const double c = w.prob * w.weight;
    bg_mass += c;
    bg1 += c * ek1[static_cast<std::size_t>(w.terminal)];
    bg2 += c * ek2[static_cast<std::size_t>(w.terminal)];
  }
  bg1 /= bg_mass;
  bg2 /= bg_mass;

  double var = 0.0;
  for (const BlockPath& w : paths) {
    const double kg = w.weight * ek1[static_cast<std::size_t>(w.terminal)] + (1.0 - w.weight) * bg1;
    const double kg2 = w.weight * ek2[static_cast<std::size_t>(w.terminal)] + (1.0 - w.weight) * bg2;
    var += w.prob * (kg2 - kg * kg);
  }
  return var;
}

}  // namespace

double local_field_variance(const FiniteModel& model, const BlockSchedule& schedule,
                            const Vector& f, int n, std::uint64_t cap) {
  if (n < 0 || n > schedule.num_complete_blocks())
    throw Error("local field boundary out of range");
  const BlockOperators ops = block_operators(model, schedule);
  return field_variance_term(model, schedule, ops, n, FieldFunction{f, 0}, cap);
}

double clt_variance(const FiniteModel& model, const BlockSchedule& schedule, const Vector& f,
                    int n, std::uint64_t cap) {
  if (n < 0 || n > schedule.num_complete_blocks()) throw Error("boundary out of range");
  const BlockOperators ops = block_operators(model, schedule);

  const Vector eta_n = block_prediction_marginal(model, schedule, n);
  double center = 0.0;
  for (int x = 0; x < model.num_states; ++x)
    center += eta_n[static_cast<std::size_t>(x)] * f[static_cast<std::size_t>(x)];
  Vector fbar = f;
  for (double& v : fbar) v -= center;

  double total = 0.0;
  for (int p = 0; p <= n; ++p) {
    FieldFunction g;
    if (p == n) {
      g = FieldFunction{fbar, 0};
    } else {
      // transport fbar back to boundary p: weighted blocks p+1..n-1, then
      // block n unweighted; the realized block-p weight rides along as a
      // factor on the field function.
      Vector d = matvec(ops.unweighted[static_cast<std::size_t>(n - 1)], fbar);
      for (int j = n - 1; j >= p + 1; --j) d = matvec(ops.weighted[static_cast<std::size_t>(j - 1)], d);
      // normalizing mass: expectation of the forward weight sequence
      Vector ones(static_cast<std::size_t>(model.num_states), 1.0);
      Vector mass = matvec(ops.unweighted[static_cast<std::size_t>(n - 1)], ones);
      for (int j = n - 1; j >= p + 1; --j)
        mass = matvec(ops.weighted[static_cast<std::size_t>(j - 1)], mass);
      double denom = 0.0;
      if (p == 0) {
        for (int x = 0; x < model.num_states; ++x)
          denom += model.initial[static_cast<std::size_t>(x)] * mass[static_cast<std::size_t>(x)];
      } else {
        const Vector weighted_mass = matvec(ops.weighted[static_cast<std::size_t>(p - 1)], mass);
        const Vector& prev = schedule.updated_marginals[static_cast<std::size_t>(p - 1)];
        for (int x = 0; x < model.num_states; ++x)
          denom += prev[static_cast<std::size_t>(x)] * weighted_mass[static_cast<std::size_t>(x)];
      }
      for (double& v : d) v /= denom;
      g = FieldFunction{std::move(d), p == 0 ? 0 : 1};
    }
    total += field_variance_term(model, schedule, ops, p, g, cap);
  }
  return total;
}

}  // namespace asmc
