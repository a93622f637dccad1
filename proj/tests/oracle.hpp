#pragma once

// Brute-force oracles: every quantity here is a plain sum over fully
// enumerated paths of the base chain, independent of the matrix recursions
// under test.

#include <cmath>
#include <functional>
#include <vector>

#include "asmc/exact.hpp"
#include "asmc/model.hpp"

namespace oracle {

using asmc::FiniteModel;
using asmc::Vector;

// Visits every path x_0..x_{t_max} with its chain probability.
inline void for_each_path(const FiniteModel& model, int t_max,
                          const std::function<void(const std::vector<int>&, double)>& visit) {
  std::vector<int> path(static_cast<std::size_t>(t_max) + 1, 0);
  while (true) {
    double prob = model.initial[static_cast<std::size_t>(path[0])];
    for (int s = 1; s <= t_max && prob > 0.0; ++s)
      prob *= model.kernel_into(s)[static_cast<std::size_t>(path[static_cast<std::size_t>(s) - 1])]
                                  [static_cast<std::size_t>(path[static_cast<std::size_t>(s)])];
    if (prob > 0.0) visit(path, prob);

    int pos = t_max;
    while (pos >= 0 && path[static_cast<std::size_t>(pos)] == model.num_states - 1) {
      path[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++path[static_cast<std::size_t>(pos)];
  }
}

inline double weight_through(const FiniteModel& model, const std::vector<int>& path, int from,
                             int to) {
  double w = 1.0;
  for (int s = from + 1; s <= to; ++s)
    w *= model.potential_at(s)[static_cast<std::size_t>(path[static_cast<std::size_t>(s)])];
  return w;
}

// Updated marginal at time s: weight every path by all potentials up to s.
inline Vector updated_marginal(const FiniteModel& model, int s) {
  Vector out(static_cast<std::size_t>(model.num_states), 0.0);
  for_each_path(model, s, [&](const std::vector<int>& path, double prob) {
    out[static_cast<std::size_t>(path[static_cast<std::size_t>(s)])] +=
        prob * weight_through(model, path, 0, s);
  });
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

inline Vector predicted_marginal(const FiniteModel& model, int s) {
  Vector out(static_cast<std::size_t>(model.num_states), 0.0);
  for_each_path(model, s, [&](const std::vector<int>& path, double prob) {
    out[static_cast<std::size_t>(path[static_cast<std::size_t>(s)])] +=
        prob * weight_through(model, path, 0, s - 1);
  });
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

inline double gamma_mass(const FiniteModel& model, int s) {
  double total = 0.0;
  for_each_path(model, s, [&](const std::vector<int>& path, double prob) {
    total += prob * weight_through(model, path, 0, s);
  });
  return total;
}

// Start the chain at time t_from from `start`, run unweighted to s, and take
// plain path-sum moments of the window weight.
inline void window_weight_moments(const FiniteModel& model, int t_from, const Vector& start,
                                  int s, double* mean, double* second, double* mean_log) {
  const int len = s - t_from;
  std::vector<int> path(static_cast<std::size_t>(len) + 1, 0);
  double m1 = 0.0, m2 = 0.0, ml = 0.0;
  while (true) {
    double prob = start[static_cast<std::size_t>(path[0])];
    for (int j = 1; j <= len && prob > 0.0; ++j)
      prob *= model.kernel_into(t_from + j)[static_cast<std::size_t>(path[static_cast<std::size_t>(j) - 1])]
                                           [static_cast<std::size_t>(path[static_cast<std::size_t>(j)])];
    if (prob > 0.0) {
      double w = 1.0;
      for (int j = 1; j <= len; ++j)
        w *= model.potential_at(t_from + j)[static_cast<std::size_t>(path[static_cast<std::size_t>(j)])];
      m1 += prob * w;
      m2 += prob * w * w;
      ml += prob * std::log(w);
    }
    int pos = len;
    while (pos >= 0 && path[static_cast<std::size_t>(pos)] == model.num_states - 1) {
      path[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++path[static_cast<std::size_t>(pos)];
  }
  if (mean) *mean = m1;
  if (second) *second = m2;
  if (mean_log) *mean_log = ml;
}

inline double limiting_cv2(const FiniteModel& model, int t_from, const Vector& start, int s) {
  double m1 = 0.0, m2 = 0.0;
  window_weight_moments(model, t_from, start, s, &m1, &m2, nullptr);
  return m2 / (m1 * m1) - 1.0;
}

inline double limiting_entropy(const FiniteModel& model, int t_from, const Vector& start, int s) {
  double ml = 0.0;
  window_weight_moments(model, t_from, start, s, nullptr, nullptr, &ml);
  return -ml;
}

// Updated marginal at time s for the window started at t_from from `start`.
inline Vector window_updated(const FiniteModel& model, int t_from, const Vector& start, int s) {
  Vector out(static_cast<std::size_t>(model.num_states), 0.0);
  const int len = s - t_from;
  std::vector<int> path(static_cast<std::size_t>(len) + 1, 0);
  while (true) {
    double prob = start[static_cast<std::size_t>(path[0])];
    for (int j = 1; j <= len && prob > 0.0; ++j)
      prob *= model.kernel_into(t_from + j)[static_cast<std::size_t>(path[static_cast<std::size_t>(j) - 1])]
                                           [static_cast<std::size_t>(path[static_cast<std::size_t>(j)])];
    if (prob > 0.0) {
      double w = 1.0;
      for (int j = 1; j <= len; ++j)
        w *= model.potential_at(t_from + j)[static_cast<std::size_t>(path[static_cast<std::size_t>(j)])];
      out[static_cast<std::size_t>(path[static_cast<std::size_t>(len)])] += prob * w;
    }
    int pos = len;
    while (pos >= 0 && path[static_cast<std::size_t>(pos)] == model.num_states - 1) {
      path[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++path[static_cast<std::size_t>(pos)];
  }
  double total = 0.0;
  for (double v : out) total += v;
  for (double& v : out) v /= total;
  return out;
}

struct Schedule {
  std::vector<int> times;
  bool truncated = false;
  std::vector<std::vector<double>> curves;
  std::vector<double> thresholds;
};

// Re-implements the first-hitting construction with the path-sum criteria.
inline Schedule deterministic_times(const FiniteModel& model, asmc::CriterionKind kind,
                                    const std::vector<double>& thresholds) {
  Schedule out;
  out.times.push_back(0);
  Vector current = model.initial;
  int t = 0;
  std::size_t block = 0;
  while (t < model.horizon) {
    const double a = thresholds[std::min(block, thresholds.size() - 1)];
    out.thresholds.push_back(a);
    std::vector<double> curve;
    int hit = -1;
    for (int s = t + 1; s <= model.horizon; ++s) {
      const double v = kind == asmc::CriterionKind::cv2
                           ? oracle::limiting_cv2(model, t, current, s)
                           : oracle::limiting_entropy(model, t, current, s);
      curve.push_back(v);
      if (v >= a) {
        hit = s;
        break;
      }
    }
    const int t_next = hit >= 0 ? hit : model.horizon;
    out.times.push_back(t_next);
    out.curves.push_back(curve);
    current = window_updated(model, t, current, t_next);
    if (hit < 0) {
      out.truncated = true;
      break;
    }
    t = t_next;
    ++block;
  }
  return out;
}

inline double epsilon_from_schedule(const Schedule& s, int m) {
  double eps = std::numeric_limits<double>::infinity();
  for (int n = 0; n <= m; ++n) {
    eps = std::min(eps, s.thresholds[static_cast<std::size_t>(n)]);
    for (double v : s.curves[static_cast<std::size_t>(n)])
      eps = std::min(eps, std::abs(v - s.thresholds[static_cast<std::size_t>(n)]));
  }
  return eps;
}

// Q_{p,n}(x, y) as a raw path sum through blocks p+1..n of the schedule.
inline asmc::Matrix q_pn_path_sum(const FiniteModel& model, const std::vector<int>& times, int p,
                                  int n) {
  const int k = model.num_states;
  const int t_from = times[static_cast<std::size_t>(p)];
  const int t_to = times[static_cast<std::size_t>(n)];
  asmc::Matrix out(static_cast<std::size_t>(k), Vector(static_cast<std::size_t>(k), 0.0));
  const int len = t_to - t_from;
  if (len == 0) {
    for (int x = 0; x < k; ++x) out[static_cast<std::size_t>(x)][static_cast<std::size_t>(x)] = 1.0;
    return out;
  }
  std::vector<int> path(static_cast<std::size_t>(len), 0);
  for (int x = 0; x < k; ++x) {
    std::fill(path.begin(), path.end(), 0);
    while (true) {
      double value = 1.0;
      int prev = x;
      for (int j = 0; j < len && value > 0.0; ++j) {
        const int y = path[static_cast<std::size_t>(j)];
        value *= model.kernel_into(t_from + 1 + j)[static_cast<std::size_t>(prev)][static_cast<std::size_t>(y)] *
                 model.potential_at(t_from + 1 + j)[static_cast<std::size_t>(y)];
        prev = y;
      }
      if (value > 0.0)
        out[static_cast<std::size_t>(x)][static_cast<std::size_t>(path[static_cast<std::size_t>(len) - 1])] += value;

      int pos = len - 1;
      while (pos >= 0 && path[static_cast<std::size_t>(pos)] == model.num_states - 1) {
        path[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
      ++path[static_cast<std::size_t>(pos)];
    }
  }
  return out;
}

}  // namespace oracle
