#include "asmc/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace asmc {

namespace {

std::string fmt(const char* head, long a, long b) {
  std::ostringstream os;
  os << head << " (time " << a << ", index " << b << ")";
  return os.str();
}

}  // namespace

RowNotStochastic::RowNotStochastic(int time_, int row_)
    : Error(fmt("kernel row does not sum to 1 or has negative entries", time_, row_)),
      time(time_),
      row(row_) {}

PotentialOutOfRange::PotentialOutOfRange(int time_, int state_)
    : Error(fmt("potential outside the open interval (0,1)", time_, state_)),
      time(time_),
      state(state_) {}

InitialNotNormalized::InitialNotNormalized()
    : Error("initial distribution does not sum to 1 or has negative entries") {}

StateOutOfRange::StateOutOfRange(int state_)
    : Error("state index out of range: " + std::to_string(state_)), state(state_) {}

LengthMismatch::LengthMismatch(std::size_t expected, std::size_t got)
    : Error("path length mismatch: expected " + std::to_string(expected) + ", got " +
            std::to_string(got)) {}

FiniteModel validate(FiniteModel model) {
  const int k = model.num_states;
  const int t = model.horizon;
  if (k < 1) throw Error("num_states must be positive");
  if (t < 1) throw Error("horizon must be positive");
  if (model.initial.size() != static_cast<std::size_t>(k)) throw InitialNotNormalized();
  if (model.kernels.size() != static_cast<std::size_t>(t))
    throw Error("expected one kernel per step");
  if (model.potentials.size() != static_cast<std::size_t>(t))
    throw Error("expected one potential per step");

  double total = 0.0;
  for (double p : model.initial) {
    if (p < 0.0) throw InitialNotNormalized();
    total += p;
  }
  if (std::abs(total - 1.0) > kStochasticTol) throw InitialNotNormalized();

  for (int step = 0; step < t; ++step) {
    const Matrix& m = model.kernels[static_cast<std::size_t>(step)];
    if (m.size() != static_cast<std::size_t>(k)) throw RowNotStochastic(step + 1, -1);
    for (int x = 0; x < k; ++x) {
      const Vector& row = m[static_cast<std::size_t>(x)];
      if (row.size() != static_cast<std::size_t>(k)) throw RowNotStochastic(step + 1, x);
      double sum = 0.0;
      for (double v : row) {
        if (v < 0.0) throw RowNotStochastic(step + 1, x);
        sum += v;
      }
      if (std::abs(sum - 1.0) > kStochasticTol) throw RowNotStochastic(step + 1, x);
    }
    const Vector& g = model.potentials[static_cast<std::size_t>(step)];
    if (g.size() != static_cast<std::size_t>(k)) throw PotentialOutOfRange(step + 1, -1);
    for (int x = 0; x < k; ++x) {
      const double v = g[static_cast<std::size_t>(x)];
      if (!(v > 0.0 && v < 1.0)) throw PotentialOutOfRange(step + 1, x);
    }
  }

  model.ratio_bounds.assign(static_cast<std::size_t>(t), 1.0);
  for (int step = 0; step < t; ++step) {
    const Vector& g = model.potentials[static_cast<std::size_t>(step)];
    double lo = g[0], hi = g[0];
    for (double v : g) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    model.ratio_bounds[static_cast<std::size_t>(step)] = hi / lo;
  }
  return model;
}

double log_path_weight(const FiniteModel& model, const PathWeightSpec& spec,
                       std::span<const int> path) {
  if (spec.start < 0 || spec.end <= spec.start || spec.end > model.horizon)
    throw Error("invalid path weight window");
  const std::size_t expected = static_cast<std::size_t>(spec.end - spec.start);
  if (path.size() != expected) throw LengthMismatch(expected, path.size());
  double acc = 0.0;
  for (int t = spec.start + 1; t <= spec.end; ++t) {
    const int x = path[static_cast<std::size_t>(t - spec.start - 1)];
    if (x < 0 || x >= model.num_states) throw StateOutOfRange(x);
    acc += std::log(model.potential_at(t)[static_cast<std::size_t>(x)]);
  }
  return acc;
}

double path_weight(const FiniteModel& model, const PathWeightSpec& spec,
                   std::span<const int> path) {
  return std::exp(log_path_weight(model, spec, path));
}

int sample_step(const FiniteModel& model, int from_time, int state, double draw) {
  if (from_time < 0 || from_time >= model.horizon) throw Error("step time out of range");
  if (state < 0 || state >= model.num_states) throw StateOutOfRange(state);
  const Vector& row = model.kernels[static_cast<std::size_t>(from_time)][static_cast<std::size_t>(state)];
  double c = 0.0;
  for (int y = 0; y < model.num_states; ++y) {
    c += row[static_cast<std::size_t>(y)];
    if (draw < c) return y;
  }
  // Rounding can leave the final cumulative sum a hair below the draw;
  // fall back to the last state carrying mass.
  for (int y = model.num_states - 1; y >= 0; --y)
    if (row[static_cast<std::size_t>(y)] > 0.0) return y;
  return model.num_states - 1;
}

namespace {

using nlohmann::json;

Vector as_vector(const json& j) { return j.get<Vector>(); }

Matrix as_matrix(const json& j) { return j.get<Matrix>(); }

}  // namespace

FiniteModel parse_model(const std::string& text) {
  json j = json::parse(text);
  FiniteModel m;
  m.num_states = j.at("num_states").get<int>();
  m.horizon = j.at("horizon").get<int>();
  m.initial = as_vector(j.at("initial"));
  for (const auto& k : j.at("kernels")) m.kernels.push_back(as_matrix(k));
  for (const auto& g : j.at("potentials")) m.potentials.push_back(as_vector(g));
  return validate(std::move(m));
}

FiniteModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

std::string model_to_json(const FiniteModel& model) {
  nlohmann::json j;
  j["num_states"] = model.num_states;
  j["horizon"] = model.horizon;
  j["initial"] = model.initial;
  j["kernels"] = model.kernels;
  j["potentials"] = model.potentials;
  return j.dump(2);
}

}  // namespace asmc
