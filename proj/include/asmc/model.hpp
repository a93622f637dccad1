#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace asmc {

using Vector = std::vector<double>;
using Matrix = std::vector<std::vector<double>>;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class RowNotStochastic : public Error {
 public:
  RowNotStochastic(int time, int row);
  int time;
  int row;
};

class PotentialOutOfRange : public Error {
 public:
  PotentialOutOfRange(int time, int state);
  int time;
  int state;
};

class InitialNotNormalized : public Error {
 public:
  InitialNotNormalized();
};

class StateOutOfRange : public Error {
 public:
  explicit StateOutOfRange(int state);
  int state;
};

class LengthMismatch : public Error {
 public:
  LengthMismatch(std::size_t expected, std::size_t got);
};

/// Time-inhomogeneous finite-state model: a Markov chain on {0,..,K-1}
/// observed over base times 0..T, plus one potential vector per step.
///
/// Indexing convention: kernels[k] moves time k to time k+1 and
/// potentials[k] is evaluated at time k+1, so a step weight never
/// involves the state the step departs from.
struct FiniteModel {
  int num_states = 0;  // K
  int horizon = 0;     // T
  Vector initial;                   // length K
  std::vector<Matrix> kernels;      // T row-stochastic KxK matrices
  std::vector<Vector> potentials;   // T vectors with entries in (0,1)

  // max/min ratio of each potential vector, filled in by validate()
  Vector ratio_bounds;

  /// Kernel into time t (t in [1, T]).
  const Matrix& kernel_into(int t) const { return kernels[static_cast<std::size_t>(t) - 1]; }
  /// Potential evaluated at time t (t in [1, T]).
  const Vector& potential_at(int t) const { return potentials[static_cast<std::size_t>(t) - 1]; }
};

/// Tolerance for stochasticity / normalization checks.
inline constexpr double kStochasticTol = 1e-12;

/// Checks every invariant and caches the per-step potential ratio bounds.
/// Throws RowNotStochastic / PotentialOutOfRange / InitialNotNormalized
/// naming the offending index.
FiniteModel validate(FiniteModel model);

/// Importance weight over the half-open time window (start, end].
struct PathWeightSpec {
  int start = 0;  // p
  int end = 0;    // q, with p < q <= T
};

/// Sum of log potentials along a path x_{p+1..q}; path[j] is the state
/// at time p+1+j.
double log_path_weight(const FiniteModel& model, const PathWeightSpec& spec,
                       std::span<const int> path);

/// exp(log_path_weight), the product of potentials along the window.
double path_weight(const FiniteModel& model, const PathWeightSpec& spec,
                   std::span<const int> path);

/// Inverse-CDF step from `state` at time `from_time` to time from_time+1,
/// with right-open intervals [c_{i-1}, c_i) so a given draw always maps to
/// the same successor state.
int sample_step(const FiniteModel& model, int from_time, int state, double draw);

/// Loads and validates a model from a JSON document with fields
/// num_states, horizon, initial, kernels, potentials.
FiniteModel load_model(const std::string& path);

/// Parses a model from JSON text (same schema as load_model).
FiniteModel parse_model(const std::string& text);

/// Serializes a model back to its JSON document form.
std::string model_to_json(const FiniteModel& model);

}  // namespace asmc
