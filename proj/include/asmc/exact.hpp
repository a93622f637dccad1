#pragma once

#include <cstdint>
#include <vector>

#include "asmc/model.hpp"

namespace asmc {

class DegenerateExpectation : public Error {
 public:
  DegenerateExpectation() : Error("weight expectation underflowed to zero") {}
};

class DegenerateThreshold : public Error {
 public:
  DegenerateThreshold(int block, int time);
  int block;
  int time;
};

class EnumerationCapExceeded : public Error {
 public:
  EnumerationCapExceeded(int block, std::uint64_t required, std::uint64_t cap);
  int block;
  std::uint64_t required;
  std::uint64_t cap;
};

enum class CriterionKind { cv2, entropy };

/// Per-base-time marginals of the weighted flow, by forward matrix
/// recursion on the unnormalized updated vector a_s = (a_{s-1} M_s) .* G_s.
struct MarginalsTable {
  std::vector<Vector> updated;    // updated[s], s = 0..T; updated[0] = initial
  std::vector<Vector> predicted;  // predicted[s], s = 1..T; predicted[0] = initial
  Vector gamma;                   // gamma[s] = total unnormalized updated mass at s
};

MarginalsTable fk_marginals(const FiniteModel& model);

/// Limiting squared coefficient of variation of the window weight
/// W_{block_start, s} under the unweighted prediction law started from
/// `start` at time block_start: E[W^2]/E[W]^2 - 1.
double limiting_cv2(const FiniteModel& model, int block_start, const Vector& start, int s);

/// Limiting entropy criterion -E[log W_{block_start, s}], an additive sum of
/// per-step terms, hence strictly increasing in s.
double limiting_entropy(const FiniteModel& model, int block_start, const Vector& start, int s);

double limiting_criterion(const FiniteModel& model, CriterionKind kind, int block_start,
                          const Vector& start, int s);

/// Criterion values for s = block_start+1 .. s_max (one forward sweep).
std::vector<double> criterion_curve(const FiniteModel& model, CriterionKind kind,
                                    int block_start, const Vector& start, int s_max);

/// Deterministic resampling schedule and everything recorded while
/// computing it. Block n spans (times[n], times[n+1]].
struct BlockSchedule {
  std::vector<int> times;  // t_0 = 0 < t_1 < ... <= T
  bool truncated = false;  // last entry closed at the horizon without a trigger

  // updated_marginals[n]: terminal-coordinate marginal used to start the
  // scan after boundary n (n = 0 is the initial law).
  std::vector<Vector> updated_marginals;

  // criterion_curves[n][j]: criterion value at s = times[n] + 1 + j.
  std::vector<std::vector<double>> criterion_curves;

  // thresholds[n]: the level a_n block n was scanned against.
  std::vector<double> thresholds;

  CriterionKind kind = CriterionKind::cv2;

  /// Number of blocks closed by an actual criterion hit.
  int num_complete_blocks() const {
    const int boundaries = static_cast<int>(times.size()) - 1;
    return truncated ? boundaries - 1 : boundaries;
  }
};

/// Iterates the first-hitting construction: from each boundary, scan the
/// limiting criterion until it reaches the block's threshold (weak
/// inequality). A block that never triggers is closed at the horizon and
/// flagged truncated. thresholds[n] applies to block n; the last entry is
/// reused when more blocks fit than thresholds were given.
BlockSchedule deterministic_times(const FiniteModel& model, CriterionKind kind,
                                  const std::vector<double>& thresholds);

/// A schedule with prescribed boundaries (no criterion scan); used to study
/// fixed-time block decompositions. Curves are left empty.
BlockSchedule fixed_schedule(const FiniteModel& model, const std::vector<int>& times);

/// Weighted and unweighted one-block operators on terminal coordinates.
/// weighted[n-1] = prod_{k=t_{n-1}+1..t_n} M_k diag(G_k) for block n;
/// unweighted[n-1] is the same product without the potentials and
/// squared[n-1] uses squared potentials.
struct BlockOperators {
  std::vector<Matrix> weighted;
  std::vector<Matrix> unweighted;
  std::vector<Matrix> squared;

  /// Semigroup element Q_{p,n} = Q_{p+1} ... Q_n (identity when p == n).
  Matrix q_pn(int p, int n) const;
};

BlockOperators block_operators(const FiniteModel& model, const BlockSchedule& schedule);

/// Ratio bounds, contraction coefficients and the derived series constants
/// for the complete blocks of a schedule, plus the mixing-condition
/// quantities needed by the product bounds.
struct ConstantsReport {
  int num_blocks = 0;  // m: constants cover boundary indices 0..m

  // q_pn[p][n] and beta_pn[p][n] for 0 <= p <= n <= m.
  std::vector<Vector> q_pn;
  std::vector<Vector> beta_pn;

  // Per boundary index n = 0..m.
  Vector sigma1;          // 4 sum_p q^3 beta
  Vector sigma2;          // 2 sum_p q beta
  Vector sigma_sq;        // 4 sum_p q^2 beta^2
  Vector sigma_tilde_sq;  // 4 (sum_p q beta)^2

  // Mixing quantities for the one-block condition: delta[p] is the minimum
  // row ratio of the first base kernel of block p+1 (0 on support
  // mismatch); block_ratio[j] bounds the block-(j+1) weight ratio over
  // admissible within-block paths.
  Vector delta;        // p = 0..m-1
  Vector block_ratio;  // block j+1, j = 0..m-1
  bool mixing_available = false;

  double delta_min = 0.0;  // min_p delta[p]
  double r_bar = 1.0;      // max one-block weight ratio (r_{p,p+1} with r_{0,1} = 1)

  // Product-bound checks (skipped when mixing is unavailable).
  bool ratio_bound_ok = false;        // q_{p,p+n} <= delta_p^{-1} r_{p,p+1}
  bool contraction_bound_ok = false;  // beta(P_{p,p+n}) <= prod (1 - delta^2)
  bool series_bound_ok = false;       // sum q^a beta <= r_bar^a / delta^(2+a)
};

ConstantsReport constants(const FiniteModel& model, const BlockSchedule& schedule);

/// Smallest gap between a recorded criterion curve and its threshold over
/// complete blocks 0..m, with the convention that the criterion vanishes at
/// each block start. Throws DegenerateThreshold on an exact tie, the case
/// randomized thresholds exclude.
double epsilon_m(const BlockSchedule& schedule, int m);

/// Block-model prediction marginal at boundary n on terminal coordinates:
/// the updated marginal at the previous boundary pushed through block n
/// without weighting (n = 0 gives the initial law).
Vector block_prediction_marginal(const FiniteModel& model, const BlockSchedule& schedule, int n);

/// Exact variance of the one-step local field at boundary n applied to a
/// terminal test function, evaluated at the limiting measures. Within-block
/// paths of block n-1 are enumerated (selection keeps a path with
/// probability equal to its realized block weight), subject to `cap`.
double local_field_variance(const FiniteModel& model, const BlockSchedule& schedule,
                            const Vector& f, int n, std::uint64_t cap = 1000000);

/// Asymptotic variance of sqrt(N) [eta_n^N - eta_n](f) for a terminal test
/// function f: the sum over p <= n of the local-field variances of the
/// first-order semigroup transport of f back to boundary p.
double clt_variance(const FiniteModel& model, const BlockSchedule& schedule, const Vector& f,
                    int n, std::uint64_t cap = 1000000);

}  // namespace asmc
