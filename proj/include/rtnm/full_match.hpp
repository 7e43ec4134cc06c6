#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace rtnm {

using Index = Eigen::Index;

// Structure limits on full-matching strata. A stratum is a star: one centre
// (treated or comparison) and k >= 1 leaves of the other kind. Leaf counts
// must lie in [min_ratio, max_ratio] and the stratum (k + 1 entities) must
// not exceed max_stratum_size. With min_ratio > 1 a comparison-per-treated
// ratio of 1/k is below the minimum, so every stratum is 1 treated : k
// comparisons.
struct MatchBounds {
  int min_ratio = 1;
  std::optional<int> max_ratio;         // unset: unbounded
  std::optional<int> max_stratum_size;  // unset: unbounded

  void validate() const;
  // Largest admissible leaf count given `n_entities` in the problem.
  int max_leaves(Index n_entities) const;
};

struct FullMatchProblem {
  Eigen::MatrixXd distance;  // treated rows x comparison columns, finite and >= 0
  MatchBounds bounds;
  // When comparisons outnumber what the upper bound can absorb, leave the
  // surplus unmatched (every treated row then takes the maximum leaf count)
  // instead of failing.
  bool allow_surplus = false;
};

struct MatchedStratum {
  std::vector<Index> treated;      // row indices
  std::vector<Index> comparisons;  // column indices
};

struct Stratification {
  std::vector<MatchedStratum> strata;
  double objective = 0.0;             // sum of treated-comparison distances within strata
  std::int64_t scaled_objective = 0;  // same sum over the integer-scaled costs
  std::vector<Index> unmatched;       // surplus comparison columns, empty unless allowed
};

// Integer cost used by the flow solver: round(1e6 * d).
std::int64_t scale_distance(double d);

// Throws Infeasible when the counts admit no stratification under the bounds.
void check_feasible(Index n_treated, Index n_comparisons, const MatchBounds& bounds,
                    bool allow_surplus);

// Minimum-total-distance full matching, solved exactly as a min-cost flow.
// The seed only perturbs costs below the integer scale to break ties.
Stratification solve_full_match(const FullMatchProblem& problem, std::uint64_t seed);

}  // namespace rtnm
