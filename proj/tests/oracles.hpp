#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rtnm/full_match.hpp"

namespace rtnm::oracle {

// Exhaustive search over every partition of treated rows and comparison
// columns into valid strata. Returns the minimal sum of round(1e6 * d) over
// within-stratum treated-comparison pairs, or nullopt if no partition is valid.
inline std::optional<std::int64_t> brute_force_full_match(const Eigen::MatrixXd& d,
                                                          const MatchBounds& bounds) {
  const int nt = static_cast<int>(d.rows());
  const int nc = static_cast<int>(d.cols());
  const int n = nt + nc;
  int hi = n;
  if (bounds.max_ratio) hi = std::min(hi, *bounds.max_ratio);
  if (bounds.max_stratum_size) hi = std::min(hi, *bounds.max_stratum_size - 1);
  const int lo = bounds.min_ratio;

  auto scaled = [&](int r, int c) {
    return static_cast<std::int64_t>(std::llround(d(r, c) * 1e6));
  };

  std::vector<int> block(static_cast<std::size_t>(n), 0);
  std::optional<std::int64_t> best;

  auto evaluate = [&](int n_blocks) {
    std::int64_t total = 0;
    for (int b = 0; b < n_blocks; ++b) {
      std::vector<int> ts, cs;
      for (int e = 0; e < n; ++e) {
        if (block[static_cast<std::size_t>(e)] != b) continue;
        if (e < nt) ts.push_back(e); else cs.push_back(e - nt);
      }
      if (ts.empty() || cs.empty()) return;
      if (ts.size() == 1) {
        const int k = static_cast<int>(cs.size());
        if (k < lo || k > hi) return;
      } else {
        const int k = static_cast<int>(ts.size());
        if (cs.size() != 1 || lo != 1 || k > hi) return;
      }
      for (int r : ts)
        for (int c : cs) total += scaled(r, c);
    }
    if (!best || total < *best) best = total;
  };

  // Restricted growth strings enumerate each set partition once.
  std::function<void(int, int)> recurse = [&](int pos, int n_blocks) {
    if (pos == n) {
      evaluate(n_blocks);
      return;
    }
    for (int b = 0; b <= n_blocks; ++b) {
      block[static_cast<std::size_t>(pos)] = b;
      recurse(pos + 1, std::max(n_blocks, b + 1));
    }
  };
  recurse(0, 0);
  return best;
}

}  // namespace rtnm::oracle
