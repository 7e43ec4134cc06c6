#include "rtnm/full_match.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtnm/error.hpp"
#include "rtnm/min_cost_flow.hpp"
#include "rtnm/random.hpp"

namespace rtnm {

namespace {

constexpr double kCostScale = 1e6;
// Tie-break perturbations lie in [0, kJitter); costs are multiplied by
// kJitter * (number of entities + 1) so no perturbation sum can reorder two
// stratifications whose scaled costs differ.
constexpr std::int64_t kJitter = 16;

}  // namespace

void MatchBounds::validate() const {
  if (min_ratio < 1) throw Error(ErrorCode::InvalidArgument, "min_ratio must be >= 1");
  if (max_ratio && *max_ratio < min_ratio) {
    throw Error(ErrorCode::InvalidArgument, "max_ratio must be >= min_ratio");
  }
  if (max_stratum_size && *max_stratum_size < 2) {
    throw Error(ErrorCode::InvalidArgument, "max_stratum_size must be >= 2");
  }
}

int MatchBounds::max_leaves(Index n_entities) const {
  Index hi = std::max<Index>(n_entities, 1);
  if (max_ratio) hi = std::min<Index>(hi, *max_ratio);
  if (max_stratum_size) hi = std::min<Index>(hi, *max_stratum_size - 1);
  return static_cast<int>(hi);
}

std::int64_t scale_distance(double d) {
  if (!std::isfinite(d) || d < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "distances must be finite and nonnegative");
  }
  const double scaled = std::round(d * kCostScale);
  if (scaled > 9.0e15) throw Error(ErrorCode::CostOverflow, "distance too large to scale");
  return static_cast<std::int64_t>(scaled);
}

void check_feasible(Index n_treated, Index n_comparisons, const MatchBounds& bounds,
                    bool allow_surplus) {
  bounds.validate();
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::Infeasible, "no full matching of " + std::to_string(n_treated) +
                                           " treated and " + std::to_string(n_comparisons) +
                                           " comparisons: " + why);
  };
  if (n_treated < 1 || n_comparisons < 1) fail("both sides must be nonempty");
  const Index hi = bounds.max_leaves(n_treated + n_comparisons);
  const Index lo = bounds.min_ratio;
  if (lo > hi) fail("min_ratio exceeds the stratum size limit");
  if (n_comparisons > hi * n_treated && !allow_surplus) fail("too many comparisons");
  if (lo == 1) {
    if (n_treated > hi * n_comparisons) fail("too many treated");
  } else if (n_comparisons < lo * n_treated) {
    fail("too few comparisons for min_ratio");
  }
}

Stratification solve_full_match(const FullMatchProblem& problem, std::uint64_t seed) {
  const Eigen::MatrixXd& dist = problem.distance;
  const Index nt = dist.rows();
  const Index nc = dist.cols();
  const MatchBounds& bounds = problem.bounds;
  check_feasible(nt, nc, bounds, problem.allow_surplus);

  const Index hi = bounds.max_leaves(nt + nc);
  const Index lo = bounds.min_ratio;
  const bool surplus = nc > hi * nt;

  // Nodes: 0 source, 1..nt treated, nt+1..nt+nc comparisons, nt+nc+1 sink.
  const int source = 0;
  const int sink = static_cast<int>(nt + nc + 1);
  auto tnode = [](Index r) { return static_cast<int>(r + 1); };
  auto cnode = [nt](Index c) { return static_cast<int>(nt + 1 + c); };

  const std::int64_t multiplier = kJitter * static_cast<std::int64_t>(nt + nc + 1);
  const auto n_nodes = static_cast<int>(nt + nc + 2);
  const std::int64_t safe = flow::MinCostFlow::max_safe_cost(n_nodes);

  flow::MinCostFlow net(n_nodes);
  net.reserve_arcs(static_cast<std::size_t>(nt * nc + nt + nc + 1));
  for (Index r = 0; r < nt; ++r) {
    if (surplus) {
      net.add_arc(source, tnode(r), hi, hi, 0);
    } else {
      net.add_arc(source, tnode(r), lo, hi, 0);
    }
  }
  const int first_pair_arc = net.n_arcs();
  for (Index r = 0; r < nt; ++r) {
    for (Index c = 0; c < nc; ++c) {
      const std::int64_t base = scale_distance(dist(r, c));
      if (base > safe / multiplier) {
        throw Error(ErrorCode::CostOverflow, "scaled distances exceed the safe integer range");
      }
      const auto jitter = static_cast<std::int64_t>(
          mix64(seed, (static_cast<std::uint64_t>(r) << 32) ^ static_cast<std::uint64_t>(c)) %
          static_cast<std::uint64_t>(kJitter));
      net.add_arc(tnode(r), cnode(c), 0, 1, base * multiplier + jitter);
    }
  }
  for (Index c = 0; c < nc; ++c) {
    if (surplus) {
      net.add_arc(cnode(c), sink, 0, 1, 0);
    } else if (lo == 1) {
      net.add_arc(cnode(c), sink, 1, hi, 0);
    } else {
      net.add_arc(cnode(c), sink, 1, 1, 0);
    }
  }
  net.add_arc(sink, source, 0, flow::MinCostFlow::kInfinite, 0);

  if (net.solve() != flow::MinCostFlow::Status::Optimal) {
    throw Error(ErrorCode::Infeasible, "full matching flow problem is infeasible");
  }

  // Selected treated-comparison edges.
  std::vector<std::vector<Index>> t_adj(static_cast<std::size_t>(nt));
  std::vector<std::vector<Index>> c_adj(static_cast<std::size_t>(nc));
  for (Index r = 0; r < nt; ++r) {
    for (Index c = 0; c < nc; ++c) {
      if (net.flow(first_pair_arc + static_cast<int>(r * nc + c)) > 0) {
        t_adj[static_cast<std::size_t>(r)].push_back(c);
        c_adj[static_cast<std::size_t>(c)].push_back(r);
      }
    }
  }

  // With min_ratio 1 the flow yields a degree-bounded edge cover. Any edge
  // whose endpoints both have degree >= 2 can be dropped without uncovering
  // a node or raising the cost; once none remain every component is a star.
  if (lo == 1 && !surplus) {
    for (Index r = 0; r < nt; ++r) {
      auto& tr = t_adj[static_cast<std::size_t>(r)];
      for (std::size_t k = 0; k < tr.size();) {
        const Index c = tr[k];
        auto& cr = c_adj[static_cast<std::size_t>(c)];
        if (tr.size() >= 2 && cr.size() >= 2) {
          cr.erase(std::find(cr.begin(), cr.end(), r));
          tr.erase(tr.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
          ++k;
        }
      }
    }
  }

  Stratification out;
  for (Index r = 0; r < nt; ++r) {
    const auto& tr = t_adj[static_cast<std::size_t>(r)];
    if (tr.size() >= 2 || (tr.size() == 1 && c_adj[static_cast<std::size_t>(tr[0])].size() == 1)) {
      out.strata.push_back({{r}, tr});
    }
  }
  for (Index c = 0; c < nc; ++c) {
    const auto& cr = c_adj[static_cast<std::size_t>(c)];
    if (cr.size() >= 2) out.strata.push_back({cr, {c}});
    if (cr.empty()) out.unmatched.push_back(c);
  }
  for (auto& s : out.strata) {
    std::sort(s.treated.begin(), s.treated.end());
    std::sort(s.comparisons.begin(), s.comparisons.end());
    for (Index r : s.treated) {
      for (Index c : s.comparisons) {
        out.objective += dist(r, c);
        out.scaled_objective += scale_distance(dist(r, c));
      }
    }
  }
  std::sort(out.strata.begin(), out.strata.end(), [](const auto& a, const auto& b) {
    return std::pair(a.treated.front(), a.comparisons.front()) <
           std::pair(b.treated.front(), b.comparisons.front());
  });
  return out;
}

}  // namespace rtnm
