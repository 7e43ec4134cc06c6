#pragma once

#include <cstdint>
#include <vector>

namespace rtnm::flow {

// Exact min-cost flow on integer data via the primal network simplex method
// (big-M start, strongly feasible spanning trees, block-search pivoting).
// Arcs may carry lower bounds; they are removed by the usual supply shift.
class MinCostFlow {
 public:
  using Flow = std::int64_t;
  using Cost = std::int64_t;

  static constexpr Flow kInfinite = Flow{1} << 50;

  enum class Status { Optimal, Infeasible };

  explicit MinCostFlow(int n_nodes);

  int n_nodes() const { return n_nodes_; }
  int n_arcs() const { return static_cast<int>(source_.size()); }

  int add_arc(int from, int to, Flow lower, Flow upper, Cost cost);
  void reserve_arcs(std::size_t n);

  // Positive supply is produced at the node, negative supply consumed.
  void set_supply(int node, Flow supply);

  Status solve();

  Flow flow(int arc) const { return flow_[static_cast<std::size_t>(arc)] + lower_[static_cast<std::size_t>(arc)]; }
  Cost total_cost() const;
  // Largest |cost| accepted before the big-M start could overflow.
  static Cost max_safe_cost(int n_nodes);

 private:
  int n_nodes_;
  std::vector<int> source_;
  std::vector<int> target_;
  std::vector<Flow> lower_;
  std::vector<Flow> cap_;  // upper - lower
  std::vector<Cost> cost_;
  std::vector<Flow> flow_;  // flow above the lower bound
  std::vector<Flow> supply_;
};

}  // namespace rtnm::flow
