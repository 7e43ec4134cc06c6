#include "rtnm/min_cost_flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "rtnm/error.hpp"

namespace rtnm::flow {

namespace {

using Flow = MinCostFlow::Flow;
using Cost = MinCostFlow::Cost;

constexpr signed char kLower = 1;
constexpr signed char kTree = 0;
constexpr signed char kUpper = -1;
constexpr signed char kUp = 1;     // tree arc points from node to parent
constexpr signed char kDown = -1;  // tree arc points from parent to node

// Working state of one network simplex run. Nodes 0..n-1 are real, node n is
// the artificial root; arcs m..m+n-1 join each node to the root.
class Simplex {
 public:
  Simplex(int n, const std::vector<int>& src, const std::vector<int>& tgt,
          const std::vector<Flow>& cap, const std::vector<Cost>& cost,
          const std::vector<Flow>& supply)
      : n_(n), m_(static_cast<int>(src.size())), root_(n) {
    const std::size_t total = static_cast<std::size_t>(m_ + n_);
    source_.assign(src.begin(), src.end());
    target_.assign(tgt.begin(), tgt.end());
    cap_.assign(cap.begin(), cap.end());
    cost_.assign(cost.begin(), cost.end());
    source_.resize(total);
    target_.resize(total);
    cap_.resize(total, MinCostFlow::kInfinite);
    cost_.resize(total);
    flow_.assign(total, 0);
    state_.assign(total, kLower);

    const std::size_t nodes = static_cast<std::size_t>(n_ + 1);
    parent_.assign(nodes, -1);
    pred_.assign(nodes, -1);
    pred_dir_.assign(nodes, 0);
    depth_.assign(nodes, 0);
    pi_.assign(nodes, 0);
    first_child_.assign(nodes, -1);
    next_sibling_.assign(nodes, -1);
    prev_sibling_.assign(nodes, -1);

    Cost max_cost = 0;
    for (Cost c : cost) max_cost = std::max(max_cost, c < 0 ? -c : c);
    const Cost art_cost = (max_cost + 1) * static_cast<Cost>(n_ + 1);

    for (int u = 0; u < n_; ++u) {
      const int e = m_ + u;
      const Flow s = supply[static_cast<std::size_t>(u)];
      if (s >= 0) {
        source_[e] = u;
        target_[e] = root_;
        flow_[e] = s;
        cost_[e] = 0;
        pred_dir_[u] = kUp;
        pi_[u] = 0;
      } else {
        source_[e] = root_;
        target_[e] = u;
        flow_[e] = -s;
        cost_[e] = art_cost;
        pred_dir_[u] = kDown;
        pi_[u] = art_cost;
      }
      state_[e] = kTree;
      parent_[u] = root_;
      pred_[u] = e;
      depth_[u] = 1;
      attach_child(root_, u);
    }

    block_size_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(m_))));
  }

  bool run() {
    while (find_entering_arc()) {
      pivot();
    }
    for (int u = 0; u < n_; ++u) {
      if (flow_[m_ + u] != 0) return false;
    }
    return true;
  }

  Flow flow(int e) const { return flow_[e]; }

 private:
  Cost reduced_cost(int e) const { return cost_[e] + pi_[source_[e]] - pi_[target_[e]]; }

  bool find_entering_arc() {
    if (m_ == 0) return false;
    Cost best = 0;
    int count = block_size_;
    int e = next_arc_;
    for (int scanned = 0; scanned < m_; ++scanned) {
      const Cost c = state_[e] * reduced_cost(e);
      if (c < best) {
        best = c;
        in_arc_ = e;
      }
      if (++e == m_) e = 0;
      if (--count == 0) {
        if (best < 0) break;
        count = block_size_;
      }
    }
    next_arc_ = e;
    return best < 0;
  }

  int find_join(int u, int v) const {
    while (u != v) {
      if (depth_[u] > depth_[v]) {
        u = parent_[u];
      } else if (depth_[v] > depth_[u]) {
        v = parent_[v];
      } else {
        u = parent_[u];
        v = parent_[v];
      }
    }
    return u;
  }

  void pivot() {
    int first, second;
    if (state_[in_arc_] == kLower) {
      first = source_[in_arc_];
      second = target_[in_arc_];
    } else {
      first = target_[in_arc_];
      second = source_[in_arc_];
    }
    const int join = find_join(first, second);

    // Leaving arc: the last blocking arc met when walking the cycle in its
    // orientation from the join node keeps the tree strongly feasible.
    Flow delta = cap_[in_arc_];
    int result = 0;
    int u_out = -1;
    for (int u = first; u != join; u = parent_[u]) {
      const int e = pred_[u];
      Flow d = flow_[e];
      if (pred_dir_[u] == kDown) d = cap_[e] - flow_[e];
      if (d < delta) {
        delta = d;
        u_out = u;
        result = 1;
      }
    }
    for (int u = second; u != join; u = parent_[u]) {
      const int e = pred_[u];
      Flow d = flow_[e];
      if (pred_dir_[u] == kUp) d = cap_[e] - flow_[e];
      if (d <= delta) {
        delta = d;
        u_out = u;
        result = 2;
      }
    }
    if (delta >= MinCostFlow::kInfinite) {
      throw Error(ErrorCode::Infeasible, "min-cost flow is unbounded");
    }

    if (delta > 0) {
      const Flow val = state_[in_arc_] * delta;
      flow_[in_arc_] += val;
      for (int u = source_[in_arc_]; u != join; u = parent_[u]) {
        flow_[pred_[u]] -= pred_dir_[u] * val;
      }
      for (int u = target_[in_arc_]; u != join; u = parent_[u]) {
        flow_[pred_[u]] += pred_dir_[u] * val;
      }
    }

    if (result == 0) {
      state_[in_arc_] = static_cast<signed char>(-state_[in_arc_]);
      return;
    }

    const int out_arc = pred_[u_out];
    state_[out_arc] = flow_[out_arc] == 0 ? kLower : kUpper;
    state_[in_arc_] = kTree;

    const int u_in = result == 1 ? first : second;
    const int v_in = result == 1 ? second : first;

    // Re-hang the subtree below the leaving arc from the entering arc,
    // reversing parent links along u_in .. u_out.
    detach_child(parent_[u_out], u_out);
    int child = u_in;
    int child_pred = in_arc_;
    signed char child_dir = source_[in_arc_] == u_in ? kUp : kDown;
    int new_parent = v_in;
    while (true) {
      const int old_parent = parent_[child];
      const int old_pred = pred_[child];
      const signed char old_dir = pred_dir_[child];
      if (child != u_out) detach_child(old_parent, child);
      parent_[child] = new_parent;
      pred_[child] = child_pred;
      pred_dir_[child] = child_dir;
      attach_child(new_parent, child);
      if (child == u_out) break;
      new_parent = child;
      child = old_parent;
      child_pred = old_pred;
      child_dir = static_cast<signed char>(-old_dir);
    }

    refresh_subtree(u_in);
  }

  // Recomputes depth and potentials below (and including) node r.
  void refresh_subtree(int r) {
    stack_.clear();
    stack_.push_back(r);
    while (!stack_.empty()) {
      const int u = stack_.back();
      stack_.pop_back();
      const int p = parent_[u];
      const int e = pred_[u];
      depth_[u] = depth_[p] + 1;
      pi_[u] = pred_dir_[u] == kUp ? pi_[p] - cost_[e] : pi_[p] + cost_[e];
      for (int c = first_child_[u]; c != -1; c = next_sibling_[c]) stack_.push_back(c);
    }
  }

  void attach_child(int p, int c) {
    prev_sibling_[c] = -1;
    next_sibling_[c] = first_child_[p];
    if (first_child_[p] != -1) prev_sibling_[first_child_[p]] = c;
    first_child_[p] = c;
  }

  void detach_child(int p, int c) {
    if (prev_sibling_[c] != -1) {
      next_sibling_[prev_sibling_[c]] = next_sibling_[c];
    } else {
      first_child_[p] = next_sibling_[c];
    }
    if (next_sibling_[c] != -1) prev_sibling_[next_sibling_[c]] = prev_sibling_[c];
    prev_sibling_[c] = next_sibling_[c] = -1;
  }

  int n_, m_, root_;
  std::vector<int> source_, target_;
  std::vector<Flow> cap_;
  std::vector<Cost> cost_;
  std::vector<Flow> flow_;
  std::vector<signed char> state_;

  std::vector<int> parent_, pred_, depth_;
  std::vector<signed char> pred_dir_;
  std::vector<Cost> pi_;
  std::vector<int> first_child_, next_sibling_, prev_sibling_;
  std::vector<int> stack_;

  int block_size_ = 10;
  int next_arc_ = 0;
  int in_arc_ = -1;
};

}  // namespace

MinCostFlow::MinCostFlow(int n_nodes) : n_nodes_(n_nodes), supply_(static_cast<std::size_t>(n_nodes), 0) {
  if (n_nodes < 0) throw Error(ErrorCode::InvalidArgument, "negative node count");
}

void MinCostFlow::reserve_arcs(std::size_t n) {
  source_.reserve(n);
  target_.reserve(n);
  lower_.reserve(n);
  cap_.reserve(n);
  cost_.reserve(n);
}

int MinCostFlow::add_arc(int from, int to, Flow lower, Flow upper, Cost cost) {
  if (from < 0 || to < 0 || from >= n_nodes_ || to >= n_nodes_) {
    throw Error(ErrorCode::InvalidArgument, "arc endpoint out of range");
  }
  if (lower < 0 || upper < lower) throw Error(ErrorCode::InvalidArgument, "bad arc bounds");
  upper = std::min(upper, kInfinite);
  source_.push_back(from);
  target_.push_back(to);
  lower_.push_back(lower);
  cap_.push_back(upper >= kInfinite ? kInfinite : upper - lower);
  cost_.push_back(cost);
  return static_cast<int>(source_.size()) - 1;
}

void MinCostFlow::set_supply(int node, Flow supply) {
  supply_.at(static_cast<std::size_t>(node)) = supply;
}

MinCostFlow::Cost MinCostFlow::max_safe_cost(int n_nodes) {
  return (Cost{1} << 59) / (static_cast<Cost>(n_nodes) + 2);
}

MinCostFlow::Status MinCostFlow::solve() {
  std::vector<Flow> supply = supply_;
  for (std::size_t e = 0; e < source_.size(); ++e) {
    supply[static_cast<std::size_t>(source_[e])] -= lower_[e];
    supply[static_cast<std::size_t>(target_[e])] += lower_[e];
  }
  Flow total = 0;
  for (Flow s : supply) total += s;
  if (total != 0) return Status::Infeasible;

  const Cost limit = max_safe_cost(n_nodes_);
  for (Cost c : cost_) {
    if (c > limit || c < -limit) {
      throw Error(ErrorCode::CostOverflow, "arc cost exceeds the safe integer range");
    }
  }

  Simplex simplex(n_nodes_, source_, target_, cap_, cost_, supply);
  const bool feasible = simplex.run();
  flow_.resize(source_.size());
  for (std::size_t e = 0; e < source_.size(); ++e) flow_[e] = simplex.flow(static_cast<int>(e));
  return feasible ? Status::Optimal : Status::Infeasible;
}

MinCostFlow::Cost MinCostFlow::total_cost() const {
  Cost total = 0;
  for (std::size_t e = 0; e < source_.size(); ++e) {
    total += (flow_[e] + lower_[e]) * cost_[e];
  }
  return total;
}

}  // namespace rtnm::flow
