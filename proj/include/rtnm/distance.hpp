#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "rtnm/panel.hpp"

namespace rtnm {

enum class Metric { Mahalanobis, RankMahalanobis };

std::string to_string(Metric m);
Metric parse_metric(const std::string& s);

struct DistanceSpec {
  Metric metric = Metric::RankMahalanobis;
  // Ridge added to the covariance diagonal. Unset means 1e-6 * trace / dim.
  // An explicit 0 disables regularisation; factorisation failure is then an
  // error instead of being retried with a larger ridge.
  std::optional<double> ridge;
};

// ---------------------------------------------------------------------------
// Dense helpers

// Average ranks (1-based) of a vector; tied values share the mean of the ranks
// they occupy.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> average_ranks(
    const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = values.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> ranks(n);
  Eigen::Index lo = 0;
  while (lo < n) {
    Eigen::Index hi = lo + 1;
    while (hi < n && values(order[hi]) == values(order[lo])) ++hi;
    const Scalar mean_rank = Scalar(lo + 1 + hi) / Scalar(2);
    for (Eigen::Index k = lo; k < hi; ++k) ranks(order[k]) = mean_rank;
    lo = hi;
  }
  return ranks;
}

// Column-wise average ranks of a sample matrix (rows are observations).
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> rank_transform(
    const Eigen::MatrixBase<Derived>& sample) {
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(sample.rows(),
                                                                             sample.cols());
  for (Eigen::Index c = 0; c < sample.cols(); ++c) out.col(c) = average_ranks(sample.col(c));
  return out;
}

// Sample covariance with divisor n - 1 (rows are observations).
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> sample_covariance(
    const Eigen::MatrixBase<Derived>& sample) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = sample.rows();
  const auto centered = (sample.rowwise() - sample.colwise().mean()).eval();
  const Scalar divisor = n > 1 ? Scalar(n - 1) : Scalar(1);
  return (centered.transpose() * centered) / divisor;
}

// ---------------------------------------------------------------------------
// Fitted metric

// Metric state for one cohort period g: the pool's (possibly rank-transformed)
// windows mapped through the Cholesky factor of the regularised covariance, so
// that d(i, j) is the Euclidean distance between whitened rows.
class FittedMetric {
 public:
  // Fits directly on a window matrix whose rows correspond to `pool`.
  static FittedMetric from_windows(int g, std::vector<Index> pool, const Eigen::MatrixXd& windows,
                                   const DistanceSpec& spec);

  int g() const { return g_; }
  Metric metric() const { return metric_; }
  double ridge() const { return ridge_; }
  Index dimension() const { return whitened_.cols(); }
  const std::vector<Index>& pool() const { return pool_; }

  // Position of a unit within the pool, or nullopt.
  std::optional<Index> position(Index unit) const;
  Index position_or_throw(Index unit) const;

  // Rows are pool members in pool order.
  const Eigen::MatrixXd& whitened() const { return whitened_; }
  // (S + ridge I)^{-1}, on the rank scale for the rank metric.
  Eigen::MatrixXd inverse_covariance() const;
  // Windows after the optional rank transform, rows in pool order.
  const Eigen::MatrixXd& transformed() const { return transformed_; }

  double distance_at(Index pos_a, Index pos_b) const {
    return (whitened_.row(pos_a) - whitened_.row(pos_b)).norm();
  }
  // Distances from one pool position to every pool member.
  Eigen::VectorXd distances_from(Index pos) const;

 private:
  int g_ = 0;
  Metric metric_ = Metric::Mahalanobis;
  double ridge_ = 0.0;
  std::vector<Index> pool_;
  std::unordered_map<Index, Index> position_;
  Eigen::MatrixXd transformed_;
  Eigen::MatrixXd cholesky_;  // lower factor of S + ridge I
  Eigen::MatrixXd whitened_;
};

FittedMetric fit_metric(const PanelDataset& data, int g, std::vector<Index> pool,
                        const DistanceSpec& spec);

double unit_distance(const FittedMetric& metric, Index i, Index j);

// Mean distance from unit i to the members of a stratum.
double unit_to_set_distance(const FittedMetric& metric, Index i, std::span<const Index> stratum);

struct DistanceMatrix {
  int g = 0;
  std::vector<Index> rows;  // treated unit ids
  Eigen::MatrixXd values;   // rows x comparison entities
};

// Entry (r, c) is unit_to_set_distance(treated[r], comparisons[c]); a raw
// unit is a singleton set.
DistanceMatrix build_distance_matrix(const FittedMetric& metric, const std::vector<Index>& treated,
                                     const std::vector<std::vector<Index>>& comparisons);

}  // namespace rtnm
