#include "rtnm/distance.hpp"

#include <cmath>

#include "rtnm/error.hpp"
#include "rtnm/parallel.hpp"

namespace rtnm {

std::string to_string(Metric m) {
  return m == Metric::Mahalanobis ? "mahalanobis" : "rank";
}

Metric parse_metric(const std::string& s) {
  if (s == "mahalanobis") return Metric::Mahalanobis;
  if (s == "rank" || s == "rank_mahalanobis") return Metric::RankMahalanobis;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + s + "'");
}

namespace {

// Rescales a rank covariance so every diagonal equals the variance of untied
// ranks, keeping the correlation structure. Constant coordinates get the
// untied variance and no cross terms; their rank differences are always 0.
Eigen::MatrixXd rescale_rank_covariance(Eigen::MatrixXd cov, Index pool_size) {
  const double n = static_cast<double>(pool_size);
  const double untied = (n * n - 1.0) / 12.0;
  Eigen::VectorXd scale(cov.rows());
  for (Index k = 0; k < cov.rows(); ++k) {
    scale(k) = cov(k, k) > 0.0 ? std::sqrt(untied / cov(k, k)) : 0.0;
  }
  cov = scale.asDiagonal() * cov * scale.asDiagonal();
  for (Index k = 0; k < cov.rows(); ++k) {
    if (scale(k) == 0.0) cov(k, k) = untied;
  }
  return cov;
}

}  // namespace

FittedMetric FittedMetric::from_windows(int g, std::vector<Index> pool,
                                        const Eigen::MatrixXd& windows,
                                        const DistanceSpec& spec) {
  if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "empty metric pool");
  if (windows.rows() != static_cast<Index>(pool.size()) || windows.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument, "window matrix does not match pool");
  }
  if (spec.ridge && *spec.ridge < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "ridge must be nonnegative");
  }

  FittedMetric m;
  m.g_ = g;
  m.metric_ = spec.metric;
  m.pool_ = std::move(pool);
  for (std::size_t p = 0; p < m.pool_.size(); ++p) {
    if (!m.position_.emplace(m.pool_[p], static_cast<Index>(p)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate unit in metric pool");
    }
  }

  Eigen::MatrixXd cov;
  if (spec.metric == Metric::RankMahalanobis) {
    m.transformed_ = rank_transform(windows);
    cov = rescale_rank_covariance(sample_covariance(m.transformed_), windows.rows());
  } else {
    m.transformed_ = windows;
    cov = sample_covariance(m.transformed_);
  }

  const Index dim = cov.rows();
  double ridge = 0.0;
  if (spec.ridge) {
    ridge = *spec.ridge;
  } else {
    const double trace = cov.trace();
    ridge = trace > 0.0 ? 1e-6 * trace / static_cast<double>(dim) : 1.0;
  }

  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int attempt = 0;; ++attempt) {
    llt.compute(cov + ridge * Eigen::MatrixXd::Identity(dim, dim));
    if (llt.info() == Eigen::Success) break;
    if (spec.ridge && *spec.ridge == 0.0) {
      throw Error(ErrorCode::SingularCovariance,
                  "covariance of the g=" + std::to_string(g) + " window is singular");
    }
    if (attempt > 30) {
      throw Error(ErrorCode::SingularCovariance, "covariance could not be regularised");
    }
    ridge = ridge > 0.0 ? ridge * 10.0 : 1e-12;
  }
  m.ridge_ = ridge;
  m.cholesky_ = llt.matrixL();
  m.whitened_ = m.cholesky_.triangularView<Eigen::Lower>()
                    .solve(m.transformed_.transpose())
                    .transpose();
  return m;
}

std::optional<Index> FittedMetric::position(Index unit) const {
  auto it = position_.find(unit);
  if (it == position_.end()) return std::nullopt;
  return it->second;
}

Index FittedMetric::position_or_throw(Index unit) const {
  auto p = position(unit);
  if (!p) {
    throw Error(ErrorCode::UnknownUnit,
                "unit index " + std::to_string(unit) + " is not in the fitted pool");
  }
  return *p;
}

Eigen::MatrixXd FittedMetric::inverse_covariance() const {
  const Index dim = cholesky_.rows();
  Eigen::MatrixXd linv = cholesky_.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(dim, dim));
  return linv.transpose() * linv;
}

Eigen::VectorXd FittedMetric::distances_from(Index pos) const {
  return (whitened_.rowwise() - whitened_.row(pos)).rowwise().norm();
}

FittedMetric fit_metric(const PanelDataset& data, int g, std::vector<Index> pool,
                        const DistanceSpec& spec) {
  if (data.window_length(g) < 1) {
    throw Error(ErrorCode::InvalidArgument, "empty covariate window");
  }
  Eigen::MatrixXd windows = covariate_windows(data, pool, g);
  return FittedMetric::from_windows(g, std::move(pool), windows, spec);
}

double unit_distance(const FittedMetric& metric, Index i, Index j) {
  return metric.distance_at(metric.position_or_throw(i), metric.position_or_throw(j));
}

double unit_to_set_distance(const FittedMetric& metric, Index i,
                            std::span<const Index> stratum) {
  if (stratum.empty()) throw Error(ErrorCode::EmptyStratum, "distance to an empty stratum");
  const Index pi = metric.position_or_throw(i);
  double sum = 0.0;
  for (Index k : stratum) sum += metric.distance_at(pi, metric.position_or_throw(k));
  return sum / static_cast<double>(stratum.size());
}

DistanceMatrix build_distance_matrix(const FittedMetric& metric,
                                     const std::vector<Index>& treated,
                                     const std::vector<std::vector<Index>>& comparisons) {
  if (treated.empty() || comparisons.empty()) {
    throw Error(ErrorCode::InvalidArgument, "distance matrix needs treated and comparisons");
  }
  std::vector<std::vector<Index>> positions(comparisons.size());
  for (std::size_t c = 0; c < comparisons.size(); ++c) {
    if (comparisons[c].empty()) throw Error(ErrorCode::EmptyStratum, "empty comparison stratum");
    for (Index u : comparisons[c]) positions[c].push_back(metric.position_or_throw(u));
  }
  std::vector<Index> rows_pos;
  for (Index u : treated) rows_pos.push_back(metric.position_or_throw(u));

  DistanceMatrix out;
  out.g = metric.g();
  out.rows = treated;
  out.values.resize(static_cast<Index>(treated.size()), static_cast<Index>(comparisons.size()));
  parallel_for(treated.size(), [&](std::size_t r) {
    const Eigen::VectorXd row = metric.distances_from(rows_pos[r]);
    for (std::size_t c = 0; c < positions.size(); ++c) {
      double sum = 0.0;
      for (Index p : positions[c]) sum += row(p);
      out.values(static_cast<Index>(r), static_cast<Index>(c)) =
          sum / static_cast<double>(positions[c].size());
    }
  });
  return out;
}

}  // namespace rtnm
