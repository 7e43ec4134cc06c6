#pragma once

#include <string>
#include <vector>

#include "rtnm/panel.hpp"

namespace rtnm::fixture {

// Panel over periods t0..t_max with one covariate per period. `x` holds one
// row per unit (the same value at every period when it has one column);
// `y` holds one row per unit over all periods.
inline PanelDataset make_panel(const std::vector<Cohort>& adoption, int t0, int t_max,
                               const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Index n = static_cast<Index>(adoption.size());
  const Index periods = t_max - t0 + 1;
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i) ids.push_back("u" + std::to_string(i));
  Eigen::MatrixXd cov(n, periods);
  for (Index i = 0; i < n; ++i)
    for (Index q = 0; q < periods; ++q) cov(i, q) = x.cols() == 1 ? x(i, 0) : x(i, q);
  return PanelDataset(ids, t0, t_max, {"x"}, cov, adoption, y);
}

inline std::vector<Cohort> cohorts(const std::vector<int>& g) {
  std::vector<Cohort> out;
  for (int v : g) out.push_back(v > 0 ? Cohort::at(v) : Cohort::never());
  return out;
}

}  // namespace rtnm::fixture
