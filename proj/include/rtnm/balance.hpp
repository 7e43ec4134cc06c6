#pragma once

#include <string>
#include <vector>

#include "rtnm/design.hpp"
#include "rtnm/panel.hpp"

namespace rtnm {

// One covariate at one pre-period for one cohort. SMDs are absolute and share
// the pre-matching pooled standard deviation sqrt((s_T^2 + s_C^2) / 2), where
// C is every unit with G_i > g.
struct BalanceRow {
  int g = 0;
  std::string covariate;
  int period = 0;
  double treated_mean = 0.0;
  double comparison_mean_before = 0.0;
  double comparison_mean_after = 0.0;
  double pooled_sd = 0.0;
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct BalanceReport {
  std::vector<BalanceRow> rows;
};

// Absolute standardized mean difference; 0 when the means agree even if the
// spread is 0, ZeroVariance when only the spread is 0.
double standardized_difference(double treated_mean, double comparison_mean, double pooled_sd);

// Matched comparisons of cohort g are the level-g stratum members with
// G_i > g. Each treated unit has weight 1; the comparisons of a stratum share
// its treated count equally.
BalanceReport balance_report(const PanelDataset& data, const NestedDesign& design);

}  // namespace rtnm
