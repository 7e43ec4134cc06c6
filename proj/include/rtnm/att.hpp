#pragma once

#include <compare>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rtnm/design.hpp"
#include "rtnm/panel.hpp"

namespace rtnm {

struct GtCell {
  int g = 0;
  int t = 0;
  auto operator<=>(const GtCell&) const = default;
};

// Ordered list of group-time pairs (g, t) with 1 <= g <= t.
class GtIndex {
 public:
  GtIndex() = default;
  explicit GtIndex(std::vector<GtCell> cells);

  // Every (g, t) with 1 <= g <= max_cohort and g <= t <= t_max, g-major.
  static GtIndex all(int max_cohort, int t_max);

  Index size() const { return static_cast<Index>(cells_.size()); }
  const GtCell& operator[](Index k) const { return cells_[static_cast<std::size_t>(k)]; }
  const std::vector<GtCell>& cells() const { return cells_; }
  std::optional<Index> find(int g, int t) const;
  std::string label(Index k) const;

  bool operator==(const GtIndex&) const = default;

  nlohmann::json to_json() const;
  static GtIndex from_json(const nlohmann::json& j);

 private:
  std::vector<GtCell> cells_;
};

enum class Adjustment { None, Linear };

std::string to_string(Adjustment a);
Adjustment parse_adjustment(const std::string& s);

// Estimates over a GtIndex. Row m of block_contributions is the share of
// outermost block m in the weighted stratum average, linearised about the
// estimate: tau + n1 * sum_{s in m} w_s (local_s - tau). Adjusted estimates
// use the members' influence on the regression coefficient instead, so the
// spread of the rows carries the uncertainty of the fitted slopes too. The
// plain mean of the
// rows equals `values` exactly, and a resample's mean of rows is the first
// order expansion of re-estimating on the resampled blocks.
struct AttVector {
  GtIndex index;
  Eigen::VectorXd values;
  Eigen::MatrixXd block_contributions;  // n_blocks x K; empty for naive estimates
  std::vector<int> block_ids;           // level-1 stratum index of each row
  std::vector<int> strata_used;         // per cell
  std::vector<int> strata_dropped;      // per cell: no comparison with G_i > t
  Adjustment adjust = Adjustment::None;

  Index n_blocks() const { return block_contributions.rows(); }

  nlohmann::json to_json() const;
  static AttVector from_json(const nlohmann::json& j);
};

// Stratified estimator. For cell (g, t), each level-g stratum contributes the
// mean outcome at t of its cohort-g units minus that of its members with
// G_i > t, weighted by its cohort-g count. Strata without such members are
// dropped and the weights renormalised.
//
// With Adjustment::Linear the outcome is first residualised on the covariate
// window X_{t0:(g-1)} using the weighted least-squares fit of Y_t on
// [1, D, X] over the matched sample (treated weight 1, comparisons of a
// stratum sharing its treated count). The stratified contrast of the
// residuals equals the fitted coefficient of D.
AttVector estimate_att(const PanelDataset& data, const NestedDesign& design, const GtIndex& index,
                       Adjustment adjust = Adjustment::None);

// Difference in means between {G_i = g} and {G_i > t}, ignoring the design.
AttVector naive_att(const PanelDataset& data, const GtIndex& index);

}  // namespace rtnm
