#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rtnm/att.hpp"
#include "rtnm/panel.hpp"

namespace rtnm {

// True ATT(g, t) surface used by the simulator.
struct EffectMap {
  enum class Kind { Constant, Cohort, Lag, Table };
  Kind kind = Kind::Constant;
  double value = 0.0;          // Constant
  std::vector<double> values;  // Cohort: indexed by g - 1; Lag: by t - g
  std::vector<std::pair<GtCell, double>> table;

  double operator()(int g, int t) const;

  nlohmann::json to_json() const;
  static EffectMap from_json(const nlohmann::json& j);
};

// Staggered-adoption generator.
//
// Per unit: a latent trait s ~ N(0, 1). Untreated outcomes follow
//   Y_t(inf) = trend * t + rho * Y_{t-1}(inf) + trait_loading * s
//              + covariate_effect * mean_k x_{k,t-1} + noise_sd * e_t,
// and covariates x_k (k >= 1) follow
//   x_{k,t} = covariate_ar * x_{k,t-1} + covariate_feedback * Y_{t-1}(inf) + u_t.
// Covariate 0 is the observed outcome itself, so lagged outcomes are part of
// the matching history.
//
// Adoption is possible in periods 1..adoption_periods. Among units still
// untreated, the hazard at t is
//   logistic(logit(baseline_hazard) + confounding * z(Y_{t-1}) + covariate_hazard * z(xbar_{t-1}))
// clamped to [hazard_floor, hazard_ceiling], with z() the cross-sectional
// standardisation at t - 1. It depends only on observed history. With
// cohort_sizes set, exactly that many units adopt at each period, drawn
// without replacement with probability proportional to the hazard.
//
// Treated potential outcomes add effect(g, t) + effect_sd * v for t >= g,
// with v ~ N(0, 1) fixed per unit. The binary variant maps the latent outcome
// through a logistic link with one uniform per (unit, period) shared by all
// potential outcomes.
struct DgpConfig {
  Index n_units = 2000;
  int t0 = -2;
  int t_max = 6;
  Index n_covariates = 3;
  int adoption_periods = 4;

  double baseline_hazard = 0.1;
  double confounding = 0.0;
  double covariate_hazard = 0.0;
  double hazard_floor = 0.01;
  double hazard_ceiling = 0.9;
  std::optional<std::vector<Index>> cohort_sizes;

  double rho = 0.6;
  double trend = 0.2;
  double trait_loading = 1.0;
  double covariate_effect = 0.3;
  double covariate_ar = 0.7;
  double covariate_feedback = 0.2;
  double noise_sd = 1.0;

  EffectMap effect;
  double effect_sd = 0.0;
  bool binary = false;

  bool resample_degenerate = false;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static DgpConfig from_json(const nlohmann::json& j);
  static DgpConfig from_file(const std::filesystem::path& path);
};

struct SimulatedPanel {
  PanelDataset data;
  AttVector truth;  // every (g, t) with g <= adoption_periods, no block rows
};

SimulatedPanel generate_panel(const DgpConfig& config);

}  // namespace rtnm
