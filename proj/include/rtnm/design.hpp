#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rtnm/distance.hpp"
#include "rtnm/full_match.hpp"
#include "rtnm/panel.hpp"

namespace rtnm {

struct DesignStratum {
  std::vector<Index> members;  // unit indices, ascending
  int parent = -1;             // stratum index one level up (g - 1); -1 at level 1
};

struct DesignLevel {
  int g = 0;
  std::vector<DesignStratum> strata;
  double objective = 0.0;  // full-matching objective at this level
  Index attached = 0;      // carried-forward comparisons absorbed at this level
};

// Matched strata for cohorts 1..G. levels[g - 1] holds the level-g strata;
// every level-g stratum (g >= 2) lies inside its parent at level g - 1.
// Units are indices into `unit_ids`/`adoption`, which mirror the panel the
// design was built from.
struct NestedDesign {
  std::vector<std::string> unit_ids;
  std::vector<Cohort> adoption;
  int max_cohort = 0;
  std::vector<DesignLevel> levels;
  std::vector<Index> unused;  // comparison-pool units never absorbed

  DistanceSpec spec;
  MatchBounds bounds;
  std::uint64_t seed = 0;

  Index n_units() const { return static_cast<Index>(unit_ids.size()); }
  const DesignLevel& level(int g) const;
  Cohort cohort(Index unit) const { return adoption[static_cast<std::size_t>(unit)]; }
  // Level-1 strata, the sampling units of the block bootstrap.
  const std::vector<DesignStratum>& blocks() const { return level(1).strata; }
  // Index of the level-1 stratum containing a level-g stratum.
  int block_of(int g, int stratum) const;

  nlohmann::json to_json() const;
  static NestedDesign from_json(const nlohmann::json& j);

  // Throws IndexMismatch unless the design was built on a panel with the
  // same units in the same order and the same adoption periods.
  void check_matches(const PanelDataset& data) const;
};

// Reverse-time nested matching over cohorts 1..max_cohort.
//
// The latest cohort G is matched to the pool {G_i > G}. Pool units the
// structure limits cannot absorb are carried forward as loose comparisons.
// Each earlier cohort g is then matched with every level-(g+1) stratum acting
// as one pseudo-control, using the covariate window X_{t0:(g-1)} and a metric
// refitted on {G_i >= g}; loose comparisons join single-treated strata that
// still have room, nearest treated unit first.
NestedDesign run_rtnm(const PanelDataset& data, int max_cohort, const DistanceSpec& spec,
                      const MatchBounds& bounds, std::uint64_t seed);

struct NestingViolation {
  enum class Kind { Parent, Coverage, Overlap, Missing, Cohort };
  Kind kind;
  int g;
  int stratum;
  std::string detail;
};

std::string to_string(NestingViolation::Kind kind);

struct NestingReport {
  std::vector<NestingViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Checks parent links, disjointness, cohort coverage (every level-g stratum
// holds units of each cohort g..G and of the pool beyond G) and that every
// unit of cohorts 1..G sits in exactly one level-1 stratum.
NestingReport verify_nested(const NestedDesign& design);

}  // namespace rtnm
