#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "rtnm/balance.hpp"
#include "rtnm/design.hpp"
#include "rtnm/error.hpp"
#include "rtnm/random.hpp"
#include "rtnm/simulate.hpp"

using namespace rtnm;

namespace {

MatchBounds capped(int size) {
  MatchBounds b;
  b.max_stratum_size = size;
  return b;
}

SimulatedPanel small_panel(std::uint64_t seed, Index n) {
  DgpConfig c;
  c.n_units = n;
  c.seed = seed;
  c.confounding = 0.5;
  c.resample_degenerate = true;
  return generate_panel(c);
}

}  // namespace

TEST(Rtnm, TwoCohortsWithTwoNeverTreated) {
  // Units: cohort 1, cohort 2, never, never.
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 1.0, 2.0, 5.0;
  const PanelDataset data = fixture::make_panel(fixture::cohorts({1, 2, 0, 0}), -1, 3, x,
                                                Eigen::MatrixXd::Zero(4, 5));
  const NestedDesign d = run_rtnm(data, 2, {}, {}, 1);
  ASSERT_EQ(d.levels.size(), 2u);
  const auto& l2 = d.level(2).strata;
  ASSERT_EQ(l2.size(), 1u);
  EXPECT_TRUE(std::binary_search(l2[0].members.begin(), l2[0].members.end(), Index{1}));
  const auto& l1 = d.level(1).strata;
  ASSERT_EQ(l1.size(), 1u);
  EXPECT_EQ(l1[0].members, (std::vector<Index>{0, 1, 2, 3}));
  EXPECT_EQ(l1[0].parent, -1);
  EXPECT_EQ(l2[0].parent, 0);
  EXPECT_TRUE(verify_nested(d).ok());
}

TEST(Rtnm, SimulatedDesignsPassEveryCheck) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const SimulatedPanel sim = small_panel(seed, 300 + 100 * static_cast<Index>(seed));
    for (const auto& bounds : {MatchBounds{}, capped(10), capped(4)}) {
      const NestedDesign d = run_rtnm(sim.data, 4, {}, bounds, seed);
      const NestingReport r = verify_nested(d);
      EXPECT_TRUE(r.ok()) << "seed " << seed << ": "
                          << (r.ok() ? "" : r.violations.front().detail);
      for (int g = 1; g <= 4; ++g) {
        for (const auto& s : d.level(g).strata) {
          if (bounds.max_stratum_size && g == 4) {
            EXPECT_LE(static_cast<int>(s.members.size()), *bounds.max_stratum_size);
          }
        }
      }
    }
  }
}

TEST(Rtnm, NoUnitIsDiscarded) {
  const SimulatedPanel sim = small_panel(11, 500);
  const NestedDesign d = run_rtnm(sim.data, 4, {}, capped(10), 3);
  std::multiset<Index> seen(d.unused.begin(), d.unused.end());
  for (const auto& s : d.level(1).strata) seen.insert(s.members.begin(), s.members.end());
  // Every unit untreated at 1 or treated at 1..4 is either placed or unused.
  for (Index i = 0; i < sim.data.n_units(); ++i) EXPECT_EQ(seen.count(i), 1u) << i;
}

TEST(Rtnm, PseudoControlsStayWhole) {
  const SimulatedPanel sim = small_panel(12, 600);
  const NestedDesign d = run_rtnm(sim.data, 4, {}, capped(10), 5);
  for (int g = 2; g <= 4; ++g) {
    for (const auto& s : d.level(g).strata) {
      int holders = 0;
      for (const auto& up : d.level(g - 1).strata) {
        const bool all = std::includes(up.members.begin(), up.members.end(), s.members.begin(),
                                       s.members.end());
        const bool any = std::find_first_of(up.members.begin(), up.members.end(),
                                            s.members.begin(), s.members.end()) != up.members.end();
        EXPECT_EQ(all, any);
        holders += all ? 1 : 0;
      }
      EXPECT_EQ(holders, 1);
    }
  }
}

TEST(Rtnm, ConstantCovariatesStillNest) {
  const std::vector<Cohort> a = fixture::cohorts({1, 1, 2, 2, 2, 0, 0, 0, 0, 0});
  const PanelDataset data = fixture::make_panel(a, -2, 4, Eigen::MatrixXd::Constant(10, 1, 3.0),
                                                Eigen::MatrixXd::Zero(10, 7));
  const NestedDesign d = run_rtnm(data, 2, {Metric::Mahalanobis, {}}, {}, 9);
  EXPECT_TRUE(verify_nested(d).ok());
}

TEST(Rtnm, DeterministicAndSerialisable) {
  const SimulatedPanel sim = small_panel(13, 400);
  const NestedDesign a = run_rtnm(sim.data, 4, {}, capped(10), 21);
  const NestedDesign b = run_rtnm(sim.data, 4, {}, capped(10), 21);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  const NestedDesign c = NestedDesign::from_json(nlohmann::json::parse(a.to_json().dump()));
  EXPECT_EQ(c.to_json().dump(), a.to_json().dump());
  EXPECT_NO_THROW(c.check_matches(sim.data));
}

TEST(Rtnm, CheckMatchesRejectsOtherPanels) {
  const SimulatedPanel one = small_panel(14, 300);
  const SimulatedPanel two = small_panel(15, 300);
  const NestedDesign d = run_rtnm(one.data, 4, {}, capped(10), 1);
  try {
    d.check_matches(two.data);
    FAIL() << "expected IndexMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexMismatch);
  }
}

TEST(Rtnm, EmptyCohortIsReported) {
  const PanelDataset data = fixture::make_panel(fixture::cohorts({1, 3, 0, 0}), -1, 4,
                                                Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(4, 6));
  try {
    run_rtnm(data, 3, {}, {}, 1);
    FAIL() << "expected EmptyCohort";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCohort);
  }
}

TEST(VerifyNested, ReportsExactlyTheCorruptedParent) {
  const SimulatedPanel sim = small_panel(16, 500);
  NestedDesign d = run_rtnm(sim.data, 4, {}, capped(10), 2);
  ASSERT_GE(d.level(1).strata.size(), 2u);
  auto& s = d.levels[2].strata[0];  // a level-3 stratum
  const int wrong = (s.parent + 1) % static_cast<int>(d.level(2).strata.size());
  s.parent = wrong;
  const NestingReport r = verify_nested(d);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].kind, NestingViolation::Kind::Parent);
  EXPECT_EQ(r.violations[0].g, 3);
  EXPECT_EQ(r.violations[0].stratum, 0);
}

TEST(VerifyNested, FlagsOutermostStratumMissingACohort) {
  // Hand-built design: level 1 holds {cohort-1, never}; level 2 holds
  // {cohort-2, never}. The level-1 stratum lacks its cohort-2 member.
  NestedDesign d;
  d.unit_ids = {"a", "b", "c", "d"};
  d.adoption = fixture::cohorts({1, 2, 0, 0});
  d.max_cohort = 2;
  d.levels.resize(2);
  d.levels[0].g = 1;
  d.levels[0].strata = {{{0, 2}, -1}, {{1, 3}, -1}};
  d.levels[1].g = 2;
  d.levels[1].strata = {{{1, 3}, 1}};
  const NestingReport r = verify_nested(d);
  ASSERT_FALSE(r.ok());
  bool coverage = false;
  for (const auto& v : r.violations) coverage |= v.kind == NestingViolation::Kind::Coverage && v.g == 1;
  EXPECT_TRUE(coverage);
}

TEST(Balance, StandardizedDifference) {
  EXPECT_DOUBLE_EQ(standardized_difference(1.0, 0.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(standardized_difference(0.0, 1.0, 2.0), 0.5);
  EXPECT_EQ(standardized_difference(3.0, 3.0, 0.0), 0.0);
  try {
    standardized_difference(1.0, 0.0, 0.0);
    FAIL() << "expected ZeroVariance";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
  }
}

TEST(Balance, IdenticalGroupsHaveZeroDifference) {
  // Cohort-1 unit and its comparison share every covariate value.
  Eigen::MatrixXd x(4, 1);
  x << 1.0, 1.0, 4.0, 4.0;
  const PanelDataset data = fixture::make_panel(fixture::cohorts({1, 0, 1, 0}), -1, 2, x,
                                                Eigen::MatrixXd::Zero(4, 4));
  NestedDesign d;
  d.unit_ids = data.unit_ids();
  d.adoption = data.adoption();
  d.max_cohort = 1;
  d.levels.resize(1);
  d.levels[0].g = 1;
  d.levels[0].strata = {{{0, 1}, -1}, {{2, 3}, -1}};
  const BalanceReport r = balance_report(data, d);
  ASSERT_EQ(r.rows.size(), 2u);  // periods -1 and 0
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.smd_before, 0.0);
    EXPECT_EQ(row.smd_after, 0.0);
  }
}

TEST(Balance, MatchingImprovesMostCovariates) {
  DgpConfig c;
  c.n_units = 1500;
  c.seed = 41;
  c.confounding = 1.0;
  c.resample_degenerate = true;
  const SimulatedPanel sim = generate_panel(c);
  MatchBounds b;
  b.max_stratum_size = 10;
  const BalanceReport r = balance_report(sim.data, run_rtnm(sim.data, 4, {}, b, 41));
  int better = 0;
  for (const auto& row : r.rows) better += row.smd_after <= row.smd_before ? 1 : 0;
  EXPECT_GT(2 * better, static_cast<int>(r.rows.size()));
}
