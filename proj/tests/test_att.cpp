#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "rtnm/att.hpp"
#include "rtnm/bootstrap.hpp"
#include "rtnm/design.hpp"
#include "rtnm/error.hpp"
#include "rtnm/simulate.hpp"

using namespace rtnm;

namespace {

// Design with only a level-1 layer over the given strata.
NestedDesign one_level(const PanelDataset& data, std::vector<std::vector<Index>> strata) {
  NestedDesign d;
  d.unit_ids = data.unit_ids();
  d.adoption = data.adoption();
  d.max_cohort = 1;
  d.levels.resize(1);
  d.levels[0].g = 1;
  for (auto& s : strata) d.levels[0].strata.push_back({std::move(s), -1});
  return d;
}

PanelDataset with_outcomes(const PanelDataset& d, const Eigen::MatrixXd& y) {
  return PanelDataset(d.unit_ids(), d.t0(), d.t_max(), d.covariate_names(), d.covariates(),
                      d.adoption(), y);
}

struct Fitted {
  SimulatedPanel sim;
  NestedDesign design;
  GtIndex index;
};

Fitted fitted(std::uint64_t seed, double confounding = 0.5, Index n = 800) {
  DgpConfig c;
  c.n_units = n;
  c.seed = seed;
  c.confounding = confounding;
  c.resample_degenerate = true;
  c.effect.value = 1.5;
  SimulatedPanel sim = generate_panel(c);
  MatchBounds b;
  b.max_stratum_size = 10;
  NestedDesign d = run_rtnm(sim.data, 4, {}, b, seed);
  return {std::move(sim), std::move(d), GtIndex::all(4, 6)};
}

}  // namespace

TEST(GtIndex, ValidatesCells) {
  EXPECT_EQ(GtIndex::all(4, 6).size(), 18);
  EXPECT_THROW(GtIndex({{2, 1}}), Error);
  EXPECT_THROW(GtIndex({{1, 1}, {1, 1}}), Error);
  EXPECT_THROW(GtIndex({{0, 1}}), Error);
  const GtIndex idx({{1, 2}, {2, 2}});
  EXPECT_EQ(idx.find(2, 2).value(), 1);
  EXPECT_FALSE(idx.find(3, 3).has_value());
  EXPECT_EQ(GtIndex::from_json(idx.to_json()), idx);
}

TEST(EstimateAtt, OneStratumDifferenceOfMeans) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(3, 2);
  y.col(1) << 5.0, 2.0, 4.0;
  const PanelDataset data =
      fixture::make_panel(fixture::cohorts({1, 0, 0}), 0, 1, Eigen::MatrixXd::Zero(3, 1), y);
  const AttVector a = estimate_att(data, one_level(data, {{0, 1, 2}}), GtIndex({{1, 1}}));
  EXPECT_EQ(a.values(0), 2.0);
  ASSERT_EQ(a.n_blocks(), 1);
  EXPECT_EQ(a.block_contributions(0, 0), 2.0);
}

TEST(EstimateAtt, StrataWeightedByTreatedCount) {
  // Stratum A: one treated, effect 1. Stratum B: three treated, effect 3.
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(6, 2);
  y.col(1) << 1.0, 0.0, 3.0, 3.0, 3.0, 0.0;
  const PanelDataset data = fixture::make_panel(fixture::cohorts({1, 0, 1, 1, 1, 0}), 0, 1,
                                                Eigen::MatrixXd::Zero(6, 1), y);
  const AttVector a = estimate_att(data, one_level(data, {{0, 1}, {2, 3, 4, 5}}), GtIndex({{1, 1}}));
  EXPECT_DOUBLE_EQ(a.values(0), 2.5);
  EXPECT_NEAR(a.block_contributions.col(0).mean(), 2.5, 1e-12);
}

TEST(EstimateAtt, StrataWithoutComparisonsAreDropped) {
  // At t = 2 the cohort-2 unit is no longer a comparison for stratum B.
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(5, 3);
  y.col(2) << 4.0, 1.0, 9.0, 0.0, 0.0;
  const PanelDataset data = fixture::make_panel(fixture::cohorts({1, 0, 1, 2, 0}), 0, 2,
                                                Eigen::MatrixXd::Zero(5, 1), y);
  const NestedDesign d = one_level(data, {{0, 1}, {2, 3}});
  const AttVector a = estimate_att(data, d, GtIndex({{1, 2}}));
  EXPECT_DOUBLE_EQ(a.values(0), 3.0);
  EXPECT_EQ(a.strata_used[0], 1);
  EXPECT_EQ(a.strata_dropped[0], 1);

  const NestedDesign lonely = one_level(data, {{2, 3}, {0, 1, 4}});
  const NestedDesign only_b = one_level(data, {{2, 3}});
  EXPECT_NO_THROW(estimate_att(data, lonely, GtIndex({{1, 2}})));
  try {
    estimate_att(data, only_b, GtIndex({{1, 2}}));
    FAIL() << "expected EmptyCell";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCell);
  }
}

TEST(EstimateAtt, BlockRowsAverageToEstimate) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Fitted f = fitted(seed);
    for (Adjustment adj : {Adjustment::None, Adjustment::Linear}) {
      const AttVector a = estimate_att(f.sim.data, f.design, f.index, adj);
      EXPECT_EQ(a.n_blocks(), static_cast<Index>(f.design.blocks().size()));
      const Eigen::VectorXd mean = a.block_contributions.colwise().mean().transpose();
      EXPECT_LE((mean - a.values).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(EstimateAtt, InjectedEffectMovesOnlyItsCell) {
  const Fitted f = fitted(4);
  const AttVector base = estimate_att(f.sim.data, f.design, f.index);
  const double delta = 0.75;
  for (const auto& [g, t] : {std::pair{1, 1}, std::pair{2, 5}, std::pair{4, 6}}) {
    Eigen::MatrixXd y = f.sim.data.outcomes();
    for (Index i = 0; i < f.sim.data.n_units(); ++i) {
      if (f.sim.data.adoption(i) == Cohort::at(g)) y(i, t - f.sim.data.t0()) += delta;
    }
    const AttVector moved = estimate_att(with_outcomes(f.sim.data, y), f.design, f.index);
    for (Index k = 0; k < f.index.size(); ++k) {
      const bool hit = f.index[k].g == g && f.index[k].t == t;
      EXPECT_NEAR(moved.values(k) - base.values(k), hit ? delta : 0.0, 1e-12);
    }
  }
}

TEST(EstimateAtt, PeriodShiftLeavesEstimatesUnchanged) {
  const Fitted f = fitted(5);
  Eigen::MatrixXd y = f.sim.data.outcomes();
  y.col(4) = (y.col(4).array() + 10.0).matrix();  // period 2
  const PanelDataset shifted = with_outcomes(f.sim.data, y);
  for (Adjustment adj : {Adjustment::None, Adjustment::Linear}) {
    const AttVector a = estimate_att(f.sim.data, f.design, f.index, adj);
    const AttVector b = estimate_att(shifted, f.design, f.index, adj);
    EXPECT_LE((a.values - b.values).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(EstimateAtt, LinearAdjustmentIsTheWeightedRegressionCoefficient) {
  const Fitted f = fitted(6);
  const AttVector a = estimate_att(f.sim.data, f.design, f.index, Adjustment::Linear);
  const PanelDataset& data = f.sim.data;
  for (Index k = 0; k < f.index.size(); ++k) {
    const GtCell c = f.index[k];
    // Rebuild the matched sample and solve the weighted normal equations.
    std::vector<Index> units;
    std::vector<double> w, dvec;
    for (const auto& s : f.design.level(c.g).strata) {
      std::vector<Index> tr, co;
      for (Index u : s.members) {
        if (data.adoption(u) == Cohort::at(c.g)) tr.push_back(u);
        else if (data.adoption(u).untreated_at(c.t)) co.push_back(u);
      }
      if (tr.empty() || co.empty()) continue;
      for (Index u : tr) units.push_back(u), w.push_back(1.0), dvec.push_back(1.0);
      for (Index u : co) {
        units.push_back(u);
        w.push_back(static_cast<double>(tr.size()) / static_cast<double>(co.size()));
        dvec.push_back(0.0);
      }
    }
    const Index n = static_cast<Index>(units.size());
    const Index p = data.window_length(c.g);
    Eigen::MatrixXd z(n, p + 2);
    Eigen::VectorXd y(n);
    for (Index r = 0; r < n; ++r) {
      const Index u = units[static_cast<std::size_t>(r)];
      z(r, 0) = 1.0;
      z(r, 1) = dvec[static_cast<std::size_t>(r)];
      for (Index j = 0; j < p; ++j) z(r, 2 + j) = data.covariates()(u, j);
      y(r) = data.outcome(u, c.t);
    }
    const Eigen::VectorXd wv = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
    const Eigen::MatrixXd ztw = z.transpose() * wv.asDiagonal();
    const Eigen::VectorXd beta = (ztw * z).fullPivLu().solve(ztw * y);
    EXPECT_NEAR(a.values(k), beta(1), 1e-8) << f.index.label(k);
  }
}

TEST(EstimateAtt, ZeroEffectWithinThreeStandardErrors) {
  DgpConfig c;
  c.n_units = 1500;
  c.seed = 31;
  c.effect.value = 0.0;
  c.resample_degenerate = true;
  const SimulatedPanel sim = generate_panel(c);
  MatchBounds b;
  b.max_stratum_size = 10;
  const NestedDesign d = run_rtnm(sim.data, 4, {}, b, 31);
  const AttVector a = estimate_att(sim.data, d, GtIndex::all(4, 6), Adjustment::Linear);
  const Eigen::VectorXd se = bootstrap_covariance(a, 1000, 31).standard_errors();
  for (Index k = 0; k < a.values.size(); ++k) {
    EXPECT_LT(std::abs(a.values(k)), 3.0 * se(k)) << a.index.label(k);
  }
}

TEST(EstimateAtt, ErrorsForCellsOutsideTheDesign) {
  const Fitted f = fitted(7, 0.0, 400);
  try {
    estimate_att(f.sim.data, f.design, GtIndex({{5, 6}}));
    FAIL() << "expected IndexMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexMismatch);
  }
  try {
    estimate_att(f.sim.data.without_outcomes(), f.design, f.index);
    FAIL() << "expected MissingOutcome";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingOutcome);
  }
}

TEST(EstimateAtt, JsonRoundTrip) {
  const Fitted f = fitted(8, 0.0, 400);
  const AttVector a = estimate_att(f.sim.data, f.design, f.index, Adjustment::Linear);
  const AttVector b = AttVector::from_json(nlohmann::json::parse(a.to_json().dump()));
  EXPECT_EQ(b.values, a.values);
  EXPECT_EQ(b.block_contributions, a.block_contributions);
  EXPECT_EQ(b.index, a.index);
  EXPECT_EQ(b.adjust, Adjustment::Linear);
}

TEST(NaiveAtt, DifferenceOfGroupMeans) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(5, 4);
  y.col(2) << 6.0, 2.0, 1.0, 3.0, 5.0;  // period 2
  const PanelDataset data = fixture::make_panel(fixture::cohorts({2, 2, 1, 3, 0}), 0, 3,
                                                Eigen::MatrixXd::Zero(5, 1), y);
  const AttVector a = naive_att(data, GtIndex({{2, 2}, {1, 2}}));
  EXPECT_DOUBLE_EQ(a.values(0), 4.0 - 4.0);
  EXPECT_DOUBLE_EQ(a.values(1), 1.0 - 4.0);
  const PanelDataset no_cohort_two = fixture::make_panel(
      fixture::cohorts({1, 0}), 0, 2, Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Zero(2, 3));
  try {
    naive_att(no_cohort_two, GtIndex({{2, 2}}));
    FAIL() << "expected EmptyCell";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCell);
  }
}
