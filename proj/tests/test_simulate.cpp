#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rtnm/error.hpp"
#include "rtnm/panel.hpp"
#include "rtnm/simulate.hpp"
#include "rtnm/study.hpp"

using namespace rtnm;

namespace {

std::map<Cohort, Index> cohort_sizes(const PanelDataset& d) {
  std::map<Cohort, Index> m;
  for (const Cohort& c : d.adoption()) ++m[c];
  return m;
}

}  // namespace

TEST(Simulate, SameSeedSamePanel) {
  DgpConfig c;
  c.n_units = 300;
  c.seed = 4;
  c.resample_degenerate = true;
  std::ostringstream a, b, other;
  write_panel(a, generate_panel(c).data);
  write_panel(b, generate_panel(c).data);
  c.seed = 5;
  write_panel(other, generate_panel(c).data);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), other.str());
}

TEST(Simulate, ShapeAndAdoptionWindow) {
  DgpConfig c;
  c.n_units = 500;
  c.seed = 6;
  const SimulatedPanel s = generate_panel(c);
  EXPECT_EQ(s.data.n_units(), 500);
  EXPECT_EQ(s.data.t0(), -2);
  EXPECT_EQ(s.data.t_max(), 6);
  EXPECT_EQ(s.data.covariate_names(), (std::vector<std::string>{"y", "x1", "x2"}));
  for (const Cohort& g : s.data.adoption()) {
    EXPECT_TRUE(g.is_never() || (g.period() >= 1 && g.period() <= 4));
  }
  // The "y" covariate is the observed outcome.
  for (Index i = 0; i < 20; ++i)
    for (int t = 1; t <= 6; ++t) EXPECT_EQ(s.data.covariate(i, t, 0), s.data.outcome(i, t));
}

TEST(Simulate, QuotasFixCohortSizes) {
  DgpConfig c;
  c.n_units = 1000;
  c.cohort_sizes = std::vector<Index>{50, 60, 70, 80};
  c.confounding = 1.0;
  c.seed = 2;
  const auto sizes = cohort_sizes(generate_panel(c).data);
  EXPECT_EQ(sizes.at(Cohort::at(1)), 50);
  EXPECT_EQ(sizes.at(Cohort::at(2)), 60);
  EXPECT_EQ(sizes.at(Cohort::at(3)), 70);
  EXPECT_EQ(sizes.at(Cohort::at(4)), 80);
  EXPECT_EQ(sizes.at(Cohort::never()), 740);
}

TEST(Simulate, TruthFollowsTheEffectMap) {
  DgpConfig c;
  c.n_units = 400;
  c.seed = 8;
  c.resample_degenerate = true;
  c.effect.kind = EffectMap::Kind::Cohort;
  c.effect.values = {1.0, 2.0, 3.0, 4.0};
  const SimulatedPanel s = generate_panel(c);
  for (Index k = 0; k < s.truth.index.size(); ++k) {
    EXPECT_NEAR(s.truth.values(k), static_cast<double>(s.truth.index[k].g), 1e-12);
  }
  c.effect.kind = EffectMap::Kind::Lag;
  c.effect.values = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
  const SimulatedPanel l = generate_panel(c);
  for (Index k = 0; k < l.truth.index.size(); ++k) {
    const GtCell cell = l.truth.index[k];
    EXPECT_NEAR(l.truth.values(k), 0.5 * (cell.t - cell.g), 1e-12);
  }
}

TEST(Simulate, HeterogeneousEffectsAverageOverTheCohort) {
  DgpConfig c;
  c.n_units = 600;
  c.seed = 12;
  c.resample_degenerate = true;
  c.effect.value = 1.0;
  c.effect_sd = 1.0;
  const SimulatedPanel s = generate_panel(c);
  // Finite-population truth: not exactly 1, but the same for every t of a cohort.
  for (Index k = 1; k < s.truth.index.size(); ++k) {
    if (s.truth.index[k].g == s.truth.index[k - 1].g) {
      EXPECT_NEAR(s.truth.values(k), s.truth.values(k - 1), 1e-12);
    }
  }
  EXPECT_NE(s.truth.values(0), 1.0);
}

TEST(Simulate, BinaryOutcomes) {
  DgpConfig c;
  c.n_units = 300;
  c.seed = 3;
  c.binary = true;
  c.resample_degenerate = true;
  const SimulatedPanel s = generate_panel(c);
  for (Index i = 0; i < s.data.n_units(); ++i)
    for (int t = s.data.t0(); t <= s.data.t_max(); ++t) {
      const double y = s.data.outcome(i, t);
      EXPECT_TRUE(y == 0.0 || y == 1.0);
    }
}

TEST(Simulate, DegenerateCohorts) {
  DgpConfig c;
  c.n_units = 6;
  c.baseline_hazard = 0.02;
  c.hazard_floor = 0.01;
  c.seed = 1;
  try {
    generate_panel(c);
    FAIL() << "expected DegenerateCohort";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateCohort);
  }
  c.n_units = 60;
  c.baseline_hazard = 0.2;
  c.resample_degenerate = true;
  EXPECT_NO_THROW(generate_panel(c));
}

TEST(Simulate, ConfigJson) {
  DgpConfig c;
  c.n_units = 123;
  c.confounding = 0.7;
  c.effect.kind = EffectMap::Kind::Cohort;
  c.effect.values = {1, 2, 3, 4};
  c.cohort_sizes = std::vector<Index>{1, 2, 3, 4};
  const DgpConfig back = DgpConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_THROW(DgpConfig::from_json(nlohmann::json{{"n_unit", 5}}), Error);
  const DgpConfig bare = DgpConfig::from_json(nlohmann::json{{"effect", 2.5}});
  EXPECT_EQ(bare.effect(1, 3), 2.5);
  DgpConfig bad;
  bad.baseline_hazard = 1.5;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Study, SmallRunSummaries) {
  StudyConfig c;
  c.dgp.n_units = 400;
  c.dgp.resample_degenerate = true;
  c.dgp.effect.value = 1.0;
  c.reps = 6;
  c.boot = 100;
  c.test_boot = 100;
  c.adjust = Adjustment::Linear;
  const StudyResult r = run_study(c);
  ASSERT_EQ(r.reps.size(), 6u);
  EXPECT_EQ(r.hypotheses.size(), 10u);
  EXPECT_LE((r.mean_truth().array() - 1.0).abs().maxCoeff(), 1e-12);
  const Eigen::VectorXd cover = r.coverage();
  EXPECT_TRUE((cover.array() >= 0.0).all() && (cover.array() <= 1.0).all());
  for (double rate : r.rejection_rate(0.05)) EXPECT_TRUE(rate >= 0.0 && rate <= 1.0);
  const StudyResult again = run_study(c);
  EXPECT_EQ(again.bias(), r.bias());
  EXPECT_EQ(StudyConfig::from_json(c.to_json()).to_json(), c.to_json());
}
