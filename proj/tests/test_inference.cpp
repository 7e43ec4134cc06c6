#include <gtest/gtest.h>

#include <cmath>

#include "rtnm/att.hpp"
#include "rtnm/bootstrap.hpp"
#include "rtnm/error.hpp"
#include "rtnm/homogeneity.hpp"
#include "rtnm/random.hpp"

using namespace rtnm;

namespace {

AttVector rows_only(const GtIndex& index, const Eigen::MatrixXd& rows) {
  AttVector a;
  a.index = index;
  a.block_contributions = rows;
  a.values = rows.colwise().mean().transpose();
  a.block_ids.resize(static_cast<std::size_t>(rows.rows()));
  return a;
}

HypothesisSpec difference(const GtIndex& index) {
  Eigen::MatrixXd r(1, 2);
  r << 1.0, -1.0;
  return custom_hypothesis(index, r, "tau(1,1) = tau(1,2)");
}

}  // namespace

// Published known-answer vectors for Philox4x32-10.
TEST(Random, PhiloxKnownAnswers) {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  EXPECT_EQ(Philox4x32::block(C{0, 0, 0, 0}, K{0, 0}),
            (C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::block(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                              K{0xffffffffu, 0xffffffffu}),
            (C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::block(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                              K{0xa4093822u, 0x299f31d0u}),
            (C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Bootstrap, TwoBlockResamplingVariance) {
  // Means of two draws from {0, 2}: 0, 1, 2 with probabilities 1/4, 1/2, 1/4.
  Eigen::MatrixXd rows(2, 1);
  rows << 0.0, 2.0;
  const CovarianceEstimate c = bootstrap_covariance(rows_only(GtIndex({{1, 1}}), rows), 10000, 7);
  EXPECT_NEAR(c.sigma(0, 0), 0.5, 0.05);
}

TEST(Bootstrap, IdenticalRowsGiveZeroCovariance) {
  const Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(5, 3, 1.25);
  const CovarianceEstimate c =
      bootstrap_covariance(rows_only(GtIndex({{1, 1}, {1, 2}, {2, 2}}), rows), 200, 3);
  EXPECT_EQ(c.sigma, Eigen::MatrixXd::Zero(3, 3));
  EXPECT_FALSE(c.repaired);
}

TEST(Bootstrap, ReplicatesAreReproducibleAndKeyed) {
  RandomStream rng(1, 1);
  Eigen::MatrixXd rows(20, 2);
  for (Index i = 0; i < rows.size(); ++i) rows(i) = rng.normal();
  const Eigen::MatrixXd a = bootstrap_replicates(rows, 50, covariance_key(9));
  EXPECT_EQ(a, bootstrap_replicates(rows, 50, covariance_key(9)));
  EXPECT_NE(a, bootstrap_replicates(rows, 50, test_key(9)));
  EXPECT_NE(covariance_key(9), test_key(9));
  // Replicate r is an average of n1 rows drawn with replacement.
  RandomStream draw(covariance_key(9), 4);
  Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(2);
  for (int k = 0; k < 20; ++k) expect += rows.row(static_cast<Index>(draw.below(20)));
  EXPECT_LE((a.row(4) - expect / 20.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bootstrap, CovarianceIsSymmetricWithSampleDivisor) {
  RandomStream rng(2, 2);
  Eigen::MatrixXd reps(30, 3);
  for (Index i = 0; i < reps.size(); ++i) reps(i) = rng.normal();
  const Eigen::MatrixXd s = replicate_covariance(reps);
  const Eigen::MatrixXd centred = reps.rowwise() - reps.colwise().mean();
  const Eigen::MatrixXd direct = centred.transpose() * centred / 29.0;
  EXPECT_LE((s - direct).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(s, s.transpose());
}

TEST(Bootstrap, FlooringRepairsNegativeEigenvalues) {
  Eigen::Matrix2d m;
  m << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  const PsdRepair r = floor_eigenvalues(m);
  EXPECT_TRUE(r.repaired);
  EXPECT_NEAR(r.min_eigenvalue, -1.0, 1e-12);
  Eigen::Matrix2d expect;
  expect << 1.5, 1.5, 1.5, 1.5;
  EXPECT_LE((r.matrix - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_FALSE(floor_eigenvalues(Eigen::Matrix2d::Identity()).repaired);
}

TEST(Bootstrap, RejectsDegenerateInput) {
  EXPECT_THROW(bootstrap_covariance(rows_only(GtIndex({{1, 1}}), Eigen::MatrixXd(0, 1)), 10, 1), Error);
  EXPECT_THROW(bootstrap_covariance(rows_only(GtIndex({{1, 1}}), Eigen::MatrixXd::Ones(3, 1)), 1, 1),
               Error);
}

TEST(Bootstrap, NormalCriticalValue) {
  EXPECT_NEAR(normal_critical_value(0.05), 1.959963984540054, 1e-8);
  EXPECT_NEAR(normal_critical_value(0.01), 2.5758293035489004, 1e-8);
  EXPECT_NEAR(normal_critical_value(0.001), 3.2905267314918945, 1e-8);
}

TEST(Hypotheses, StandardFamilyOnFourCohortsSixPeriods) {
  const GtIndex idx = GtIndex::all(4, 6);
  const auto hs = standard_hypotheses(idx);
  ASSERT_EQ(hs.size(), 10u);
  std::vector<std::string> labels;
  for (const auto& h : hs) labels.push_back(h.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"g=1", "g=2", "g=3", "g=4", "t=4", "t=5", "t=6",
                                              "e=0", "e=1", "e=2"}));
  EXPECT_EQ(build_hypothesis(idx, HypothesisKind::FixedCohort, 4).q(), 2);
  EXPECT_EQ(build_hypothesis(idx, HypothesisKind::FixedLag, 0).q(), 3);
  EXPECT_EQ(build_hypothesis(idx, HypothesisKind::FixedTime, 6).q(), 3);
  for (const auto& h : hs) {
    EXPECT_LE((h.R.rowwise().sum()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(h.R.cols(), 18);
  }
}

TEST(Hypotheses, TooFewCells) {
  const GtIndex idx({{1, 1}, {1, 2}, {2, 2}});
  try {
    build_hypothesis(idx, HypothesisKind::FixedCohort, 2);
    FAIL() << "expected TooFewCells";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewCells);
  }
}

TEST(Hypotheses, CustomContrastsAreChecked) {
  const GtIndex idx({{1, 1}, {1, 2}});
  Eigen::MatrixXd not_contrast(1, 2);
  not_contrast << 1.0, 0.0;
  EXPECT_THROW(custom_hypothesis(idx, not_contrast, ""), Error);
  Eigen::MatrixXd dependent(2, 2);
  dependent << 1.0, -1.0, 2.0, -2.0;
  EXPECT_THROW(custom_hypothesis(idx, dependent, ""), Error);
}

TEST(Wald, ProjectionOfTwoCells) {
  const GtIndex idx({{1, 1}, {1, 2}});
  Eigen::Vector2d tau(1.0, 3.0);
  const Eigen::VectorXd p = null_projection(difference(idx).R, tau);
  EXPECT_NEAR(p(0), 2.0, 1e-14);
  EXPECT_NEAR(p(1), 2.0, 1e-14);
}

TEST(Wald, ProjectionSatisfiesNullForRandomContrasts) {
  RandomStream rng(5, 5);
  const GtIndex idx = GtIndex::all(4, 6);
  for (const auto& h : standard_hypotheses(idx)) {
    Eigen::VectorXd tau(18);
    for (Index k = 0; k < 18; ++k) tau(k) = 3.0 * rng.normal();
    EXPECT_LE((h.R * null_projection(h.R, tau)).cwiseAbs().maxCoeff(), 1e-10) << h.label;
  }
}

TEST(Wald, HandExampleAndRowScaling) {
  const GtIndex idx({{1, 1}, {1, 2}});
  const Eigen::Vector2d tau(1.0, 3.0);
  const Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity();
  const Eigen::MatrixXd reps = Eigen::MatrixXd::Zero(4, 2);
  HypothesisSpec spec = difference(idx);
  const TestResult r = wald_test_from_replicates(tau, sigma, spec, reps);
  EXPECT_EQ(r.w_obs, 2.0);
  EXPECT_EQ(r.q, 1);
  EXPECT_EQ(r.f_stat, 2.0);

  RandomStream rng(8, 8);
  const GtIndex big = GtIndex::all(4, 6);
  Eigen::VectorXd t(18);
  Eigen::MatrixXd a(18, 18);
  for (Index k = 0; k < 18; ++k) t(k) = rng.normal();
  for (Index k = 0; k < a.size(); ++k) a(k) = rng.normal();
  const Eigen::MatrixXd s = a * a.transpose() / 18.0 + Eigen::MatrixXd::Identity(18, 18);
  for (auto h : standard_hypotheses(big)) {
    const double w = wald_test_from_replicates(t, s, h, Eigen::MatrixXd::Zero(2, 18)).w_obs;
    for (Index row = 0; row < h.R.rows(); ++row) h.R.row(row) *= 0.25 + static_cast<double>(row);
    const double w2 = wald_test_from_replicates(t, s, h, Eigen::MatrixXd::Zero(2, 18)).w_obs;
    EXPECT_NEAR(w, w2, 1e-10 * std::max(1.0, w)) << h.label;
  }
}

TEST(Wald, PValueCountsTiesAsExtreme) {
  Eigen::VectorXd w(4);
  w << 0.5, 2.0, 3.0, 1.0;
  EXPECT_DOUBLE_EQ(bootstrap_p_value(w, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(bootstrap_p_value(w, 5.0), 0.0);
  EXPECT_EQ(significance_stars(0.0005), "***");
  EXPECT_EQ(significance_stars(0.005), "**");
  EXPECT_EQ(significance_stars(0.03), "*");
  EXPECT_EQ(significance_stars(0.05), "");
}

TEST(Wald, SingularContrastCovariance) {
  const GtIndex idx({{1, 1}, {1, 2}, {1, 3}});
  const auto h = build_hypothesis(idx, HypothesisKind::FixedCohort, 1);
  const Eigen::Vector3d tau(1.0, 2.0, 4.0);
  // Perfectly correlated first two cells: one contrast has zero variance.
  Eigen::Matrix3d s;
  s << 1, 1, 0, 1, 1, 0, 0, 0, 1;
  const TestResult r = wald_test_from_replicates(tau, s, h, Eigen::MatrixXd::Zero(3, 3));
  EXPECT_TRUE(r.pseudo_inverse);
  try {
    wald_test_from_replicates(tau, Eigen::Matrix3d::Zero(), h, Eigen::MatrixXd::Zero(3, 3));
    FAIL() << "expected SingularContrastCovariance";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularContrastCovariance);
  }
}

TEST(Wald, NullRestrictedReplicatesAreCentredOnTheNull) {
  RandomStream rng(3, 9);
  const GtIndex idx({{1, 1}, {1, 2}, {2, 2}});
  Eigen::MatrixXd rows(60, 3);
  for (Index i = 0; i < rows.size(); ++i) rows(i) = rng.normal();
  rows.col(1).array() += 5.0;  // strongly non-null
  const AttVector att = rows_only(idx, rows);
  const CovarianceEstimate sigma = bootstrap_covariance(att, 500, 4);
  const auto h = build_hypothesis(idx, HypothesisKind::FixedCohort, 1);
  const TestResult r = wald_test(att, sigma, h, 500, 4);
  EXPECT_LE((h.R * r.tau_null).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(r.w_star.size(), 500);
  EXPECT_LT(r.p_value, 0.01);
  // Replicate statistics do not depend on how far tau is from the null.
  AttVector shifted = att;
  shifted.block_contributions.col(1).array() -= 5.0;
  shifted.values(1) -= 5.0;
  const TestResult s = wald_test(shifted, sigma, h, 500, 4);
  EXPECT_LE((r.w_star - s.w_star).cwiseAbs().maxCoeff(), 1e-9);
}
