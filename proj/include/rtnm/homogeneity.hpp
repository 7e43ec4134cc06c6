#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rtnm/att.hpp"
#include "rtnm/bootstrap.hpp"

namespace rtnm {

enum class HypothesisKind { FixedCohort, FixedTime, FixedLag, Custom };

std::string to_string(HypothesisKind kind);
HypothesisKind parse_hypothesis_kind(const std::string& s);

// H0: R tau = 0 over a GtIndex.
struct HypothesisSpec {
  HypothesisKind kind = HypothesisKind::Custom;
  int param = 0;
  Eigen::MatrixXd R;  // q x K
  std::string label;        // e.g. "g=4"
  std::string description;  // e.g. "tau(4,4) = tau(4,5) = tau(4,6)"

  Index q() const { return R.rows(); }
};

// Equality of the selected cells (t >= g* with g = g*; g <= t* with t = t*;
// t - g = e*), written as adjacent differences in index order.
HypothesisSpec build_hypothesis(const GtIndex& index, HypothesisKind kind, int param);

// User-supplied contrasts. Rows must sum to 0 and have full row rank.
HypothesisSpec custom_hypothesis(const GtIndex& index, Eigen::MatrixXd R, std::string description);

// The homogeneity family used for a g = 1..G, t <= T grid: one fixed-cohort
// test per cohort with at least two cells, and the fixed-time and fixed-lag
// tests whose cells span every cohort of the index.
std::vector<HypothesisSpec> standard_hypotheses(const GtIndex& index);

// Projection of tau onto {R tau = 0}.
Eigen::VectorXd null_projection(const Eigen::MatrixXd& R, const Eigen::VectorXd& tau);

struct TestResult {
  std::string label;
  std::string description;
  double w_obs = 0.0;
  double f_stat = 0.0;  // w_obs / q
  double p_value = 1.0;
  int q = 0;
  int B = 0;
  std::uint64_t seed = 0;
  bool pseudo_inverse = false;
  Eigen::VectorXd tau_null;
  Eigen::VectorXd w_star;

  nlohmann::json to_json() const;
};

// Significance marks at 0.05 / 0.01 / 0.001.
std::string significance_stars(double p);

// Monte-Carlo p-value: share of replicate statistics >= observed.
double bootstrap_p_value(const Eigen::VectorXd& w_star, double w_obs);

// Null-restricted bootstrap Wald test. Sigma is held fixed; the replicate
// draws come from a key independent of the covariance run. A singular
// R Sigma R' falls back to its pseudo-inverse and is flagged.
TestResult wald_test(const AttVector& att, const CovarianceEstimate& sigma,
                     const HypothesisSpec& spec, int B, std::uint64_t seed);

// Same test given replicate means drawn elsewhere.
TestResult wald_test_from_replicates(const Eigen::VectorXd& tau, const Eigen::MatrixXd& sigma,
                                     const HypothesisSpec& spec, const Eigen::MatrixXd& replicates);

}  // namespace rtnm
