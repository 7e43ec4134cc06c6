#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rtnm/att.hpp"
#include "rtnm/distance.hpp"
#include "rtnm/full_match.hpp"
#include "rtnm/simulate.hpp"

namespace rtnm {

// Monte-Carlo evaluation of the whole pipeline on simulated panels.
struct StudyConfig {
  DgpConfig dgp;
  int reps = 200;
  DistanceSpec spec;
  MatchBounds bounds;
  Adjustment adjust = Adjustment::None;
  int boot = 1000;       // covariance replicates; 0 skips inference
  int test_boot = 1000;  // Wald replicates; 0 skips the homogeneity tests
  double alpha = 0.05;
  std::uint64_t seed = 1;

  StudyConfig() { bounds.max_stratum_size = 10; }

  nlohmann::json to_json() const;
  static StudyConfig from_json(const nlohmann::json& j);
};

struct ReplicateResult {
  std::uint64_t dgp_seed = 0;
  Eigen::VectorXd truth;
  Eigen::VectorXd estimate;
  Eigen::VectorXd naive;
  Eigen::VectorXd se;            // empty when inference is skipped
  std::vector<double> p_values;  // one per standard hypothesis
};

struct StudyResult {
  GtIndex index;
  std::vector<std::string> hypotheses;
  std::vector<ReplicateResult> reps;

  // Per cell, over replicates.
  Eigen::VectorXd mean_truth() const;
  Eigen::VectorXd bias() const;        // mean of estimate - truth
  Eigen::VectorXd naive_bias() const;  // mean of naive - truth
  Eigen::VectorXd rmse() const;
  Eigen::VectorXd mean_se() const;
  Eigen::VectorXd coverage(double level = 0.95) const;  // normal intervals
  // Per hypothesis: share of replicates with p < alpha.
  std::vector<double> rejection_rate(double alpha) const;

  double mean_abs_bias() const { return bias().cwiseAbs().mean(); }
  double mean_abs_naive_bias() const { return naive_bias().cwiseAbs().mean(); }
};

// Replicate r simulates with seed mix64(config.seed, r) and derives its design
// and bootstrap seeds from that value. `progress` is called after each
// replicate finishes (possibly from a worker thread).
StudyResult run_study(const StudyConfig& config,
                      const std::function<void(int)>& progress = {});

// g,t,truth,bias,naive_bias,rmse,mean_se,coverage
void write_study_cells(std::ostream& out, const StudyResult& result);
// hypothesis,rejection_rate
void write_study_tests(std::ostream& out, const StudyResult& result, double alpha);

}  // namespace rtnm
