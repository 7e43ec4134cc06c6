#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "rtnm/att.hpp"

namespace rtnm {

// Substream keys. The covariance run and the test run draw from different
// keys even when given the same user seed, so the two resampling passes are
// independent.
std::uint64_t covariance_key(std::uint64_t seed);
std::uint64_t test_key(std::uint64_t seed);

// B x K matrix of resample means. Replicate r draws n1 block indices
// uniformly with replacement from RandomStream(key, r) and averages the
// corresponding rows of `contributions`.
Eigen::MatrixXd bootstrap_replicates(const Eigen::MatrixXd& contributions, int B,
                                     std::uint64_t key);

// Sample covariance (divisor B - 1) of replicate rows, summed in replicate
// order.
Eigen::MatrixXd replicate_covariance(const Eigen::MatrixXd& replicates);

struct PsdRepair {
  Eigen::MatrixXd matrix;
  double min_eigenvalue = 0.0;  // before repair
  bool repaired = false;
};

// Floors negative eigenvalues of a symmetric matrix at 0.
PsdRepair floor_eigenvalues(const Eigen::MatrixXd& sigma);

struct CovarianceEstimate {
  GtIndex index;
  Eigen::MatrixXd sigma;
  int B = 0;
  std::uint64_t seed = 0;
  bool repaired = false;
  double min_eigenvalue = 0.0;
  Eigen::MatrixXd replicates;  // empty unless requested

  Eigen::VectorXd standard_errors() const { return sigma.diagonal().cwiseMax(0.0).cwiseSqrt(); }

  nlohmann::json to_json() const;
  static CovarianceEstimate from_json(const nlohmann::json& j);
};

CovarianceEstimate bootstrap_covariance(const AttVector& att, int B, std::uint64_t seed,
                                        bool keep_replicates = false);

// Two-sided standard normal critical value z with P(|Z| > z) = alpha.
double normal_critical_value(double alpha);

}  // namespace rtnm
