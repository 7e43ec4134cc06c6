#include "rtnm/bootstrap.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "rtnm/error.hpp"
#include "rtnm/parallel.hpp"
#include "rtnm/random.hpp"

namespace rtnm {

std::uint64_t covariance_key(std::uint64_t seed) { return mix64(seed, 0x636f76ULL); }
std::uint64_t test_key(std::uint64_t seed) { return mix64(seed, 0x77616c64ULL); }

Eigen::MatrixXd bootstrap_replicates(const Eigen::MatrixXd& contributions, int B,
                                     std::uint64_t key) {
  const Index n1 = contributions.rows();
  const Index K = contributions.cols();
  if (n1 == 0) throw Error(ErrorCode::NoBlockContributions, "no block contributions to resample");
  if (B < 1) throw Error(ErrorCode::InvalidArgument, "replicate count must be positive");

  // Rows are taken relative to row 0 so identical rows resample exactly.
  const Eigen::RowVectorXd base = contributions.row(0);
  const Eigen::MatrixXd delta = contributions.rowwise() - base;
  Eigen::MatrixXd out(B, K);
  parallel_for(static_cast<std::size_t>(B), [&](std::size_t r) {
    RandomStream rng(key, r);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(n1);
    for (Index draw = 0; draw < n1; ++draw) {
      counts(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n1)))) += 1.0;
    }
    out.row(static_cast<Index>(r)) =
        base + (delta.transpose() * counts).transpose() / static_cast<double>(n1);
  });
  return out;
}

Eigen::MatrixXd replicate_covariance(const Eigen::MatrixXd& replicates) {
  const Index B = replicates.rows();
  if (B < 2) throw Error(ErrorCode::InvalidArgument, "covariance needs at least 2 replicates");
  const Eigen::RowVectorXd mean = replicates.colwise().mean();
  const Eigen::MatrixXd centered = replicates.rowwise() - mean;
  Eigen::MatrixXd s = (centered.transpose() * centered) / static_cast<double>(B - 1);
  return (s + s.transpose()) / 2.0;
}

PsdRepair floor_eigenvalues(const Eigen::MatrixXd& sigma) {
  PsdRepair out;
  out.matrix = sigma;
  if (sigma.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  if (out.min_eigenvalue >= 0.0) return out;
  const Eigen::VectorXd floored = eig.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXd m = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
  out.matrix = (m + m.transpose()) / 2.0;
  out.repaired = true;
  return out;
}

CovarianceEstimate bootstrap_covariance(const AttVector& att, int B, std::uint64_t seed,
                                        bool keep_replicates) {
  if (att.block_contributions.rows() == 0) {
    throw Error(ErrorCode::NoBlockContributions, "estimate carries no block contributions");
  }
  if (B < 2) throw Error(ErrorCode::InvalidArgument, "at least 2 bootstrap replicates required");
  const Eigen::MatrixXd reps = bootstrap_replicates(att.block_contributions, B, covariance_key(seed));
  const PsdRepair fixed = floor_eigenvalues(replicate_covariance(reps));
  CovarianceEstimate est;
  est.index = att.index;
  est.sigma = fixed.matrix;
  est.B = B;
  est.seed = seed;
  est.repaired = fixed.repaired;
  est.min_eigenvalue = fixed.min_eigenvalue;
  if (keep_replicates) est.replicates = reps;
  return est;
}

nlohmann::json CovarianceEstimate::to_json() const {
  nlohmann::json j;
  j["index"] = index.to_json();
  j["B"] = B;
  j["seed"] = seed;
  j["repaired"] = repaired;
  j["min_eigenvalue"] = min_eigenvalue;
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < sigma.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(sigma.cols()));
    for (Index c = 0; c < sigma.cols(); ++c) row[static_cast<std::size_t>(c)] = sigma(r, c);
    rows.push_back(row);
  }
  j["sigma"] = rows;
  return j;
}

CovarianceEstimate CovarianceEstimate::from_json(const nlohmann::json& j) {
  CovarianceEstimate e;
  try {
    e.index = GtIndex::from_json(j.at("index"));
    e.B = j.at("B").get<int>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.repaired = j.at("repaired").get<bool>();
    e.min_eigenvalue = j.at("min_eigenvalue").get<double>();
    const auto& rows = j.at("sigma");
    const Index K = e.index.size();
    if (static_cast<Index>(rows.size()) != K) {
      throw Error(ErrorCode::IndexMismatch, "covariance size does not match its index");
    }
    e.sigma.resize(K, K);
    for (Index r = 0; r < K; ++r) {
      const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
      if (static_cast<Index>(row.size()) != K) {
        throw Error(ErrorCode::IndexMismatch, "covariance row has the wrong length");
      }
      for (Index c = 0; c < K; ++c) e.sigma(r, c) = row[static_cast<std::size_t>(c)];
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::Schema, std::string("malformed covariance: ") + ex.what());
  }
  return e;
}

double normal_critical_value(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  // Acklam's rational approximation of the inverse normal CDF.
  const double p = 1.0 - alpha / 2.0;
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  if (p > 0.97575) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace rtnm
