#include "rtnm/homogeneity.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "rtnm/error.hpp"

namespace rtnm {

std::string to_string(HypothesisKind kind) {
  switch (kind) {
    case HypothesisKind::FixedCohort: return "fixed-cohort";
    case HypothesisKind::FixedTime: return "fixed-time";
    case HypothesisKind::FixedLag: return "fixed-lag";
    case HypothesisKind::Custom: return "custom";
  }
  return "custom";
}

HypothesisKind parse_hypothesis_kind(const std::string& s) {
  if (s == "fixed-cohort" || s == "fixed_cohort") return HypothesisKind::FixedCohort;
  if (s == "fixed-time" || s == "fixed_time") return HypothesisKind::FixedTime;
  if (s == "fixed-lag" || s == "fixed_lag") return HypothesisKind::FixedLag;
  if (s == "custom") return HypothesisKind::Custom;
  throw Error(ErrorCode::InvalidArgument, "unknown hypothesis family '" + s + "'");
}

namespace {

std::string cell_name(const GtCell& c) {
  return "tau(" + std::to_string(c.g) + "," + std::to_string(c.t) + ")";
}

bool selected(HypothesisKind kind, int param, const GtCell& c) {
  switch (kind) {
    case HypothesisKind::FixedCohort: return c.g == param;
    case HypothesisKind::FixedTime: return c.t == param;
    case HypothesisKind::FixedLag: return c.t - c.g == param;
    case HypothesisKind::Custom: break;
  }
  return false;
}

std::string prefix(HypothesisKind kind) {
  switch (kind) {
    case HypothesisKind::FixedCohort: return "g=";
    case HypothesisKind::FixedTime: return "t=";
    case HypothesisKind::FixedLag: return "e=";
    case HypothesisKind::Custom: break;
  }
  return "";
}

void check_rank(const Eigen::MatrixXd& R) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(R);
  if (lu.rank() != R.rows()) {
    throw Error(ErrorCode::InvalidArgument, "contrast matrix must have full row rank");
  }
}

// Inverse (or pseudo-inverse) of a symmetric PSD matrix.
Eigen::MatrixXd symmetric_inverse(const Eigen::MatrixXd& m, bool& pseudo) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) {
    throw Error(ErrorCode::SingularContrastCovariance, "contrast covariance is zero");
  }
  const double tol = top * 1e-10 * static_cast<double>(m.rows());
  pseudo = ev.minCoeff() <= tol;
  if (!pseudo) {
    Eigen::MatrixXd inv = m.ldlt().solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    return (inv + inv.transpose()) / 2.0;
  }
  Eigen::VectorXd inv_ev(ev.size());
  for (Index k = 0; k < ev.size(); ++k) inv_ev(k) = ev(k) > tol ? 1.0 / ev(k) : 0.0;
  return eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

HypothesisSpec build_hypothesis(const GtIndex& index, HypothesisKind kind, int param) {
  if (kind == HypothesisKind::Custom) {
    throw Error(ErrorCode::InvalidArgument, "custom hypotheses need an explicit contrast matrix");
  }
  std::vector<Index> picked;
  for (Index k = 0; k < index.size(); ++k) {
    if (selected(kind, param, index[k])) picked.push_back(k);
  }
  HypothesisSpec spec;
  spec.kind = kind;
  spec.param = param;
  spec.label = prefix(kind) + std::to_string(param);
  if (picked.size() < 2) {
    throw Error(ErrorCode::TooFewCells, "hypothesis " + spec.label + " selects " +
                                            std::to_string(picked.size()) + " cell(s); need 2");
  }
  const auto q = static_cast<Index>(picked.size()) - 1;
  spec.R = Eigen::MatrixXd::Zero(q, index.size());
  for (Index r = 0; r < q; ++r) {
    spec.R(r, picked[static_cast<std::size_t>(r)]) = 1.0;
    spec.R(r, picked[static_cast<std::size_t>(r + 1)]) = -1.0;
  }
  for (std::size_t k = 0; k < picked.size(); ++k) {
    if (k) spec.description += " = ";
    spec.description += cell_name(index[picked[k]]);
  }
  return spec;
}

HypothesisSpec custom_hypothesis(const GtIndex& index, Eigen::MatrixXd R, std::string description) {
  if (R.cols() != index.size()) {
    throw Error(ErrorCode::IndexMismatch, "contrast matrix width does not match the index");
  }
  if (R.rows() < 1) throw Error(ErrorCode::TooFewCells, "contrast matrix has no rows");
  for (Index r = 0; r < R.rows(); ++r) {
    if (std::abs(R.row(r).sum()) > 1e-12 * std::max(1.0, R.row(r).cwiseAbs().sum())) {
      throw Error(ErrorCode::InvalidArgument, "contrast rows must sum to zero");
    }
  }
  check_rank(R);
  HypothesisSpec spec;
  spec.kind = HypothesisKind::Custom;
  spec.R = std::move(R);
  spec.label = "custom";
  spec.description = std::move(description);
  return spec;
}

std::vector<HypothesisSpec> standard_hypotheses(const GtIndex& index) {
  std::set<int> cohorts, times, lags;
  for (const GtCell& c : index.cells()) {
    cohorts.insert(c.g);
    times.insert(c.t);
    lags.insert(c.t - c.g);
  }
  auto count = [&](HypothesisKind kind, int param) {
    std::set<int> gs;
    for (const GtCell& c : index.cells()) {
      if (selected(kind, param, c)) gs.insert(c.g);
    }
    return gs;
  };
  std::vector<HypothesisSpec> out;
  for (int g : cohorts) {
    Index n = 0;
    for (const GtCell& c : index.cells()) n += c.g == g;
    if (n >= 2) out.push_back(build_hypothesis(index, HypothesisKind::FixedCohort, g));
  }
  for (int t : times) {
    if (cohorts.size() >= 2 && count(HypothesisKind::FixedTime, t) == cohorts) {
      out.push_back(build_hypothesis(index, HypothesisKind::FixedTime, t));
    }
  }
  for (int e : lags) {
    if (cohorts.size() >= 2 && count(HypothesisKind::FixedLag, e) == cohorts) {
      out.push_back(build_hypothesis(index, HypothesisKind::FixedLag, e));
    }
  }
  return out;
}

Eigen::VectorXd null_projection(const Eigen::MatrixXd& R, const Eigen::VectorXd& tau) {
  const Eigen::MatrixXd rrt = R * R.transpose();
  const Eigen::VectorXd lambda = rrt.ldlt().solve(R * tau);
  return tau - R.transpose() * lambda;
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

double bootstrap_p_value(const Eigen::VectorXd& w_star, double w_obs) {
  if (w_star.size() == 0) throw Error(ErrorCode::InvalidArgument, "no replicate statistics");
  Index hits = 0;
  for (Index b = 0; b < w_star.size(); ++b) hits += w_star(b) >= w_obs;
  return static_cast<double>(hits) / static_cast<double>(w_star.size());
}

TestResult wald_test_from_replicates(const Eigen::VectorXd& tau, const Eigen::MatrixXd& sigma,
                                     const HypothesisSpec& spec, const Eigen::MatrixXd& replicates) {
  const Eigen::MatrixXd& R = spec.R;
  if (R.cols() != tau.size() || sigma.rows() != tau.size() || sigma.cols() != tau.size() ||
      replicates.cols() != tau.size()) {
    throw Error(ErrorCode::IndexMismatch, "hypothesis, estimate and covariance sizes differ");
  }
  TestResult res;
  res.label = spec.label;
  res.description = spec.description;
  res.q = static_cast<int>(R.rows());
  res.B = static_cast<int>(replicates.rows());
  res.tau_null = null_projection(R, tau);

  const Eigen::MatrixXd inv = symmetric_inverse(R * sigma * R.transpose(), res.pseudo_inverse);
  const Eigen::VectorXd rt = R * tau;
  res.w_obs = rt.dot(inv * rt);
  res.f_stat = res.w_obs / static_cast<double>(res.q);

  // R (tau0 + tau* - tau) = R (tau* - tau) since R tau0 = 0; the centred form
  // is evaluated explicitly to keep the definition visible.
  res.w_star.resize(replicates.rows());
  for (Index b = 0; b < replicates.rows(); ++b) {
    const Eigen::VectorXd null_rep = res.tau_null + (replicates.row(b).transpose() - tau);
    const Eigen::VectorXd r = R * null_rep;
    res.w_star(b) = r.dot(inv * r);
  }
  res.p_value = bootstrap_p_value(res.w_star, res.w_obs);
  return res;
}

TestResult wald_test(const AttVector& att, const CovarianceEstimate& sigma,
                     const HypothesisSpec& spec, int B, std::uint64_t seed) {
  if (!(att.index == sigma.index)) {
    throw Error(ErrorCode::IndexMismatch, "estimate and covariance use different indices");
  }
  if (B < 1) throw Error(ErrorCode::InvalidArgument, "replicate count must be positive");
  const Eigen::MatrixXd reps = bootstrap_replicates(att.block_contributions, B, test_key(seed));
  TestResult res = wald_test_from_replicates(att.values, sigma.sigma, spec, reps);
  res.seed = seed;
  return res;
}

nlohmann::json TestResult::to_json() const {
  nlohmann::json j;
  j["label"] = label;
  j["description"] = description;
  j["w_obs"] = w_obs;
  j["f_stat"] = f_stat;
  j["p_value"] = p_value;
  j["stars"] = significance_stars(p_value);
  j["q"] = q;
  j["B"] = B;
  j["seed"] = seed;
  j["pseudo_inverse"] = pseudo_inverse;
  j["tau_null"] = std::vector<double>(tau_null.data(), tau_null.data() + tau_null.size());
  return j;
}

}  // namespace rtnm
