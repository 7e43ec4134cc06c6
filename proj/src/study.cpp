#include "rtnm/study.hpp"

#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "rtnm/bootstrap.hpp"
#include "rtnm/csv.hpp"
#include "rtnm/design.hpp"
#include "rtnm/error.hpp"
#include "rtnm/homogeneity.hpp"
#include "rtnm/parallel.hpp"
#include "rtnm/random.hpp"

namespace rtnm {

using Json = nlohmann::json;

Json StudyConfig::to_json() const {
  Json j;
  j["dgp"] = dgp.to_json();
  j["reps"] = reps;
  j["metric"] = to_string(spec.metric);
  j["ridge"] = spec.ridge ? Json(*spec.ridge) : Json(nullptr);
  j["min_ratio"] = bounds.min_ratio;
  j["max_ratio"] = bounds.max_ratio ? Json(*bounds.max_ratio) : Json(nullptr);
  j["max_stratum_size"] = bounds.max_stratum_size ? Json(*bounds.max_stratum_size) : Json(nullptr);
  j["adjust"] = to_string(adjust);
  j["boot"] = boot;
  j["test_boot"] = test_boot;
  j["alpha"] = alpha;
  j["seed"] = seed;
  return j;
}

StudyConfig StudyConfig::from_json(const Json& j) {
  StudyConfig c;
  try {
    if (j.contains("dgp")) c.dgp = DgpConfig::from_json(j.at("dgp"));
    if (j.contains("reps")) c.reps = j.at("reps").get<int>();
    if (j.contains("metric")) c.spec.metric = parse_metric(j.at("metric").get<std::string>());
    if (j.contains("ridge") && !j.at("ridge").is_null()) c.spec.ridge = j.at("ridge").get<double>();
    if (j.contains("min_ratio")) c.bounds.min_ratio = j.at("min_ratio").get<int>();
    if (j.contains("max_ratio")) {
      c.bounds.max_ratio.reset();
      if (!j.at("max_ratio").is_null()) c.bounds.max_ratio = j.at("max_ratio").get<int>();
    }
    if (j.contains("max_stratum_size")) {
      c.bounds.max_stratum_size.reset();
      if (!j.at("max_stratum_size").is_null()) {
        c.bounds.max_stratum_size = j.at("max_stratum_size").get<int>();
      }
    }
    if (j.contains("adjust")) c.adjust = parse_adjustment(j.at("adjust").get<std::string>());
    if (j.contains("boot")) c.boot = j.at("boot").get<int>();
    if (j.contains("test_boot")) c.test_boot = j.at("test_boot").get<int>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("malformed study config: ") + e.what());
  }
  return c;
}

namespace {

template <class Fn>
Eigen::VectorXd cell_mean(const StudyResult& r, Fn&& fn) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(r.index.size());
  for (const auto& rep : r.reps) acc += fn(rep);
  return acc / static_cast<double>(std::max<std::size_t>(r.reps.size(), 1));
}

}  // namespace

Eigen::VectorXd StudyResult::mean_truth() const {
  return cell_mean(*this, [](const ReplicateResult& r) { return r.truth; });
}

Eigen::VectorXd StudyResult::bias() const {
  return cell_mean(*this, [](const ReplicateResult& r) { return Eigen::VectorXd(r.estimate - r.truth); });
}

Eigen::VectorXd StudyResult::naive_bias() const {
  return cell_mean(*this, [](const ReplicateResult& r) { return Eigen::VectorXd(r.naive - r.truth); });
}

Eigen::VectorXd StudyResult::rmse() const {
  return cell_mean(*this, [](const ReplicateResult& r) {
           return Eigen::VectorXd((r.estimate - r.truth).array().square());
         }).cwiseSqrt();
}

Eigen::VectorXd StudyResult::mean_se() const {
  if (reps.empty() || reps.front().se.size() == 0) return {};
  return cell_mean(*this, [](const ReplicateResult& r) { return r.se; });
}

Eigen::VectorXd StudyResult::coverage(double level) const {
  if (reps.empty() || reps.front().se.size() == 0) return {};
  const double z = normal_critical_value(1.0 - level);
  return cell_mean(*this, [z](const ReplicateResult& r) {
    Eigen::VectorXd hit(r.truth.size());
    for (Index k = 0; k < hit.size(); ++k) {
      hit(k) = std::abs(r.estimate(k) - r.truth(k)) <= z * r.se(k) ? 1.0 : 0.0;
    }
    return hit;
  });
}

std::vector<double> StudyResult::rejection_rate(double alpha) const {
  std::vector<double> rate(hypotheses.size(), 0.0);
  if (reps.empty()) return rate;
  for (const auto& r : reps) {
    for (std::size_t h = 0; h < r.p_values.size() && h < rate.size(); ++h) {
      rate[h] += r.p_values[h] < alpha ? 1.0 : 0.0;
    }
  }
  for (double& x : rate) x /= static_cast<double>(reps.size());
  return rate;
}

StudyResult run_study(const StudyConfig& config, const std::function<void(int)>& progress) {
  if (config.reps < 1) throw Error(ErrorCode::InvalidArgument, "study needs at least one replicate");
  config.dgp.validate();
  const int G = config.dgp.adoption_periods;
  StudyResult result;
  result.index = GtIndex::all(G, config.dgp.t_max);
  std::vector<HypothesisSpec> hyps;
  if (config.boot > 1 && config.test_boot > 0) {
    hyps = standard_hypotheses(result.index);
    for (const auto& h : hyps) result.hypotheses.push_back(h.label);
  }
  result.reps.resize(static_cast<std::size_t>(config.reps));

  parallel_for(static_cast<std::size_t>(config.reps), [&](std::size_t r) {
    ReplicateResult& out = result.reps[r];
    DgpConfig dgp = config.dgp;
    dgp.seed = mix64(config.seed, r);
    out.dgp_seed = dgp.seed;
    const SimulatedPanel sim = generate_panel(dgp);
    const NestedDesign design =
        run_rtnm(sim.data, G, config.spec, config.bounds, mix64(dgp.seed, 1));
    const AttVector att = estimate_att(sim.data, design, result.index, config.adjust);
    out.truth = sim.truth.values;
    out.estimate = att.values;
    out.naive = naive_att(sim.data, result.index).values;
    if (config.boot > 1) {
      const CovarianceEstimate sigma = bootstrap_covariance(att, config.boot, mix64(dgp.seed, 2));
      out.se = sigma.standard_errors();
      for (const auto& h : hyps) {
        out.p_values.push_back(wald_test(att, sigma, h, config.test_boot, mix64(dgp.seed, 3)).p_value);
      }
    }
    if (progress) progress(static_cast<int>(r));
  });
  return result;
}

void write_study_cells(std::ostream& out, const StudyResult& result) {
  const Eigen::VectorXd truth = result.mean_truth(), bias = result.bias(),
                        naive = result.naive_bias(), rmse = result.rmse(),
                        se = result.mean_se(), cover = result.coverage();
  out << "g,t,truth,bias,naive_bias,rmse,mean_se,coverage\n";
  for (Index k = 0; k < result.index.size(); ++k) {
    const GtCell c = result.index[k];
    out << c.g << ',' << c.t << ',' << csv::format_double(truth(k)) << ','
        << csv::format_double(bias(k)) << ',' << csv::format_double(naive(k)) << ','
        << csv::format_double(rmse(k)) << ','
        << (se.size() ? csv::format_double(se(k)) : std::string()) << ','
        << (cover.size() ? csv::format_double(cover(k)) : std::string()) << '\n';
  }
}

void write_study_tests(std::ostream& out, const StudyResult& result, double alpha) {
  const auto rate = result.rejection_rate(alpha);
  out << "hypothesis,rejection_rate\n";
  for (std::size_t h = 0; h < rate.size(); ++h) {
    out << result.hypotheses[h] << ',' << csv::format_double(rate[h]) << '\n';
  }
}

}  // namespace rtnm
