#include "rtnm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "rtnm/error.hpp"
#include "rtnm/random.hpp"

namespace rtnm {

using Json = nlohmann::json;

double EffectMap::operator()(int g, int t) const {
  switch (kind) {
    case Kind::Constant: return value;
    case Kind::Cohort:
      if (g >= 1 && g <= static_cast<int>(values.size())) return values[static_cast<std::size_t>(g - 1)];
      throw Error(ErrorCode::InvalidArgument, "no cohort effect for g = " + std::to_string(g));
    case Kind::Lag:
      if (t - g >= 0 && t - g < static_cast<int>(values.size())) return values[static_cast<std::size_t>(t - g)];
      throw Error(ErrorCode::InvalidArgument, "no lag effect for e = " + std::to_string(t - g));
    case Kind::Table:
      for (const auto& [cell, v] : table) {
        if (cell.g == g && cell.t == t) return v;
      }
      return 0.0;
  }
  return 0.0;
}

Json EffectMap::to_json() const {
  switch (kind) {
    case Kind::Constant: return {{"type", "constant"}, {"value", value}};
    case Kind::Cohort: return {{"type", "cohort"}, {"values", values}};
    case Kind::Lag: return {{"type", "lag"}, {"values", values}};
    case Kind::Table: {
      Json cells = Json::array();
      for (const auto& [cell, v] : table) cells.push_back({cell.g, cell.t, v});
      return {{"type", "table"}, {"cells", cells}};
    }
  }
  return {};
}

EffectMap EffectMap::from_json(const Json& j) {
  EffectMap e;
  try {
    if (j.is_number()) {
      e.value = j.get<double>();
      return e;
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "constant") {
      e.kind = Kind::Constant;
      e.value = j.at("value").get<double>();
    } else if (type == "cohort" || type == "lag") {
      e.kind = type == "cohort" ? Kind::Cohort : Kind::Lag;
      e.values = j.at("values").get<std::vector<double>>();
    } else if (type == "table") {
      e.kind = Kind::Table;
      for (const Json& c : j.at("cells")) {
        e.table.push_back({GtCell{c.at(0).get<int>(), c.at(1).get<int>()}, c.at(2).get<double>()});
      }
    } else {
      throw Error(ErrorCode::Schema, "unknown effect type '" + type + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::Schema, std::string("malformed effect map: ") + ex.what());
  }
  return e;
}

void DgpConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (n_units < 2) bad("n_units must be >= 2");
  if (t0 > 0 || t_max < 1) bad("periods must satisfy t0 <= 0 < 1 <= t_max");
  if (n_covariates < 1) bad("n_covariates must be >= 1");
  if (adoption_periods < 1 || adoption_periods > t_max) bad("adoption_periods must lie in 1..t_max");
  if (!(baseline_hazard > 0.0 && baseline_hazard < 1.0)) bad("baseline_hazard must lie in (0, 1)");
  if (!(hazard_floor > 0.0 && hazard_floor <= hazard_ceiling && hazard_ceiling < 1.0)) {
    bad("hazard bounds must satisfy 0 < floor <= ceiling < 1");
  }
  if (noise_sd < 0.0 || effect_sd < 0.0) bad("standard deviations must be nonnegative");
  if (cohort_sizes) {
    if (static_cast<int>(cohort_sizes->size()) != adoption_periods) {
      bad("cohort_sizes needs one entry per adoption period");
    }
    Index total = 0;
    for (Index c : *cohort_sizes) {
      if (c < 0) bad("cohort sizes must be nonnegative");
      total += c;
    }
    if (total >= n_units) bad("pinned cohorts leave no never-treated units");
  }
  if (effect.kind == EffectMap::Kind::Cohort &&
      static_cast<int>(effect.values.size()) < adoption_periods) {
    bad("cohort effect map needs one value per adoption period");
  }
  if (effect.kind == EffectMap::Kind::Lag && static_cast<int>(effect.values.size()) < t_max) {
    bad("lag effect map needs values for lags 0..t_max-1");
  }
}

Json DgpConfig::to_json() const {
  Json j;
  j["n_units"] = n_units;
  j["t0"] = t0;
  j["t_max"] = t_max;
  j["n_covariates"] = n_covariates;
  j["adoption_periods"] = adoption_periods;
  j["baseline_hazard"] = baseline_hazard;
  j["confounding"] = confounding;
  j["covariate_hazard"] = covariate_hazard;
  j["hazard_floor"] = hazard_floor;
  j["hazard_ceiling"] = hazard_ceiling;
  j["cohort_sizes"] = cohort_sizes ? Json(*cohort_sizes) : Json(nullptr);
  j["rho"] = rho;
  j["trend"] = trend;
  j["trait_loading"] = trait_loading;
  j["covariate_effect"] = covariate_effect;
  j["covariate_ar"] = covariate_ar;
  j["covariate_feedback"] = covariate_feedback;
  j["noise_sd"] = noise_sd;
  j["effect"] = effect.to_json();
  j["effect_sd"] = effect_sd;
  j["binary"] = binary;
  j["resample_degenerate"] = resample_degenerate;
  j["seed"] = seed;
  return j;
}

DgpConfig DgpConfig::from_json(const Json& j) {
  DgpConfig c;
  if (!j.is_object()) throw Error(ErrorCode::Schema, "simulation config must be a JSON object");
  static const std::set<std::string> known = {
      "n_units", "t0", "t_max", "n_covariates", "adoption_periods", "baseline_hazard",
      "confounding", "covariate_hazard", "hazard_floor", "hazard_ceiling", "cohort_sizes",
      "rho", "trend", "trait_loading", "covariate_effect", "covariate_ar",
      "covariate_feedback", "noise_sd", "effect", "effect_sd", "binary",
      "resample_degenerate", "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::Schema, "unknown simulation setting '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_units", c.n_units);
    get("t0", c.t0);
    get("t_max", c.t_max);
    get("n_covariates", c.n_covariates);
    get("adoption_periods", c.adoption_periods);
    get("baseline_hazard", c.baseline_hazard);
    get("confounding", c.confounding);
    get("covariate_hazard", c.covariate_hazard);
    get("hazard_floor", c.hazard_floor);
    get("hazard_ceiling", c.hazard_ceiling);
    if (j.contains("cohort_sizes") && !j.at("cohort_sizes").is_null()) {
      c.cohort_sizes = j.at("cohort_sizes").get<std::vector<Index>>();
    }
    get("rho", c.rho);
    get("trend", c.trend);
    get("trait_loading", c.trait_loading);
    get("covariate_effect", c.covariate_effect);
    get("covariate_ar", c.covariate_ar);
    get("covariate_feedback", c.covariate_feedback);
    get("noise_sd", c.noise_sd);
    if (j.contains("effect")) c.effect = EffectMap::from_json(j.at("effect"));
    get("effect_sd", c.effect_sd);
    get("binary", c.binary);
    get("resample_degenerate", c.resample_degenerate);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::Schema, std::string("malformed simulation config: ") + ex.what());
  }
  c.validate();
  return c;
}

DgpConfig DgpConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::Schema, path.string() + ": " + ex.what());
  }
  return from_json(j);
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cross-sectional standardisation over the units flagged in `mask`.
std::vector<double> standardise(const std::vector<double>& v, const std::vector<char>& mask) {
  double sum = 0.0, sq = 0.0;
  Index n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!mask[i]) continue;
    sum += v[i];
    ++n;
  }
  const double mean = n ? sum / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) sq += (v[i] - mean) * (v[i] - mean);
  }
  const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
  std::vector<double> z(v.size(), 0.0);
  if (sd > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) z[i] = (v[i] - mean) / sd;
  }
  return z;
}

struct Draw {
  std::vector<Cohort> adoption;
  Eigen::MatrixXd y_never;    // latent untreated outcome, n x periods
  Eigen::MatrixXd uniforms;   // binary link draws, n x periods
  Eigen::MatrixXd covs;       // x_k for k >= 1, n x (periods * (p - 1))
  Eigen::VectorXd het;        // per-unit effect deviation
};

Draw draw_once(const DgpConfig& c, std::uint64_t attempt) {
  RandomStream rng(c.seed, attempt);
  const Index n = c.n_units;
  const Index periods = c.t_max - c.t0 + 1;
  const Index px = c.n_covariates - 1;
  Draw d;
  d.y_never.resize(n, periods);
  d.covs.resize(n, periods * px);
  d.uniforms.resize(n, periods);
  d.het.resize(n);

  const double ar_scale = std::sqrt(std::max(1e-12, 1.0 - c.covariate_ar * c.covariate_ar));
  for (Index i = 0; i < n; ++i) {
    const double trait = rng.normal();
    d.het(i) = rng.normal();
    const double rho_gap = std::abs(1.0 - c.rho) > 1e-9 ? 1.0 - c.rho : 1.0;
    d.y_never(i, 0) = c.trend * c.t0 + c.trait_loading * trait / rho_gap + c.noise_sd * rng.normal();
    for (Index k = 0; k < px; ++k) {
      d.covs(i, k) = rng.normal() / ar_scale;
    }
    for (Index p = 1; p < periods; ++p) {
      const int t = c.t0 + static_cast<int>(p);
      double xbar = 0.0;
      for (Index k = 0; k < px; ++k) xbar += d.covs(i, (p - 1) * px + k);
      if (px > 0) xbar /= static_cast<double>(px);
      for (Index k = 0; k < px; ++k) {
        d.covs(i, p * px + k) = c.covariate_ar * d.covs(i, (p - 1) * px + k) +
                                c.covariate_feedback * d.y_never(i, p - 1) + rng.normal();
      }
      d.y_never(i, p) = c.trend * t + c.rho * d.y_never(i, p - 1) + c.trait_loading * trait +
                        c.covariate_effect * xbar + c.noise_sd * rng.normal();
    }
    for (Index p = 0; p < periods; ++p) d.uniforms(i, p) = rng.uniform();
  }

  auto observed_never = [&](Index i, Index p) {
    return c.binary ? (d.uniforms(i, p) < logistic(d.y_never(i, p)) ? 1.0 : 0.0) : d.y_never(i, p);
  };

  d.adoption.assign(static_cast<std::size_t>(n), Cohort::never());
  std::vector<char> at_risk(static_cast<std::size_t>(n), 1);
  const double base = std::log(c.baseline_hazard / (1.0 - c.baseline_hazard));
  for (int t = 1; t <= c.adoption_periods; ++t) {
    const Index p_prev = t - 1 - c.t0;
    std::vector<double> ylag(static_cast<std::size_t>(n)), xlag(static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < n; ++i) {
      // Units at risk are untreated, so their observed outcome is Y(inf).
      ylag[static_cast<std::size_t>(i)] = observed_never(i, p_prev);
      for (Index k = 0; k < px; ++k) xlag[static_cast<std::size_t>(i)] += d.covs(i, p_prev * px + k);
      if (px > 0) xlag[static_cast<std::size_t>(i)] /= static_cast<double>(px);
    }
    const auto zy = standardise(ylag, at_risk);
    const auto zx = standardise(xlag, at_risk);
    std::vector<double> hazard(static_cast<std::size_t>(n), 0.0);
    for (Index i = 0; i < n; ++i) {
      const auto s = static_cast<std::size_t>(i);
      if (!at_risk[s]) continue;
      const double h = logistic(base + c.confounding * zy[s] + c.covariate_hazard * zx[s]);
      hazard[s] = std::clamp(h, c.hazard_floor, c.hazard_ceiling);
    }
    if (c.cohort_sizes) {
      const Index quota = (*c.cohort_sizes)[static_cast<std::size_t>(t - 1)];
      std::vector<std::pair<double, Index>> keys;
      for (Index i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        const double u = rng.uniform();
        if (at_risk[s]) keys.push_back({std::log(u) / hazard[s], i});
      }
      if (static_cast<Index>(keys.size()) < quota) {
        throw Error(ErrorCode::InvalidArgument, "not enough units at risk for the cohort quota");
      }
      std::partial_sort(keys.begin(), keys.begin() + quota, keys.end(),
                        [](const auto& a, const auto& b) {
                          return a.first > b.first || (a.first == b.first && a.second < b.second);
                        });
      for (Index k = 0; k < quota; ++k) {
        const Index i = keys[static_cast<std::size_t>(k)].second;
        d.adoption[static_cast<std::size_t>(i)] = Cohort::at(t);
        at_risk[static_cast<std::size_t>(i)] = 0;
      }
    } else {
      for (Index i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        const double u = rng.uniform();
        if (at_risk[s] && u < hazard[s]) {
          d.adoption[s] = Cohort::at(t);
          at_risk[s] = 0;
        }
      }
    }
  }
  return d;
}

std::string unit_name(Index i, Index n) {
  const int width = static_cast<int>(std::to_string(std::max<Index>(n - 1, 1)).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%0*lld", width, static_cast<long long>(i));
  return buf;
}

}  // namespace

SimulatedPanel generate_panel(const DgpConfig& c) {
  c.validate();
  const Index n = c.n_units;
  const Index periods = c.t_max - c.t0 + 1;
  const Index p = c.n_covariates;
  const Index px = p - 1;
  const int A = c.adoption_periods;

  Draw d;
  for (std::uint64_t attempt = 0;; ++attempt) {
    d = draw_once(c, attempt);
    std::vector<Index> sizes(static_cast<std::size_t>(A + 1), 0);
    for (Cohort g : d.adoption) ++sizes[g.is_never() ? 0 : static_cast<std::size_t>(g.period())];
    std::string empty;
    for (int g = 1; g <= A; ++g) {
      if (sizes[static_cast<std::size_t>(g)] == 0) empty += (empty.empty() ? "" : ", ") + std::to_string(g);
    }
    if (sizes[0] == 0) empty += (empty.empty() ? "" : ", ") + std::string("never-treated");
    if (empty.empty()) break;
    if (!c.resample_degenerate || attempt >= 999) {
      throw Error(ErrorCode::DegenerateCohort, "simulated panel has empty cohort(s): " + empty);
    }
  }

  auto effect_of = [&](Index i, int g, int t) {
    return c.effect(g, t) + c.effect_sd * d.het(i);
  };
  auto potential = [&](Index i, Index pidx, double shift) {
    const double latent = d.y_never(i, pidx) + shift;
    if (!c.binary) return latent;
    return d.uniforms(i, pidx) < logistic(latent) ? 1.0 : 0.0;
  };

  Eigen::MatrixXd outcomes(n, periods);
  for (Index i = 0; i < n; ++i) {
    const Cohort g = d.adoption[static_cast<std::size_t>(i)];
    for (Index q = 0; q < periods; ++q) {
      const int t = c.t0 + static_cast<int>(q);
      outcomes(i, q) = potential(i, q, g.treated_at(t) ? effect_of(i, g.period(), t) : 0.0);
    }
  }

  Eigen::MatrixXd covariates(n, periods * p);
  for (Index i = 0; i < n; ++i) {
    for (Index q = 0; q < periods; ++q) {
      covariates(i, q * p) = outcomes(i, q);
      for (Index k = 0; k < px; ++k) covariates(i, q * p + 1 + k) = d.covs(i, q * px + k);
    }
  }

  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = unit_name(i, n);
  std::vector<std::string> names{"y"};
  for (Index k = 1; k < p; ++k) names.push_back("x" + std::to_string(k));

  const GtIndex index = GtIndex::all(A, c.t_max);
  AttVector truth;
  truth.index = index;
  truth.values.resize(index.size());
  truth.strata_used.assign(static_cast<std::size_t>(index.size()), 0);
  truth.strata_dropped.assign(static_cast<std::size_t>(index.size()), 0);
  for (Index k = 0; k < index.size(); ++k) {
    const GtCell cell = index[k];
    const Index q = cell.t - c.t0;
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < n; ++i) {
      if (d.adoption[static_cast<std::size_t>(i)] != Cohort::at(cell.g)) continue;
      sum += potential(i, q, effect_of(i, cell.g, cell.t)) - potential(i, q, 0.0);
      ++count;
    }
    truth.values(k) = sum / static_cast<double>(count);
  }

  PanelDataset data(std::move(ids), c.t0, c.t_max, std::move(names), std::move(covariates),
                    std::move(d.adoption), std::move(outcomes));
  return {std::move(data), std::move(truth)};
}

}  // namespace rtnm
