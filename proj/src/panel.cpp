#include "rtnm/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "rtnm/csv.hpp"
#include "rtnm/error.hpp"

namespace rtnm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<long> parse_int(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) {
    throw Error(ErrorCode::Schema, "not a number: '" + s + "'");
  }
  return v;
}

bool is_never_token(const std::string& s) {
  return s.empty() || s == "inf" || s == "Inf" || s == "INF";
}

}  // namespace

std::string Cohort::to_string() const {
  return is_never() ? std::string("inf") : std::to_string(value_);
}

// ---------------------------------------------------------------------------
// PanelSchema

PanelSchema PanelSchema::from_json(const nlohmann::json& j) {
  PanelSchema s;
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  if (j.contains("unit")) s.unit = j.at("unit").get<std::string>();
  if (j.contains("period")) s.period = j.at("period").get<std::string>();
  s.outcome = opt("outcome");
  s.first_treated = opt("first_treated");
  s.treatment = opt("treatment");
  if (j.contains("covariates")) s.covariates = j.at("covariates").get<std::vector<std::string>>();
  if (s.first_treated.has_value() == s.treatment.has_value()) {
    throw Error(ErrorCode::Schema,
                "schema must name exactly one of 'first_treated' and 'treatment'");
  }
  return s;
}

PanelSchema PanelSchema::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open schema " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, "bad schema " + path.string() + ": " + e.what());
  }
}

nlohmann::json PanelSchema::to_json() const {
  nlohmann::json j;
  j["unit"] = unit;
  j["period"] = period;
  if (outcome) j["outcome"] = *outcome;
  if (first_treated) j["first_treated"] = *first_treated;
  if (treatment) j["treatment"] = *treatment;
  j["covariates"] = covariates;
  return j;
}

// ---------------------------------------------------------------------------
// PanelDataset

PanelDataset::PanelDataset(std::vector<std::string> unit_ids, int t0, int t_max,
                           std::vector<std::string> covariate_names,
                           Eigen::MatrixXd covariates, std::vector<Cohort> adoption,
                           std::optional<Eigen::MatrixXd> outcomes)
    : unit_ids_(std::move(unit_ids)),
      t0_(t0),
      t_max_(t_max),
      covariate_names_(std::move(covariate_names)),
      covariates_(std::move(covariates)),
      adoption_(std::move(adoption)),
      outcomes_(std::move(outcomes)) {
  if (t0_ > 0 || t_max_ < 1) {
    throw Error(ErrorCode::Schema, "periods must satisfy t0 <= 0 < 1 <= T");
  }
  const Index n = n_units();
  if (static_cast<Index>(adoption_.size()) != n || covariates_.rows() != n ||
      covariates_.cols() != n_periods() * n_covariates()) {
    throw Error(ErrorCode::InvalidArgument, "panel dimensions disagree");
  }
  if (outcomes_ && (outcomes_->rows() != n || outcomes_->cols() != n_periods())) {
    throw Error(ErrorCode::InvalidArgument, "outcome matrix has wrong shape");
  }
  for (Index i = 0; i < n; ++i) {
    if (!unit_lookup_.emplace(unit_ids_[static_cast<std::size_t>(i)], i).second) {
      throw Error(ErrorCode::DuplicateRow, "duplicate unit id " + unit_id(i));
    }
    const Cohort g = this->adoption(i);
    if (!g.is_never() && g.period() < 1) {
      throw Error(ErrorCode::PreperiodTreatment, "unit " + unit_id(i) + " treated before period 1");
    }
    if (!g.is_never() && g.period() > t_max_) {
      throw Error(ErrorCode::InvalidArgument,
                  "unit " + unit_id(i) + " has adoption period beyond T");
    }
    // Covariates must be complete through T-1; period T may be absent.
    const Index required = (t_max_ - t0_) * n_covariates();
    for (Index c = 0; c < required; ++c) {
      if (std::isnan(covariates_(i, c))) {
        throw Error(ErrorCode::MissingCell, "missing covariate for unit " + unit_id(i));
      }
    }
    if (outcomes_) {
      for (int t = 1; t <= t_max_; ++t) {
        if (std::isnan((*outcomes_)(i, t - t0_))) {
          throw Error(ErrorCode::MissingCell, "missing outcome for unit " + unit_id(i) +
                                                  " at period " + std::to_string(t));
        }
      }
    }
  }
}

std::optional<Index> PanelDataset::find_unit(const std::string& id) const {
  auto it = unit_lookup_.find(id);
  if (it == unit_lookup_.end()) return std::nullopt;
  return it->second;
}

const Eigen::MatrixXd& PanelDataset::outcomes() const {
  if (!outcomes_) throw Error(ErrorCode::MissingOutcome, "panel carries no outcomes");
  return *outcomes_;
}

double PanelDataset::outcome(Index i, int t) const {
  const double y = outcomes()(i, t - t0_);
  if (std::isnan(y)) {
    throw Error(ErrorCode::MissingOutcome,
                "no outcome for unit " + unit_id(i) + " at period " + std::to_string(t));
  }
  return y;
}

std::vector<int> PanelDataset::cohorts() const {
  std::set<int> seen;
  for (const Cohort& g : adoption_) {
    if (!g.is_never()) seen.insert(g.period());
  }
  return {seen.begin(), seen.end()};
}

PanelDataset PanelDataset::without_outcomes() const {
  return PanelDataset(unit_ids_, t0_, t_max_, covariate_names_, covariates_, adoption_,
                      std::nullopt);
}

Eigen::VectorXd covariate_window(const PanelDataset& data, Index unit, int g) {
  if (g < 1 || g > data.t_max()) {
    throw Error(ErrorCode::InvalidArgument, "cohort period out of range: " + std::to_string(g));
  }
  return data.covariates().row(unit).head(data.window_length(g)).transpose();
}

Eigen::MatrixXd covariate_windows(const PanelDataset& data, const std::vector<Index>& units,
                                  int g) {
  if (g < 1 || g > data.t_max()) {
    throw Error(ErrorCode::InvalidArgument, "cohort period out of range: " + std::to_string(g));
  }
  const Index len = data.window_length(g);
  Eigen::MatrixXd out(static_cast<Index>(units.size()), len);
  for (std::size_t r = 0; r < units.size(); ++r) {
    out.row(static_cast<Index>(r)) = data.covariates().row(units[r]).head(len);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading

PanelDataset load_panel(std::istream& in, const PanelSchema& schema) {
  if (schema.first_treated.has_value() == schema.treatment.has_value()) {
    throw Error(ErrorCode::Schema,
                "schema must name exactly one of 'first_treated' and 'treatment'");
  }
  std::string line;
  if (!csv::read_line(in, line)) throw Error(ErrorCode::Schema, "empty panel file");
  const std::vector<std::string> header = csv::split_record(line);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::Schema, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t unit_col = column(schema.unit);
  const std::size_t period_col = column(schema.period);
  const std::optional<std::size_t> outcome_col =
      schema.outcome ? std::optional(column(*schema.outcome)) : std::nullopt;
  const std::size_t adopt_col =
      schema.first_treated ? column(*schema.first_treated) : column(*schema.treatment);

  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == unit_col || c == period_col || c == adopt_col) continue;
      if (schema.outcome && header[c] == *schema.outcome) continue;
      cov_names.push_back(header[c]);
    }
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& name : cov_names) cov_cols.push_back(column(name));
  if (cov_cols.empty()) throw Error(ErrorCode::Schema, "panel has no covariate columns");

  struct Row {
    std::optional<double> outcome;
    std::string adopt;
    std::vector<double> covs;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::map<int, Row>> rows;
  int t0 = std::numeric_limits<int>::max();
  int t_max = std::numeric_limits<int>::min();
  std::size_t line_no = 1;

  while (csv::read_line(in, line)) {
    ++line_no;
    std::vector<std::string> f = csv::split_record(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::Schema, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " fields");
    }
    const std::string& id = f[unit_col];
    auto period = parse_int(f[period_col]);
    if (!period) {
      throw Error(ErrorCode::Schema, "line " + std::to_string(line_no) + ": bad period '" +
                                         f[period_col] + "'");
    }
    Row row;
    if (outcome_col) row.outcome = parse_real(f[*outcome_col]);
    row.adopt = f[adopt_col];
    for (std::size_t c : cov_cols) {
      row.covs.push_back(parse_real(f[c]).value_or(kNaN));
    }
    auto [unit_it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    if (!unit_it->second.emplace(static_cast<int>(*period), std::move(row)).second) {
      throw Error(ErrorCode::DuplicateRow,
                  "duplicate row for unit " + id + " at period " + std::to_string(*period));
    }
    t0 = std::min(t0, static_cast<int>(*period));
    t_max = std::max(t_max, static_cast<int>(*period));
  }
  if (order.empty()) throw Error(ErrorCode::Schema, "panel has no rows");
  if (t0 > 0 || t_max < 1) {
    throw Error(ErrorCode::Schema, "periods must include a pre-period <= 0 and a period >= 1");
  }

  const Index n = static_cast<Index>(order.size());
  const Index n_periods = t_max - t0 + 1;
  const Index p = static_cast<Index>(cov_cols.size());
  Eigen::MatrixXd covariates(n, n_periods * p);
  std::optional<Eigen::MatrixXd> outcomes;
  if (outcome_col) outcomes = Eigen::MatrixXd::Constant(n, n_periods, kNaN);
  std::vector<Cohort> adoption(static_cast<std::size_t>(n));

  for (Index i = 0; i < n; ++i) {
    const std::string& id = order[static_cast<std::size_t>(i)];
    const auto& unit_rows = rows.at(id);
    if (static_cast<Index>(unit_rows.size()) != n_periods) {
      for (int t = t0; t <= t_max; ++t) {
        if (!unit_rows.count(t)) {
          throw Error(ErrorCode::MissingCell,
                      "unit " + id + " has no row for period " + std::to_string(t));
        }
      }
    }
    std::optional<int> first_flag;
    std::optional<std::string> first_treated_value;
    for (const auto& [t, row] : unit_rows) {
      const Index col = t - t0;
      for (Index k = 0; k < p; ++k) covariates(i, col * p + k) = row.covs[static_cast<std::size_t>(k)];
      if (outcomes && row.outcome) (*outcomes)(i, col) = *row.outcome;

      if (schema.treatment) {
        auto flag = parse_int(row.adopt);
        if (!flag || (*flag != 0 && *flag != 1)) {
          throw Error(ErrorCode::Schema, "unit " + id + ": treatment flag must be 0 or 1");
        }
        if (*flag == 1 && t <= 0) {
          throw Error(ErrorCode::PreperiodTreatment,
                      "unit " + id + " is treated at pre-period " + std::to_string(t));
        }
        if (*flag == 1 && !first_flag) first_flag = t;
        if (*flag == 0 && first_flag) {
          throw Error(ErrorCode::TreatmentReversal,
                      "unit " + id + " reverts from treated to untreated at period " +
                          std::to_string(t));
        }
      } else {
        if (first_treated_value && *first_treated_value != row.adopt) {
          throw Error(ErrorCode::Schema, "unit " + id + ": first_treated varies across rows");
        }
        first_treated_value = row.adopt;
      }
    }

    Cohort g = Cohort::never();
    if (schema.treatment) {
      if (first_flag) g = Cohort::at(*first_flag);
    } else if (!is_never_token(*first_treated_value)) {
      auto v = parse_int(*first_treated_value);
      if (!v) {
        throw Error(ErrorCode::Schema,
                    "unit " + id + ": bad first_treated '" + *first_treated_value + "'");
      }
      if (*v <= 0) {
        throw Error(ErrorCode::PreperiodTreatment,
                    "unit " + id + " is treated at pre-period " + std::to_string(*v));
      }
      // Adoption after the observation window is indistinguishable from never.
      if (*v <= t_max) g = Cohort::at(static_cast<int>(*v));
    }
    adoption[static_cast<std::size_t>(i)] = g;
  }

  return PanelDataset(std::move(order), t0, t_max, std::move(cov_names), std::move(covariates),
                      std::move(adoption), std::move(outcomes));
}

PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open panel " + path.string());
  return load_panel(in, schema);
}

void write_panel(std::ostream& out, const PanelDataset& data) {
  out << "unit,period";
  if (data.has_outcomes()) out << ",outcome";
  out << ",first_treated";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  for (Index i = 0; i < data.n_units(); ++i) {
    const Cohort g = data.adoption(i);
    for (int t = data.t0(); t <= data.t_max(); ++t) {
      out << data.unit_id(i) << ',' << t;
      if (data.has_outcomes()) out << ',' << csv::format_double(data.outcomes()(i, t - data.t0()));
      out << ',' << (g.is_never() ? std::string("inf") : std::to_string(g.period()));
      for (Index k = 0; k < data.n_covariates(); ++k) {
        out << ',' << csv::format_double(data.covariate(i, t, k));
      }
      out << '\n';
    }
  }
}

void write_panel(const std::filesystem::path& path, const PanelDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_panel(out, data);
}

}  // namespace rtnm
