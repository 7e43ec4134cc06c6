#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace rtnm {

using Index = Eigen::Index;

// Adoption cohort G_i: the first treated period, or NeverTreated. NeverTreated
// compares greater than every finite period.
class Cohort {
 public:
  constexpr Cohort() = default;

  static constexpr Cohort never() { return Cohort{}; }
  static constexpr Cohort at(int period) { return Cohort{period}; }

  constexpr bool is_never() const { return value_ == kNever; }
  constexpr int period() const { return value_; }

  // True when the unit is still untreated at period t (G_i > t).
  constexpr bool untreated_at(int t) const { return value_ > t; }
  constexpr bool treated_at(int t) const { return value_ <= t; }

  constexpr auto operator<=>(const Cohort&) const = default;

  std::string to_string() const;

 private:
  static constexpr int kNever = std::numeric_limits<int>::max();
  constexpr explicit Cohort(int v) : value_(v) {}
  int value_ = kNever;
};

// Column-role mapping for long-format panel files. Exactly one of
// `first_treated` and `treatment` must be set. An empty `covariates` list
// means "every column not claimed by another role".
struct PanelSchema {
  std::string unit = "unit";
  std::string period = "period";
  std::optional<std::string> outcome = std::string("outcome");
  std::optional<std::string> first_treated = std::string("first_treated");
  std::optional<std::string> treatment;
  std::vector<std::string> covariates;

  static PanelSchema from_json(const nlohmann::json& j);
  static PanelSchema from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

// Balanced unit x period panel. Periods run t0..t_max with t0 <= 0 < 1 <= t_max.
//
// Covariates are stored as one row per unit laid out period-major,
// covariate-minor, so the history X_{t0:(g-1)} of a unit is a prefix of its
// row. Outcomes are n_units x n_periods with NaN where a pre-period outcome is
// absent; a design-only panel carries no outcome matrix at all.
class PanelDataset {
 public:
  PanelDataset(std::vector<std::string> unit_ids, int t0, int t_max,
               std::vector<std::string> covariate_names,
               Eigen::MatrixXd covariates, std::vector<Cohort> adoption,
               std::optional<Eigen::MatrixXd> outcomes);

  Index n_units() const { return static_cast<Index>(unit_ids_.size()); }
  Index n_periods() const { return t_max_ - t0_ + 1; }
  Index n_covariates() const { return static_cast<Index>(covariate_names_.size()); }
  int t0() const { return t0_; }
  int t_max() const { return t_max_; }

  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::string& unit_id(Index i) const { return unit_ids_[static_cast<std::size_t>(i)]; }
  std::optional<Index> find_unit(const std::string& id) const;

  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const std::vector<Cohort>& adoption() const { return adoption_; }
  Cohort adoption(Index i) const { return adoption_[static_cast<std::size_t>(i)]; }

  // Z_it = 1{t >= G_i}.
  bool treated(Index i, int t) const { return adoption(i).treated_at(t); }

  bool has_outcomes() const { return outcomes_.has_value(); }
  const Eigen::MatrixXd& outcomes() const;
  double outcome(Index i, int t) const;

  const Eigen::MatrixXd& covariates() const { return covariates_; }
  double covariate(Index i, int t, Index k) const {
    return covariates_(i, (t - t0_) * n_covariates() + k);
  }

  // Length of the history X_{t0:(g-1)}.
  Index window_length(int g) const { return (g - t0_) * n_covariates(); }

  // Finite cohorts present, ascending.
  std::vector<int> cohorts() const;

  // Same panel with the outcome matrix removed.
  PanelDataset without_outcomes() const;

 private:
  std::vector<std::string> unit_ids_;
  std::unordered_map<std::string, Index> unit_lookup_;
  int t0_;
  int t_max_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
  std::vector<Cohort> adoption_;
  std::optional<Eigen::MatrixXd> outcomes_;
};

// Flattened covariate history X_{t0:(g-1)} of one unit, period-major.
Eigen::VectorXd covariate_window(const PanelDataset& data, Index unit, int g);

// Histories of several units stacked as rows.
Eigen::MatrixXd covariate_windows(const PanelDataset& data,
                                  const std::vector<Index>& units, int g);

PanelDataset load_panel(std::istream& in, const PanelSchema& schema);
PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema);

// Writes the canonical long format: unit,period,[outcome,]first_treated,covariates.
void write_panel(std::ostream& out, const PanelDataset& data);
void write_panel(const std::filesystem::path& path, const PanelDataset& data);

}  // namespace rtnm
