#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rtnm/att.hpp"
#include "rtnm/balance.hpp"
#include "rtnm/homogeneity.hpp"

namespace rtnm {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t h);
// FNV-1a digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

// Run metadata stamped into every JSON artifact. It holds no clock readings,
// so identical inputs give byte-identical artifacts.
struct RunManifest {
  std::string stage;          // subcommand that produced the artifact
  nlohmann::json config;      // effective options
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> inputs;  // file name, digest
  std::vector<std::string> outputs;

  std::string config_hash() const;
  nlohmann::json to_json() const;
};

// {"schema_version", "kind", "manifest", "data"}.
nlohmann::json make_artifact(std::string_view kind, const RunManifest& manifest,
                             nlohmann::json data);
// Returns the "data" member after checking the envelope and kind.
nlohmann::json artifact_data(const nlohmann::json& artifact, std::string_view kind);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// g,t,estimate,se,ci_lo,ci_hi,n_strata_used. `se` may be empty (no interval).
void write_estimates_csv(std::ostream& out, const AttVector& att, const Eigen::VectorXd& se);
// g,covariate,period,treated_mean,comparison_mean_before,comparison_mean_after,pooled_sd,smd_before,smd_after
void write_balance_csv(std::ostream& out, const BalanceReport& report);
// hypothesis,kind,q,w_obs,f_stat,p_value,stars,pseudo_inverse,B,description
void write_tests_csv(std::ostream& out, const std::vector<TestResult>& results,
                     const std::vector<HypothesisSpec>& specs);

// Group-time table: one row per cohort g, one column per period t, cells
// "estimate (se)" with "**" appended when |estimate / se| exceeds the
// two-sided normal critical value at alpha.
struct ReportTable {
  std::vector<int> cohorts;
  std::vector<int> periods;
  std::vector<std::vector<std::string>> cells;  // [cohort][period], "" when absent
  Index filled = 0;
};

ReportTable build_report(const AttVector& att, const Eigen::VectorXd& se, double alpha = 0.05,
                         int digits = 3);
void write_report_csv(std::ostream& out, const ReportTable& table);
std::string format_report_text(const ReportTable& table);

}  // namespace rtnm
