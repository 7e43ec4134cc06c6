#include "rtnm/io.hpp"

#include <cmath>
#include <fstream>
#include <algorithm>
#include <iterator>
#include <ostream>
#include <sstream>

#include "rtnm/bootstrap.hpp"
#include "rtnm/csv.hpp"
#include "rtnm/error.hpp"

namespace rtnm {

using Json = nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return s;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string cell_label(const GtCell& c) {
  return std::to_string(c.g) + "," + std::to_string(c.t);
}

}  // namespace

std::string file_digest(const std::filesystem::path& path) { return hex64(fnv1a64(slurp(path))); }

std::string RunManifest::config_hash() const { return hex64(fnv1a64(config.dump())); }

Json RunManifest::to_json() const {
  Json j;
  j["generator"] = "rtnm";
  j["version"] = kVersion;
  j["stage"] = stage;
  j["config"] = config;
  j["config_hash"] = config_hash();
  j["seeds"] = seeds;
  Json in = Json::array();
  for (const auto& [name, digest] : inputs) in.push_back({{"file", name}, {"digest", digest}});
  j["inputs"] = in;
  j["outputs"] = outputs;
  return j;
}

Json make_artifact(std::string_view kind, const RunManifest& manifest, Json data) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  j["manifest"] = manifest.to_json();
  j["data"] = std::move(data);
  return j;
}

Json artifact_data(const Json& artifact, std::string_view kind) {
  if (!artifact.is_object() || !artifact.contains("kind") || !artifact.contains("data")) {
    throw Error(ErrorCode::Schema, "not an rtnm artifact");
  }
  if (artifact.value("schema_version", 0) != kSchemaVersion) {
    throw Error(ErrorCode::Schema, "unsupported artifact schema version");
  }
  const std::string actual = artifact.at("kind").get<std::string>();
  if (actual != kind) {
    throw Error(ErrorCode::Schema,
                "expected a " + std::string(kind) + " artifact, found " + actual);
  }
  return artifact.at("data");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::Schema, path.string() + ": " + e.what());
  }
}

void write_estimates_csv(std::ostream& out, const AttVector& att, const Eigen::VectorXd& se) {
  const bool has_se = se.size() == att.values.size();
  const double z = normal_critical_value(0.05);
  out << "g,t,estimate,se,ci_lo,ci_hi,n_strata_used\n";
  for (Index k = 0; k < att.values.size(); ++k) {
    const GtCell c = att.index[k];
    const double v = att.values(k);
    out << cell_label(c) << ',' << csv::format_double(v) << ',';
    if (has_se) {
      out << csv::format_double(se(k)) << ',' << csv::format_double(v - z * se(k)) << ','
          << csv::format_double(v + z * se(k));
    } else {
      out << ",,";
    }
    out << ',';
    if (static_cast<std::size_t>(k) < att.strata_used.size()) out << att.strata_used[static_cast<std::size_t>(k)];
    out << '\n';
  }
}

void write_balance_csv(std::ostream& out, const BalanceReport& report) {
  out << "g,covariate,period,treated_mean,comparison_mean_before,comparison_mean_after,"
         "pooled_sd,smd_before,smd_after\n";
  for (const auto& r : report.rows) {
    out << r.g << ',' << r.covariate << ',' << r.period << ',' << csv::format_double(r.treated_mean)
        << ',' << csv::format_double(r.comparison_mean_before) << ','
        << csv::format_double(r.comparison_mean_after) << ',' << csv::format_double(r.pooled_sd)
        << ',' << csv::format_double(r.smd_before) << ',' << csv::format_double(r.smd_after) << '\n';
  }
}

void write_tests_csv(std::ostream& out, const std::vector<TestResult>& results,
                     const std::vector<HypothesisSpec>& specs) {
  out << "hypothesis,kind,q,w_obs,f_stat,p_value,stars,pseudo_inverse,B,description\n";
  for (std::size_t h = 0; h < results.size(); ++h) {
    const TestResult& r = results[h];
    const std::string kind = h < specs.size() ? to_string(specs[h].kind) : "custom";
    out << r.label << ',' << kind << ',' << r.q << ',' << csv::format_double(r.w_obs) << ','
        << csv::format_double(r.f_stat) << ',' << csv::format_double(r.p_value) << ','
        << significance_stars(r.p_value) << ',' << (r.pseudo_inverse ? "true" : "false") << ','
        << r.B << ",\"" << r.description << "\"\n";
  }
}

ReportTable build_report(const AttVector& att, const Eigen::VectorXd& se, double alpha, int digits) {
  ReportTable table;
  for (const GtCell& c : att.index.cells()) {
    table.cohorts.push_back(c.g);
    table.periods.push_back(c.t);
  }
  auto unique_sorted = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  unique_sorted(table.cohorts);
  unique_sorted(table.periods);
  table.cells.assign(table.cohorts.size(), std::vector<std::string>(table.periods.size()));
  const bool has_se = se.size() == att.values.size();
  const double z = normal_critical_value(alpha);
  for (Index k = 0; k < att.values.size(); ++k) {
    const GtCell c = att.index[k];
    const auto row = static_cast<std::size_t>(
        std::lower_bound(table.cohorts.begin(), table.cohorts.end(), c.g) - table.cohorts.begin());
    const auto col = static_cast<std::size_t>(
        std::lower_bound(table.periods.begin(), table.periods.end(), c.t) - table.periods.begin());
    std::string cell = csv::format_fixed(att.values(k), digits);
    if (has_se) {
      cell += " (" + csv::format_fixed(se(k), digits) + ")";
      if (se(k) > 0.0 && std::abs(att.values(k)) > z * se(k)) cell += "**";
    }
    table.cells[row][col] = std::move(cell);
    ++table.filled;
  }
  return table;
}

void write_report_csv(std::ostream& out, const ReportTable& table) {
  out << "g";
  for (int t : table.periods) out << ",t=" << t;
  out << '\n';
  for (std::size_t r = 0; r < table.cohorts.size(); ++r) {
    out << table.cohorts[r];
    for (const auto& cell : table.cells[r]) out << ',' << cell;
    out << '\n';
  }
}

std::string format_report_text(const ReportTable& table) {
  std::vector<std::size_t> width(table.periods.size() + 1, 0);
  std::vector<std::vector<std::string>> grid;
  grid.emplace_back();
  grid.back().push_back("g \\ t");
  for (int t : table.periods) grid.back().push_back(std::to_string(t));
  for (std::size_t r = 0; r < table.cohorts.size(); ++r) {
    grid.emplace_back();
    grid.back().push_back(std::to_string(table.cohorts[r]));
    for (const auto& cell : table.cells[r]) grid.back().push_back(cell);
  }
  for (const auto& row : grid)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : grid) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += row[c];
      line.append(width[c] - row[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
  return out.str();
}

}  // namespace rtnm
