// rtnm command-line tool: validate, match, estimate, infer, test, report,
// simulate and study subcommands over CSV panels and JSON artifacts.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rtnm/att.hpp"
#include "rtnm/balance.hpp"
#include "rtnm/bootstrap.hpp"
#include "rtnm/csv.hpp"
#include "rtnm/design.hpp"
#include "rtnm/error.hpp"
#include "rtnm/homogeneity.hpp"
#include "rtnm/io.hpp"
#include "rtnm/panel.hpp"
#include "rtnm/parallel.hpp"
#include "rtnm/simulate.hpp"
#include "rtnm/study.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace rtnm;

namespace {

struct MatchOptions {
  std::string metric = "rank";
  std::optional<double> ridge;
  int max_stratum_size = 10;  // 0: unbounded
  int min_ratio = 1;
  int max_ratio = 0;          // 0: unbounded
};

DistanceSpec distance_spec(const MatchOptions& o) { return {parse_metric(o.metric), o.ridge}; }

MatchBounds match_bounds(const MatchOptions& o) {
  MatchBounds b;
  b.min_ratio = o.min_ratio;
  if (o.max_ratio > 0) b.max_ratio = o.max_ratio;
  if (o.max_stratum_size > 0) b.max_stratum_size = o.max_stratum_size;
  b.validate();
  return b;
}

PanelSchema load_schema(const std::string& path) {
  return path.empty() ? PanelSchema{} : PanelSchema::from_file(path);
}

std::pair<std::string, std::string> input_entry(const std::string& path) {
  return {fs::path(path).filename().string(), file_digest(path)};
}

template <class Fn>
void write_csv(const std::string& path, Fn&& fn) {
  std::ostringstream out;
  fn(out);
  write_text(path, out.str());
}

std::vector<std::string> header_of(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open panel " + path);
  std::string line;
  if (!csv::read_line(in, line)) throw Error(ErrorCode::Schema, "empty panel file");
  return csv::split_record(line);
}

// "1..4", "1,2,3,4" or "4" (meaning 1..4). The design always spans 1..G.
int parse_cohorts(const std::string& s) {
  auto bad = [&] { throw Error(ErrorCode::InvalidArgument, "bad cohort list '" + s + "'"); };
  std::vector<int> values;
  try {
    if (auto dots = s.find(".."); dots != std::string::npos) {
      const int lo = std::stoi(s.substr(0, dots)), hi = std::stoi(s.substr(dots + 2));
      if (lo != 1 || hi < 1) bad();
      return hi;
    }
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) values.push_back(std::stoi(item));
  } catch (const std::logic_error&) {
    bad();
  }
  if (values.size() == 1 && values[0] >= 1) return values[0];
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] != static_cast<int>(k) + 1) bad();
  }
  if (values.empty()) bad();
  return static_cast<int>(values.size());
}

std::optional<CovarianceEstimate> maybe_sigma(const std::string& path, const AttVector& att) {
  if (path.empty()) return std::nullopt;
  CovarianceEstimate s = CovarianceEstimate::from_json(artifact_data(read_json(path), "covariance"));
  if (!(s.index == att.index)) throw Error(ErrorCode::IndexMismatch, "covariance and estimates differ in cells");
  return s;
}

void add_match_options(CLI::App* app, MatchOptions& o) {
  app->add_option("--metric", o.metric, "Distance: rank or mahalanobis")->capture_default_str();
  app->add_option("--ridge", o.ridge, "Ridge added to the covariance diagonal");
  app->add_option("--max-stratum-size", o.max_stratum_size, "Cap on stratum size (0: none)")
      ->capture_default_str();
  app->add_option("--min-ratio", o.min_ratio, "Minimum comparisons per treated unit")->capture_default_str();
  app->add_option("--max-ratio", o.max_ratio, "Maximum comparisons per treated unit (0: none)")
      ->capture_default_str();
}

Json match_config(const MatchOptions& o, int max_cohort) {
  return {{"metric", o.metric},
          {"ridge", o.ridge ? Json(*o.ridge) : Json(nullptr)},
          {"max_stratum_size", o.max_stratum_size},
          {"min_ratio", o.min_ratio},
          {"max_ratio", o.max_ratio},
          {"max_cohort", max_cohort}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reverse-time nested matching for staggered adoption panels"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0: all cores)");

  // validate
  std::string v_input, v_schema;
  auto* validate = app.add_subcommand("validate", "Check a panel file and summarise it");
  validate->add_option("--input", v_input, "Panel CSV")->required();
  validate->add_option("--schema", v_schema, "Column-role JSON");

  // match
  std::string m_input, m_schema, m_out, m_balance, m_cohorts;
  std::uint64_t m_seed = 1;
  MatchOptions m_opts;
  auto* match = app.add_subcommand("match", "Build the nested design from covariates only");
  match->add_option("--input", m_input, "Panel CSV without outcomes")->required();
  match->add_option("--schema", m_schema, "Column-role JSON; must not name an outcome");
  match->add_option("--cohorts", m_cohorts, "Cohorts 1..G (default: every adoption period)");
  match->add_option("--seed", m_seed, "Tie-breaking seed")->capture_default_str();
  match->add_option("--out", m_out, "Design JSON")->required();
  match->add_option("--balance", m_balance, "Balance table CSV");
  add_match_options(match, m_opts);

  // estimate
  std::string e_input, e_schema, e_design, e_out, e_csv, e_adjust = "none";
  auto* estimate = app.add_subcommand("estimate", "Group-time effects from a design and outcomes");
  estimate->add_option("--input", e_input, "Panel CSV with outcomes")->required();
  estimate->add_option("--schema", e_schema, "Column-role JSON");
  estimate->add_option("--design", e_design, "Design JSON from match")->required();
  estimate->add_option("--adjust", e_adjust, "none or linear")->capture_default_str();
  estimate->add_option("--out", e_out, "Estimates JSON")->required();
  estimate->add_option("--csv", e_csv, "Estimates CSV");

  // infer
  std::string i_att, i_out, i_csv;
  int i_boot = 1000;
  std::uint64_t i_seed = 1;
  bool i_keep = false;
  auto* infer = app.add_subcommand("infer", "Block-bootstrap covariance of the estimates");
  infer->add_option("--att", i_att, "Estimates JSON")->required();
  infer->add_option("--boot", i_boot, "Bootstrap replicates")->capture_default_str();
  infer->add_option("--seed", i_seed, "Bootstrap seed")->capture_default_str();
  infer->add_option("--out", i_out, "Covariance JSON")->required();
  infer->add_option("--csv", i_csv, "Estimates CSV with standard errors");
  infer->add_flag("--keep-replicates", i_keep, "Store replicate estimates in the artifact");

  // test
  std::string t_att, t_sigma, t_out, t_csv;
  std::vector<std::string> t_hyp;
  int t_boot = 1000;
  std::uint64_t t_seed = 1;
  auto* test = app.add_subcommand("test", "Null-restricted bootstrap Wald tests of homogeneity");
  test->add_option("--att", t_att, "Estimates JSON")->required();
  test->add_option("--sigma", t_sigma, "Covariance JSON")->required();
  test->add_option("--hypothesis", t_hyp,
                   "kind:param, e.g. fixed-cohort:4, fixed-time:5, fixed-lag:0 (default: standard set)");
  test->add_option("--boot", t_boot, "Bootstrap replicates")->capture_default_str();
  test->add_option("--seed", t_seed, "Bootstrap seed")->capture_default_str();
  test->add_option("--out", t_out, "Test results JSON")->required();
  test->add_option("--csv", t_csv, "Test results CSV");

  // report
  std::string r_att, r_sigma, r_csv, r_text;
  double r_alpha = 0.05;
  int r_digits = 3;
  auto* report = app.add_subcommand("report", "Cohort by period table of estimates");
  report->add_option("--att", r_att, "Estimates JSON")->required();
  report->add_option("--sigma", r_sigma, "Covariance JSON");
  report->add_option("--alpha", r_alpha, "Level for ** marks")->capture_default_str();
  report->add_option("--digits", r_digits, "Decimals")->capture_default_str();
  report->add_option("--csv", r_csv, "Table CSV");
  report->add_option("--text", r_text, "Plain-text grid (default: stdout)");

  // simulate
  std::string s_config, s_out, s_covariates, s_truth;
  std::optional<std::uint64_t> s_seed;
  std::optional<Index> s_units;
  auto* simulate = app.add_subcommand("simulate", "Draw a synthetic staggered-adoption panel");
  simulate->add_option("--config", s_config, "Generator JSON");
  simulate->add_option("--seed", s_seed, "Overrides the config seed");
  simulate->add_option("--n-units", s_units, "Overrides the config unit count");
  simulate->add_option("--out", s_out, "Panel CSV with outcomes")->required();
  simulate->add_option("--covariates-out", s_covariates, "Same panel without outcomes");
  simulate->add_option("--truth", s_truth, "True group-time effects JSON");

  // study
  std::string y_config, y_out, y_cells, y_tests;
  std::optional<int> y_reps;
  std::optional<std::uint64_t> y_seed;
  auto* study = app.add_subcommand("study", "Monte-Carlo evaluation on simulated panels");
  study->add_option("--config", y_config, "Study JSON");
  study->add_option("--reps", y_reps, "Overrides the replicate count");
  study->add_option("--seed", y_seed, "Overrides the study seed");
  study->add_option("--out", y_out, "Summary JSON")->required();
  study->add_option("--cells-csv", y_cells, "Per-cell summary CSV");
  study->add_option("--tests-csv", y_tests, "Rejection rates CSV");

  CLI11_PARSE(app, argc, argv);
  set_max_threads(threads);

  try {
    if (*validate) {
      const PanelDataset data = load_panel(v_input, load_schema(v_schema));
      std::cout << "units " << data.n_units() << "\nperiods " << data.t0() << ".." << data.t_max()
                << "\ncovariates " << data.n_covariates() << "\noutcomes "
                << (data.has_outcomes() ? "yes" : "no") << '\n';
      std::map<Cohort, Index> sizes;
      for (const Cohort& c : data.adoption()) ++sizes[c];
      for (const auto& [c, n] : sizes) std::cout << "cohort " << c.to_string() << ' ' << n << '\n';
      return 0;
    }

    if (*match) {
      PanelSchema schema = load_schema(m_schema);
      if (m_schema.empty()) schema.outcome.reset();
      if (schema.outcome) {
        throw Error(ErrorCode::InvalidArgument,
                    "match reads covariates only; remove 'outcome' from the schema");
      }
      if (schema.covariates.empty()) {
        const auto header = header_of(m_input);
        if (std::find(header.begin(), header.end(), "outcome") != header.end()) {
          throw Error(ErrorCode::InvalidArgument,
                      "panel has an 'outcome' column; list the covariates in a schema or drop it");
        }
      }
      const PanelDataset data = load_panel(m_input, schema);
      const auto present = data.cohorts();
      if (present.empty()) throw Error(ErrorCode::EmptyCohort, "panel has no treated cohort");
      const int G = m_cohorts.empty() ? present.back() : parse_cohorts(m_cohorts);
      const NestedDesign design =
          run_rtnm(data, G, distance_spec(m_opts), match_bounds(m_opts), m_seed);
      const NestingReport check = verify_nested(design);
      if (!check.ok()) {
        const auto& v = check.violations.front();
        throw Error(ErrorCode::InvalidArgument, "design failed the nesting check at level " +
                                                    std::to_string(v.g) + ": " + v.detail);
      }
      RunManifest manifest;
      manifest.stage = "match";
      manifest.config = match_config(m_opts, G);
      manifest.seeds["match"] = m_seed;
      manifest.inputs.push_back(input_entry(m_input));
      if (!m_schema.empty()) manifest.inputs.push_back(input_entry(m_schema));
      if (!m_balance.empty()) manifest.outputs.push_back(fs::path(m_balance).filename().string());
      write_json(m_out, make_artifact("design", manifest, design.to_json()));
      if (!m_balance.empty()) {
        const BalanceReport bal = balance_report(data, design);
        write_csv(m_balance, [&](std::ostream& o) { write_balance_csv(o, bal); });
      }
      return 0;
    }

    if (*estimate) {
      const PanelDataset data = load_panel(e_input, load_schema(e_schema));
      const NestedDesign design = NestedDesign::from_json(artifact_data(read_json(e_design), "design"));
      const Adjustment adjust = parse_adjustment(e_adjust);
      const AttVector att =
          estimate_att(data, design, GtIndex::all(design.max_cohort, data.t_max()), adjust);
      RunManifest manifest;
      manifest.stage = "estimate";
      manifest.config = {{"adjust", e_adjust}};
      manifest.inputs = {input_entry(e_input), input_entry(e_design)};
      if (!e_csv.empty()) manifest.outputs.push_back(fs::path(e_csv).filename().string());
      write_json(e_out, make_artifact("estimates", manifest, att.to_json()));
      if (!e_csv.empty()) write_csv(e_csv, [&](std::ostream& o) { write_estimates_csv(o, att, {}); });
      return 0;
    }

    if (*infer) {
      const AttVector att = AttVector::from_json(artifact_data(read_json(i_att), "estimates"));
      const CovarianceEstimate sigma = bootstrap_covariance(att, i_boot, i_seed, i_keep);
      RunManifest manifest;
      manifest.stage = "infer";
      manifest.config = {{"boot", i_boot}, {"keep_replicates", i_keep}};
      manifest.seeds["bootstrap"] = i_seed;
      manifest.inputs = {input_entry(i_att)};
      if (!i_csv.empty()) manifest.outputs.push_back(fs::path(i_csv).filename().string());
      write_json(i_out, make_artifact("covariance", manifest, sigma.to_json()));
      if (!i_csv.empty()) {
        write_csv(i_csv, [&](std::ostream& o) { write_estimates_csv(o, att, sigma.standard_errors()); });
      }
      if (sigma.repaired) {
        std::cerr << "warning: covariance had negative eigenvalues (min "
                  << sigma.min_eigenvalue << "); floored at zero\n";
      }
      return 0;
    }

    if (*test) {
      const AttVector att = AttVector::from_json(artifact_data(read_json(t_att), "estimates"));
      const CovarianceEstimate sigma = *maybe_sigma(t_sigma, att);
      std::vector<HypothesisSpec> specs;
      if (t_hyp.empty()) {
        specs = standard_hypotheses(att.index);
      } else {
        for (const auto& h : t_hyp) {
          const auto colon = h.find(':');
          if (colon == std::string::npos) {
            throw Error(ErrorCode::InvalidArgument, "hypothesis must look like kind:param, got '" + h + "'");
          }
          int param = 0;
          try {
            param = std::stoi(h.substr(colon + 1));
          } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidArgument, "bad hypothesis parameter in '" + h + "'");
          }
          specs.push_back(build_hypothesis(att.index, parse_hypothesis_kind(h.substr(0, colon)), param));
        }
      }
      std::vector<TestResult> results;
      Json out = Json::array();
      for (const auto& spec : specs) {
        results.push_back(wald_test(att, sigma, spec, t_boot, t_seed));
        Json r = results.back().to_json();
        r["kind"] = to_string(spec.kind);
        r["stars"] = significance_stars(results.back().p_value);
        out.push_back(std::move(r));
        if (results.back().pseudo_inverse) {
          std::cerr << "warning: " << spec.label << " used a pseudo-inverse contrast covariance\n";
        }
      }
      RunManifest manifest;
      manifest.stage = "test";
      manifest.config = {{"boot", t_boot}, {"hypotheses", t_hyp}};
      manifest.seeds["test"] = t_seed;
      manifest.inputs = {input_entry(t_att), input_entry(t_sigma)};
      if (!t_csv.empty()) manifest.outputs.push_back(fs::path(t_csv).filename().string());
      write_json(t_out, make_artifact("tests", manifest, out));
      if (!t_csv.empty()) write_csv(t_csv, [&](std::ostream& o) { write_tests_csv(o, results, specs); });
      return 0;
    }

    if (*report) {
      const AttVector att = AttVector::from_json(artifact_data(read_json(r_att), "estimates"));
      const auto sigma = maybe_sigma(r_sigma, att);
      const ReportTable table =
          build_report(att, sigma ? sigma->standard_errors() : Eigen::VectorXd(), r_alpha, r_digits);
      if (!r_csv.empty()) write_csv(r_csv, [&](std::ostream& o) { write_report_csv(o, table); });
      const std::string text = format_report_text(table);
      if (r_text.empty()) std::cout << text;
      else write_text(r_text, text);
      return 0;
    }

    if (*simulate) {
      DgpConfig config = s_config.empty() ? DgpConfig{} : DgpConfig::from_file(s_config);
      if (s_seed) config.seed = *s_seed;
      if (s_units) config.n_units = *s_units;
      const SimulatedPanel sim = generate_panel(config);
      write_panel(fs::path(s_out), sim.data);
      if (!s_covariates.empty()) write_panel(fs::path(s_covariates), sim.data.without_outcomes());
      if (!s_truth.empty()) {
        RunManifest manifest;
        manifest.stage = "simulate";
        manifest.config = config.to_json();
        manifest.seeds["simulate"] = config.seed;
        manifest.outputs.push_back(fs::path(s_out).filename().string());
        write_json(s_truth, make_artifact("truth", manifest, sim.truth.to_json()));
      }
      return 0;
    }

    if (*study) {
      StudyConfig config = y_config.empty() ? StudyConfig{} : StudyConfig::from_json(read_json(y_config));
      if (y_reps) config.reps = *y_reps;
      if (y_seed) config.seed = *y_seed;
      const StudyResult result = run_study(config);
      Json cells = Json::array();
      const Eigen::VectorXd truth = result.mean_truth(), bias = result.bias(),
                            naive = result.naive_bias(), rmse = result.rmse(),
                            se = result.mean_se(), cover = result.coverage();
      for (Index k = 0; k < result.index.size(); ++k) {
        Json c = {{"g", result.index[k].g}, {"t", result.index[k].t}, {"truth", truth(k)},
                  {"bias", bias(k)}, {"naive_bias", naive(k)}, {"rmse", rmse(k)}};
        if (se.size()) {
          c["mean_se"] = se(k);
          c["coverage"] = cover(k);
        }
        cells.push_back(std::move(c));
      }
      Json tests = Json::array();
      const auto rates = result.rejection_rate(config.alpha);
      for (std::size_t h = 0; h < rates.size(); ++h) {
        tests.push_back({{"hypothesis", result.hypotheses[h]}, {"rejection_rate", rates[h]}});
      }
      Json data = {{"cells", cells},
                   {"tests", tests},
                   {"mean_abs_bias", result.mean_abs_bias()},
                   {"mean_abs_naive_bias", result.mean_abs_naive_bias()}};
      RunManifest manifest;
      manifest.stage = "study";
      manifest.config = config.to_json();
      manifest.seeds["study"] = config.seed;
      if (!y_config.empty()) manifest.inputs.push_back(input_entry(y_config));
      write_json(y_out, make_artifact("study", manifest, data));
      if (!y_cells.empty()) write_csv(y_cells, [&](std::ostream& o) { write_study_cells(o, result); });
      if (!y_tests.empty()) {
        write_csv(y_tests, [&](std::ostream& o) { write_study_tests(o, result, config.alpha); });
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
