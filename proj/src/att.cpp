#include "rtnm/att.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "rtnm/error.hpp"
#include "rtnm/parallel.hpp"

namespace rtnm {

GtIndex::GtIndex(std::vector<GtCell> cells) : cells_(std::move(cells)) {
  std::set<GtCell> seen;
  for (const GtCell& c : cells_) {
    if (c.g < 1 || c.t < c.g) {
      throw Error(ErrorCode::InvalidArgument, "group-time pair (" + std::to_string(c.g) + "," +
                                                  std::to_string(c.t) + ") needs 1 <= g <= t");
    }
    if (!seen.insert(c).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate group-time pair (" +
                                                  std::to_string(c.g) + "," + std::to_string(c.t) + ")");
    }
  }
}

GtIndex GtIndex::all(int max_cohort, int t_max) {
  std::vector<GtCell> cells;
  for (int g = 1; g <= max_cohort; ++g)
    for (int t = g; t <= t_max; ++t) cells.push_back({g, t});
  return GtIndex(std::move(cells));
}

std::optional<Index> GtIndex::find(int g, int t) const {
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    if (cells_[k].g == g && cells_[k].t == t) return static_cast<Index>(k);
  }
  return std::nullopt;
}

std::string GtIndex::label(Index k) const {
  const GtCell& c = (*this)[k];
  return "(" + std::to_string(c.g) + "," + std::to_string(c.t) + ")";
}

nlohmann::json GtIndex::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const GtCell& c : cells_) j.push_back({c.g, c.t});
  return j;
}

GtIndex GtIndex::from_json(const nlohmann::json& j) {
  std::vector<GtCell> cells;
  try {
    for (const auto& e : j) cells.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("malformed group-time index: ") + e.what());
  }
  return GtIndex(std::move(cells));
}

std::string to_string(Adjustment a) { return a == Adjustment::None ? "none" : "linear"; }

Adjustment parse_adjustment(const std::string& s) {
  if (s == "none") return Adjustment::None;
  if (s == "linear") return Adjustment::Linear;
  throw Error(ErrorCode::InvalidArgument, "unknown adjustment '" + s + "'");
}

nlohmann::json AttVector::to_json() const {
  nlohmann::json j;
  j["index"] = index.to_json();
  j["adjust"] = to_string(adjust);
  j["values"] = std::vector<double>(values.data(), values.data() + values.size());
  j["strata_used"] = strata_used;
  j["strata_dropped"] = strata_dropped;
  j["block_ids"] = block_ids;
  nlohmann::json rows = nlohmann::json::array();
  for (Index m = 0; m < block_contributions.rows(); ++m) {
    std::vector<double> r(static_cast<std::size_t>(block_contributions.cols()));
    for (Index k = 0; k < block_contributions.cols(); ++k) r[static_cast<std::size_t>(k)] = block_contributions(m, k);
    rows.push_back(r);
  }
  j["block_contributions"] = rows;
  return j;
}

AttVector AttVector::from_json(const nlohmann::json& j) {
  AttVector a;
  try {
    a.index = GtIndex::from_json(j.at("index"));
    a.adjust = parse_adjustment(j.at("adjust").get<std::string>());
    const auto v = j.at("values").get<std::vector<double>>();
    if (static_cast<Index>(v.size()) != a.index.size()) {
      throw Error(ErrorCode::IndexMismatch, "estimate length does not match its index");
    }
    a.values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
    a.strata_used = j.at("strata_used").get<std::vector<int>>();
    a.strata_dropped = j.at("strata_dropped").get<std::vector<int>>();
    a.block_ids = j.at("block_ids").get<std::vector<int>>();
    const auto& rows = j.at("block_contributions");
    a.block_contributions.resize(static_cast<Index>(rows.size()), a.index.size());
    for (std::size_t m = 0; m < rows.size(); ++m) {
      const auto r = rows[m].get<std::vector<double>>();
      if (static_cast<Index>(r.size()) != a.index.size()) {
        throw Error(ErrorCode::IndexMismatch, "block contribution row has the wrong length");
      }
      for (std::size_t k = 0; k < r.size(); ++k) a.block_contributions(static_cast<Index>(m), static_cast<Index>(k)) = r[k];
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("malformed estimate: ") + e.what());
  }
  return a;
}

namespace {

void check_index(const PanelDataset& data, const GtIndex& index, int max_cohort) {
  if (index.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty group-time index");
  if (!data.has_outcomes()) throw Error(ErrorCode::MissingOutcome, "panel has no outcomes");
  for (const GtCell& c : index.cells()) {
    if (c.t > data.t_max() || c.g > max_cohort) {
      throw Error(ErrorCode::IndexMismatch, "cell (" + std::to_string(c.g) + "," +
                                                std::to_string(c.t) + ") lies outside the design");
    }
  }
}

struct CellStrata {
  std::vector<int> stratum;                  // level-g stratum index
  std::vector<std::vector<Index>> treated;   // cohort-g members
  std::vector<std::vector<Index>> compared;  // members with G_i > t
  int dropped = 0;
};

CellStrata cell_strata(const NestedDesign& design, const GtCell& cell) {
  CellStrata cs;
  const auto& strata = design.level(cell.g).strata;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    std::vector<Index> tr, co;
    for (Index u : strata[s].members) {
      const Cohort c = design.cohort(u);
      if (c == Cohort::at(cell.g)) tr.push_back(u);
      else if (c.untreated_at(cell.t)) co.push_back(u);
    }
    if (tr.empty()) continue;
    if (co.empty()) {
      ++cs.dropped;
      continue;
    }
    cs.stratum.push_back(static_cast<int>(s));
    cs.treated.push_back(std::move(tr));
    cs.compared.push_back(std::move(co));
  }
  return cs;
}

struct CellOutcomes {
  std::vector<Index> units;  // treated and compared units, stratum by stratum
  Eigen::VectorXd y;         // outcome at t, residualised on the window when adjusted
  Eigen::VectorXd influence; // per-unit influence on the D coefficient (linear only)
};

CellOutcomes adjusted_outcomes(const PanelDataset& data, const CellStrata& cs, const GtCell& cell,
                               Adjustment adjust) {
  CellOutcomes out;
  std::vector<Index>& units = out.units;
  std::vector<double> w;
  std::vector<double> d;
  for (std::size_t s = 0; s < cs.stratum.size(); ++s) {
    const double share = static_cast<double>(cs.treated[s].size()) /
                         static_cast<double>(cs.compared[s].size());
    for (Index u : cs.treated[s]) {
      units.push_back(u);
      w.push_back(1.0);
      d.push_back(1.0);
    }
    for (Index u : cs.compared[s]) {
      units.push_back(u);
      w.push_back(share);
      d.push_back(0.0);
    }
  }
  const Index n = static_cast<Index>(units.size());
  Eigen::VectorXd y(n);
  for (Index r = 0; r < n; ++r) y(r) = data.outcome(units[static_cast<std::size_t>(r)], cell.t);
  if (adjust == Adjustment::None) {
    out.y = std::move(y);
    return out;
  }

  const Eigen::MatrixXd x = covariate_windows(data, units, cell.g);
  Eigen::MatrixXd design(n, x.cols() + 2);
  design.col(0).setOnes();
  for (Index r = 0; r < n; ++r) design(r, 1) = d[static_cast<std::size_t>(r)];
  design.rightCols(x.cols()) = x;
  Eigen::VectorXd sw(n);
  for (Index r = 0; r < n; ++r) sw(r) = std::sqrt(w[static_cast<std::size_t>(r)]);
  const Eigen::MatrixXd a = sw.asDiagonal() * design;
  const Eigen::VectorXd b = sw.asDiagonal() * y;
  const Eigen::VectorXd beta = a.completeOrthogonalDecomposition().solve(b);
  out.y = y - x * beta.tail(x.cols());

  // psi_i = e_D' (Z'WZ)^+ z_i w_i r_i; the normal equations make these sum to zero.
  const Eigen::MatrixXd gram = a.transpose() * a;
  const Eigen::VectorXd c =
      gram.completeOrthogonalDecomposition().solve(Eigen::VectorXd::Unit(design.cols(), 1));
  const Eigen::VectorXd resid = y - design * beta;
  out.influence = (design * c).cwiseProduct(sw.cwiseAbs2()).cwiseProduct(resid);
  return out;
}

double mean_of(const Eigen::VectorXd& y, const std::vector<Index>& pick,
               const std::vector<Index>& pos) {
  double s = 0.0;
  for (Index u : pick) s += y(pos[static_cast<std::size_t>(u)]);
  return s / static_cast<double>(pick.size());
}

}  // namespace

AttVector estimate_att(const PanelDataset& data, const NestedDesign& design, const GtIndex& index,
                       Adjustment adjust) {
  design.check_matches(data);
  check_index(data, index, design.max_cohort);
  const Index K = index.size();
  const auto& blocks = design.blocks();
  const Index n1 = static_cast<Index>(blocks.size());
  if (n1 == 0) throw Error(ErrorCode::NoBlockContributions, "design has no outermost strata");

  AttVector out;
  out.index = index;
  out.adjust = adjust;
  out.values.resize(K);
  out.block_contributions = Eigen::MatrixXd::Zero(n1, K);
  out.block_ids.resize(static_cast<std::size_t>(n1));
  for (Index m = 0; m < n1; ++m) out.block_ids[static_cast<std::size_t>(m)] = static_cast<int>(m);
  out.strata_used.assign(static_cast<std::size_t>(K), 0);
  out.strata_dropped.assign(static_cast<std::size_t>(K), 0);

  parallel_for(static_cast<std::size_t>(K), [&](std::size_t k) {
    const GtCell& cell = index.cells()[k];
    const CellStrata cs = cell_strata(design, cell);
    out.strata_dropped[k] = cs.dropped;
    out.strata_used[k] = static_cast<int>(cs.stratum.size());
    if (cs.stratum.empty()) {
      throw Error(ErrorCode::EmptyCell, "no stratum has comparisons for cell " +
                                            index.label(static_cast<Index>(k)));
    }
    const CellOutcomes fit = adjusted_outcomes(data, cs, cell, adjust);
    const std::vector<Index>& units = fit.units;
    const Eigen::VectorXd& y = fit.y;
    std::vector<Index> pos(static_cast<std::size_t>(data.n_units()), -1);
    for (std::size_t r = 0; r < units.size(); ++r) pos[static_cast<std::size_t>(units[r])] = static_cast<Index>(r);

    double n_treated = 0.0;
    for (const auto& tr : cs.treated) n_treated += static_cast<double>(tr.size());
    std::vector<double> local(cs.stratum.size()), weight(cs.stratum.size());
    double tau = 0.0;
    for (std::size_t s = 0; s < cs.stratum.size(); ++s) {
      local[s] = mean_of(y, cs.treated[s], pos) - mean_of(y, cs.compared[s], pos);
      weight[s] = static_cast<double>(cs.treated[s].size()) / n_treated;
      tau += weight[s] * local[s];
    }
    out.values(static_cast<Index>(k)) = tau;

    // Linearised block shares: row_m = tau + n1 * (influence of block m). Unadjusted,
    // the influence of stratum s is w_s (local_s - tau); adjusted, it is the sum of
    // the members' influence on the weighted regression coefficient.
    const auto col = static_cast<Index>(k);
    out.block_contributions.col(col).setConstant(tau);
    const double scale = static_cast<double>(n1);
    std::size_t r = 0;
    for (std::size_t s = 0; s < cs.stratum.size(); ++s) {
      const int m = design.block_of(cell.g, cs.stratum[s]);
      if (adjust == Adjustment::None) {
        out.block_contributions(m, col) += scale * weight[s] * (local[s] - tau);
        continue;
      }
      const std::size_t members = cs.treated[s].size() + cs.compared[s].size();
      for (std::size_t e = r + members; r < e; ++r) {
        out.block_contributions(m, col) += scale * fit.influence(static_cast<Index>(r));
      }
    }
  });
  return out;
}

AttVector naive_att(const PanelDataset& data, const GtIndex& index) {
  check_index(data, index, data.t_max());
  AttVector out;
  out.index = index;
  out.values.resize(index.size());
  out.strata_used.assign(static_cast<std::size_t>(index.size()), 0);
  out.strata_dropped.assign(static_cast<std::size_t>(index.size()), 0);
  for (Index k = 0; k < index.size(); ++k) {
    const GtCell& c = index[k];
    double st = 0.0, sc = 0.0;
    Index nt = 0, nc = 0;
    for (Index i = 0; i < data.n_units(); ++i) {
      const Cohort a = data.adoption(i);
      if (a == Cohort::at(c.g)) {
        st += data.outcome(i, c.t);
        ++nt;
      } else if (a.untreated_at(c.t)) {
        sc += data.outcome(i, c.t);
        ++nc;
      }
    }
    if (nt == 0 || nc == 0) {
      throw Error(ErrorCode::EmptyCell, "cell " + index.label(k) + " has an empty group");
    }
    out.values(k) = st / static_cast<double>(nt) - sc / static_cast<double>(nc);
  }
  return out;
}

}  // namespace rtnm
