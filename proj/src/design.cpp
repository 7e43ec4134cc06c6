#include "rtnm/design.hpp"

#include <algorithm>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "rtnm/error.hpp"
#include "rtnm/min_cost_flow.hpp"
#include "rtnm/random.hpp"

namespace rtnm {

namespace {

using Json = nlohmann::json;

struct Building {
  std::vector<Index> treated;
  std::vector<int> children;
  std::vector<Index> attached;
};

std::vector<Index> sorted_union(std::vector<Index> a, const std::vector<Index>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  return a;
}

// Largest number of additional leaves a single-treated stratum with `leaves`
// pseudo-controls may take; n_loose stands in for "unbounded".
Index spare_capacity(const MatchBounds& bounds, Index leaves, Index n_loose) {
  Index cap = n_loose;
  if (bounds.max_ratio) cap = std::min<Index>(cap, *bounds.max_ratio - leaves);
  if (bounds.max_stratum_size) cap = std::min<Index>(cap, *bounds.max_stratum_size - 1 - leaves);
  return std::max<Index>(cap, 0);
}

// Assigns as many loose units as capacity allows at minimum total distance
// to the treated centres. Returns, per loose unit, the stratum it joins or -1.
std::vector<int> attach_loose(const FittedMetric& metric, const std::vector<Index>& loose,
                              const std::vector<Index>& centre, const std::vector<Index>& cap) {
  std::vector<int> open;
  Index total_cap = 0;
  for (std::size_t s = 0; s < cap.size(); ++s) {
    if (cap[s] > 0) {
      open.push_back(static_cast<int>(s));
      total_cap += cap[s];
    }
  }
  std::vector<int> result(loose.size(), -1);
  const Index n_loose = static_cast<Index>(loose.size());
  const Index amount = std::min(n_loose, total_cap);
  if (amount == 0) return result;

  // Nodes: 0 source, loose units, open strata, sink.
  const auto n_open = static_cast<int>(open.size());
  const int source = 0;
  const int sink = static_cast<int>(n_loose) + n_open + 1;
  flow::MinCostFlow net(sink + 1);
  const std::int64_t safe = flow::MinCostFlow::max_safe_cost(sink + 1);
  net.set_supply(source, amount);
  net.set_supply(sink, -amount);
  net.reserve_arcs(static_cast<std::size_t>(n_loose) * open.size() +
                   static_cast<std::size_t>(n_loose) + open.size());
  for (Index u = 0; u < n_loose; ++u) net.add_arc(source, static_cast<int>(u) + 1, 0, 1, 0);
  const int first = net.n_arcs();
  for (Index u = 0; u < n_loose; ++u) {
    for (int k = 0; k < n_open; ++k) {
      const std::int64_t c = scale_distance(
          unit_distance(metric, centre[static_cast<std::size_t>(open[static_cast<std::size_t>(k)])],
                        loose[static_cast<std::size_t>(u)]));
      if (c > safe) throw Error(ErrorCode::CostOverflow, "scaled distances exceed the safe range");
      net.add_arc(static_cast<int>(u) + 1, static_cast<int>(n_loose) + 1 + k, 0, 1, c);
    }
  }
  for (int k = 0; k < n_open; ++k) {
    net.add_arc(static_cast<int>(n_loose) + 1 + k, sink, 0, cap[static_cast<std::size_t>(open[static_cast<std::size_t>(k)])], 0);
  }
  if (net.solve() != flow::MinCostFlow::Status::Optimal) {
    throw Error(ErrorCode::Infeasible, "could not place carried-forward comparisons");
  }
  for (Index u = 0; u < n_loose; ++u) {
    for (int k = 0; k < n_open; ++k) {
      if (net.flow(first + static_cast<int>(u) * n_open + k) > 0) {
        result[static_cast<std::size_t>(u)] = open[static_cast<std::size_t>(k)];
      }
    }
  }
  return result;
}

std::string cohort_label(Cohort c) { return c.to_string(); }

Json cohort_json(Cohort c) {
  if (c.is_never()) return "inf";
  return c.period();
}

Cohort cohort_from_json(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return Cohort::never();
    throw Error(ErrorCode::Schema, "bad cohort label in design");
  }
  return Cohort::at(j.get<int>());
}

}  // namespace

const DesignLevel& NestedDesign::level(int g) const {
  if (g < 1 || g > static_cast<int>(levels.size())) {
    throw Error(ErrorCode::InvalidArgument, "design has no level " + std::to_string(g));
  }
  return levels[static_cast<std::size_t>(g - 1)];
}

int NestedDesign::block_of(int g, int stratum) const {
  while (g > 1) {
    stratum = level(g).strata[static_cast<std::size_t>(stratum)].parent;
    --g;
  }
  return stratum;
}

void NestedDesign::check_matches(const PanelDataset& data) const {
  if (data.n_units() != n_units()) {
    throw Error(ErrorCode::IndexMismatch, "design and panel have different unit counts");
  }
  for (Index i = 0; i < n_units(); ++i) {
    if (data.unit_id(i) != unit_ids[static_cast<std::size_t>(i)] ||
        data.adoption(i) != cohort(i)) {
      throw Error(ErrorCode::IndexMismatch,
                  "design does not match panel at unit " + unit_ids[static_cast<std::size_t>(i)]);
    }
  }
}

NestedDesign run_rtnm(const PanelDataset& data, int max_cohort, const DistanceSpec& spec,
                      const MatchBounds& bounds, std::uint64_t seed) {
  bounds.validate();
  if (max_cohort < 1 || max_cohort > data.t_max()) {
    throw Error(ErrorCode::InvalidArgument, "latest cohort must lie in 1.." +
                                                std::to_string(data.t_max()));
  }
  const int G = max_cohort;
  const Index n = data.n_units();

  std::vector<std::vector<Index>> cohort_units(static_cast<std::size_t>(G + 1));
  std::vector<Index> pool;
  for (Index i = 0; i < n; ++i) {
    const Cohort c = data.adoption(i);
    if (c.untreated_at(G)) {
      pool.push_back(i);
    } else {
      cohort_units[static_cast<std::size_t>(c.period())].push_back(i);
    }
  }
  for (int g = 1; g <= G; ++g) {
    if (cohort_units[static_cast<std::size_t>(g)].empty()) {
      throw Error(ErrorCode::EmptyCohort, "cohort " + std::to_string(g) + " has no units");
    }
  }
  if (pool.empty()) {
    throw Error(ErrorCode::EmptyCohort,
                "no units remain untreated after period " + std::to_string(G));
  }

  NestedDesign design;
  design.unit_ids = data.unit_ids();
  design.adoption = data.adoption();
  design.max_cohort = G;
  design.spec = spec;
  design.bounds = bounds;
  design.seed = seed;
  design.levels.resize(static_cast<std::size_t>(G));

  std::vector<Index> loose;

  // Level G: cohort G against individual pool units.
  {
    const auto& treated = cohort_units[static_cast<std::size_t>(G)];
    const FittedMetric metric = fit_metric(data, G, sorted_union(treated, pool), spec);
    std::vector<std::vector<Index>> singles;
    singles.reserve(pool.size());
    for (Index u : pool) singles.push_back({u});
    FullMatchProblem problem;
    problem.distance = build_distance_matrix(metric, treated, singles).values;
    problem.bounds = bounds;
    problem.allow_surplus = true;
    const Stratification s = solve_full_match(problem, mix64(seed, static_cast<std::uint64_t>(G)));

    DesignLevel& lvl = design.levels[static_cast<std::size_t>(G - 1)];
    lvl.g = G;
    lvl.objective = s.objective;
    for (const auto& st : s.strata) {
      DesignStratum ds;
      for (Index r : st.treated) ds.members.push_back(treated[static_cast<std::size_t>(r)]);
      for (Index c : st.comparisons) ds.members.push_back(pool[static_cast<std::size_t>(c)]);
      std::sort(ds.members.begin(), ds.members.end());
      lvl.strata.push_back(std::move(ds));
    }
    for (Index c : s.unmatched) loose.push_back(pool[static_cast<std::size_t>(c)]);
  }

  for (int g = G - 1; g >= 1; --g) {
    const auto& treated = cohort_units[static_cast<std::size_t>(g)];
    DesignLevel& inner = design.levels[static_cast<std::size_t>(g)];

    std::vector<Index> fit_pool = treated;
    std::vector<std::vector<Index>> pseudo;
    pseudo.reserve(inner.strata.size());
    for (const auto& st : inner.strata) {
      pseudo.push_back(st.members);
      fit_pool.insert(fit_pool.end(), st.members.begin(), st.members.end());
    }
    fit_pool.insert(fit_pool.end(), loose.begin(), loose.end());
    std::sort(fit_pool.begin(), fit_pool.end());
    const FittedMetric metric = fit_metric(data, g, fit_pool, spec);

    FullMatchProblem problem;
    problem.distance = build_distance_matrix(metric, treated, pseudo).values;
    problem.bounds = bounds;
    const Stratification s = solve_full_match(problem, mix64(seed, static_cast<std::uint64_t>(g)));

    std::vector<Building> built;
    built.reserve(s.strata.size());
    for (const auto& st : s.strata) {
      Building b;
      for (Index r : st.treated) b.treated.push_back(treated[static_cast<std::size_t>(r)]);
      for (Index c : st.comparisons) b.children.push_back(static_cast<int>(c));
      built.push_back(std::move(b));
    }

    DesignLevel& lvl = design.levels[static_cast<std::size_t>(g - 1)];
    lvl.g = g;
    lvl.objective = s.objective;

    if (!loose.empty()) {
      std::vector<Index> centre(built.size(), -1);
      std::vector<Index> cap(built.size(), 0);
      for (std::size_t k = 0; k < built.size(); ++k) {
        if (built[k].treated.size() != 1) continue;
        centre[k] = built[k].treated.front();
        cap[k] = spare_capacity(bounds, static_cast<Index>(built[k].children.size()),
                                static_cast<Index>(loose.size()));
      }
      const std::vector<int> where = attach_loose(metric, loose, centre, cap);
      std::vector<Index> still_loose;
      for (std::size_t u = 0; u < loose.size(); ++u) {
        if (where[u] >= 0) {
          built[static_cast<std::size_t>(where[u])].attached.push_back(loose[u]);
          ++lvl.attached;
        } else {
          still_loose.push_back(loose[u]);
        }
      }
      loose = std::move(still_loose);
    }

    for (std::size_t k = 0; k < built.size(); ++k) {
      DesignStratum ds;
      ds.members = built[k].treated;
      ds.members.insert(ds.members.end(), built[k].attached.begin(), built[k].attached.end());
      for (int c : built[k].children) {
        auto& child = inner.strata[static_cast<std::size_t>(c)];
        child.parent = static_cast<int>(k);
        ds.members.insert(ds.members.end(), child.members.begin(), child.members.end());
      }
      std::sort(ds.members.begin(), ds.members.end());
      lvl.strata.push_back(std::move(ds));
    }
  }

  std::sort(loose.begin(), loose.end());
  design.unused = std::move(loose);
  return design;
}

std::string to_string(NestingViolation::Kind kind) {
  switch (kind) {
    case NestingViolation::Kind::Parent: return "parent";
    case NestingViolation::Kind::Coverage: return "coverage";
    case NestingViolation::Kind::Overlap: return "overlap";
    case NestingViolation::Kind::Missing: return "missing";
    case NestingViolation::Kind::Cohort: return "cohort";
  }
  return "unknown";
}

NestingReport verify_nested(const NestedDesign& design) {
  NestingReport report;
  const int G = design.max_cohort;
  const Index n = design.n_units();
  auto add = [&](NestingViolation::Kind kind, int g, int s, std::string detail) {
    report.violations.push_back({kind, g, s, std::move(detail)});
  };
  if (static_cast<int>(design.levels.size()) != G) {
    add(NestingViolation::Kind::Missing, 0, -1, "design has " +
        std::to_string(design.levels.size()) + " levels, expected " + std::to_string(G));
    return report;
  }

  for (int g = 1; g <= G; ++g) {
    const auto& strata = design.levels[static_cast<std::size_t>(g - 1)].strata;
    std::vector<int> owner(static_cast<std::size_t>(n), -1);
    for (std::size_t s = 0; s < strata.size(); ++s) {
      const auto& st = strata[s];
      const int si = static_cast<int>(s);
      std::set<Cohort> seen;
      bool has_pool = false;
      for (Index u : st.members) {
        if (u < 0 || u >= n) {
          add(NestingViolation::Kind::Cohort, g, si, "unit index " + std::to_string(u) + " out of range");
          continue;
        }
        auto& o = owner[static_cast<std::size_t>(u)];
        if (o >= 0) {
          add(NestingViolation::Kind::Overlap, g, si,
              "unit " + design.unit_ids[static_cast<std::size_t>(u)] + " also in stratum " +
                  std::to_string(o));
        } else {
          o = si;
        }
        const Cohort c = design.cohort(u);
        if (c.treated_at(g - 1)) {
          add(NestingViolation::Kind::Cohort, g, si,
              "unit " + design.unit_ids[static_cast<std::size_t>(u)] + " of cohort " +
                  cohort_label(c) + " cannot appear at level " + std::to_string(g));
        }
        if (c.untreated_at(G)) {
          has_pool = true;
        } else {
          seen.insert(c);
        }
      }
      for (int h = g; h <= G; ++h) {
        if (!seen.count(Cohort::at(h))) {
          add(NestingViolation::Kind::Coverage, g, si, "no unit of cohort " + std::to_string(h));
        }
      }
      if (!has_pool) {
        add(NestingViolation::Kind::Coverage, g, si,
            "no unit untreated through period " + std::to_string(G));
      }

      if (g == 1) {
        if (st.parent != -1) add(NestingViolation::Kind::Parent, g, si, "level-1 stratum has a parent");
        continue;
      }
      const auto& outer = design.levels[static_cast<std::size_t>(g - 2)].strata;
      if (st.parent < 0 || st.parent >= static_cast<int>(outer.size())) {
        add(NestingViolation::Kind::Parent, g, si, "parent index " + std::to_string(st.parent) + " out of range");
        continue;
      }
      const auto& pm = outer[static_cast<std::size_t>(st.parent)].members;
      if (!std::includes(pm.begin(), pm.end(), st.members.begin(), st.members.end())) {
        add(NestingViolation::Kind::Parent, g, si,
            "not contained in parent " + std::to_string(st.parent));
      }
    }
  }

  // Every unit of cohorts 1..G in exactly one outermost stratum.
  std::vector<int> count(static_cast<std::size_t>(n), 0);
  for (const auto& st : design.levels.front().strata) {
    for (Index u : st.members) {
      if (u >= 0 && u < n) ++count[static_cast<std::size_t>(u)];
    }
  }
  for (Index u = 0; u < n; ++u) {
    const Cohort c = design.cohort(u);
    if (!c.untreated_at(G) && count[static_cast<std::size_t>(u)] == 0) {
      add(NestingViolation::Kind::Missing, 1, -1,
          "unit " + design.unit_ids[static_cast<std::size_t>(u)] + " is in no outermost stratum");
    }
  }
  for (Index u : design.unused) {
    if (u >= 0 && u < n && count[static_cast<std::size_t>(u)] > 0) {
      add(NestingViolation::Kind::Overlap, 1, -1,
          "unit " + design.unit_ids[static_cast<std::size_t>(u)] + " listed as unused but matched");
    }
  }
  return report;
}

Json NestedDesign::to_json() const {
  Json j;
  j["max_cohort"] = max_cohort;
  j["seed"] = seed;
  j["metric"] = to_string(spec.metric);
  j["ridge"] = spec.ridge ? Json(*spec.ridge) : Json(nullptr);
  Json b;
  b["min_ratio"] = bounds.min_ratio;
  b["max_ratio"] = bounds.max_ratio ? Json(*bounds.max_ratio) : Json(nullptr);
  b["max_stratum_size"] = bounds.max_stratum_size ? Json(*bounds.max_stratum_size) : Json(nullptr);
  j["bounds"] = b;
  j["unit_ids"] = unit_ids;
  Json adopt = Json::array();
  for (Cohort c : adoption) adopt.push_back(cohort_json(c));
  j["adoption"] = adopt;
  Json lv = Json::array();
  for (const auto& l : levels) {
    Json jl;
    jl["g"] = l.g;
    jl["objective"] = l.objective;
    jl["attached"] = l.attached;
    Json strata = Json::array();
    for (const auto& s : l.strata) strata.push_back({{"parent", s.parent}, {"members", s.members}});
    jl["strata"] = strata;
    lv.push_back(jl);
  }
  j["levels"] = lv;
  j["unused"] = unused;
  return j;
}

NestedDesign NestedDesign::from_json(const Json& j) {
  try {
    NestedDesign d;
    d.max_cohort = j.at("max_cohort").get<int>();
    d.seed = j.at("seed").get<std::uint64_t>();
    d.spec.metric = parse_metric(j.at("metric").get<std::string>());
    if (!j.at("ridge").is_null()) d.spec.ridge = j.at("ridge").get<double>();
    const Json& b = j.at("bounds");
    d.bounds.min_ratio = b.at("min_ratio").get<int>();
    if (!b.at("max_ratio").is_null()) d.bounds.max_ratio = b.at("max_ratio").get<int>();
    if (!b.at("max_stratum_size").is_null()) {
      d.bounds.max_stratum_size = b.at("max_stratum_size").get<int>();
    }
    d.unit_ids = j.at("unit_ids").get<std::vector<std::string>>();
    for (const Json& c : j.at("adoption")) d.adoption.push_back(cohort_from_json(c));
    if (d.adoption.size() != d.unit_ids.size()) {
      throw Error(ErrorCode::Schema, "design unit and adoption lists differ in length");
    }
    for (const Json& jl : j.at("levels")) {
      DesignLevel l;
      l.g = jl.at("g").get<int>();
      l.objective = jl.at("objective").get<double>();
      l.attached = jl.at("attached").get<Index>();
      for (const Json& s : jl.at("strata")) {
        DesignStratum ds;
        ds.parent = s.at("parent").get<int>();
        ds.members = s.at("members").get<std::vector<Index>>();
        l.strata.push_back(std::move(ds));
      }
      d.levels.push_back(std::move(l));
    }
    for (std::size_t k = 0; k < d.levels.size(); ++k) {
      if (d.levels[k].g != static_cast<int>(k) + 1) {
        throw Error(ErrorCode::Schema, "design levels out of order");
      }
    }
    d.unused = j.at("unused").get<std::vector<Index>>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("malformed design: ") + e.what());
  }
}

}  // namespace rtnm
