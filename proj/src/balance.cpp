#include "rtnm/balance.hpp"

#include <cmath>

#include "rtnm/error.hpp"

namespace rtnm {

double standardized_difference(double treated_mean, double comparison_mean, double pooled_sd) {
  const double diff = treated_mean - comparison_mean;
  if (pooled_sd > 0.0) return std::abs(diff) / pooled_sd;
  if (diff == 0.0) return 0.0;
  throw Error(ErrorCode::ZeroVariance, "covariate is constant within groups but means differ");
}

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) m.var += (x - m.mean) * (x - m.mean);
    m.var /= static_cast<double>(v.size() - 1);
  }
  return m;
}

}  // namespace

BalanceReport balance_report(const PanelDataset& data, const NestedDesign& design) {
  design.check_matches(data);
  BalanceReport report;
  const Index n = data.n_units();
  for (int g = 1; g <= design.max_cohort; ++g) {
    std::vector<Index> treated, before;
    for (Index i = 0; i < n; ++i) {
      if (data.adoption(i) == Cohort::at(g)) treated.push_back(i);
      if (data.adoption(i).untreated_at(g)) before.push_back(i);
    }
    // Matched comparison units with their weights.
    std::vector<Index> after;
    std::vector<double> weight;
    for (const auto& st : design.level(g).strata) {
      Index nt = 0;
      std::vector<Index> comps;
      for (Index u : st.members) {
        if (data.adoption(u) == Cohort::at(g)) ++nt;
        else if (data.adoption(u).untreated_at(g)) comps.push_back(u);
      }
      for (Index u : comps) {
        after.push_back(u);
        weight.push_back(static_cast<double>(nt) / static_cast<double>(comps.size()));
      }
    }
    double wsum = 0.0;
    for (double w : weight) wsum += w;

    for (int t = data.t0(); t <= g - 1; ++t) {
      for (Index k = 0; k < data.n_covariates(); ++k) {
        std::vector<double> xt, xc;
        for (Index i : treated) xt.push_back(data.covariate(i, t, k));
        for (Index i : before) xc.push_back(data.covariate(i, t, k));
        const Moments mt = moments(xt), mc = moments(xc);
        double after_mean = 0.0;
        for (std::size_t a = 0; a < after.size(); ++a) {
          after_mean += weight[a] * data.covariate(after[a], t, k);
        }
        if (wsum > 0.0) after_mean /= wsum;

        BalanceRow row;
        row.g = g;
        row.covariate = data.covariate_names()[static_cast<std::size_t>(k)];
        row.period = t;
        row.treated_mean = mt.mean;
        row.comparison_mean_before = mc.mean;
        row.comparison_mean_after = after_mean;
        row.pooled_sd = std::sqrt((mt.var + mc.var) / 2.0);
        row.smd_before = standardized_difference(mt.mean, mc.mean, row.pooled_sd);
        row.smd_after = standardized_difference(mt.mean, after_mean, row.pooled_sd);
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

}  // namespace rtnm
