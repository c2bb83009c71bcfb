#include "boatmatch/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "boatmatch/diagnostics.hpp"
#include "boatmatch/error.hpp"

namespace boatmatch {

namespace {

struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double var = 0.0;  // sample variance (n - 1)
};

// Sorted summation so results do not depend on row or pair order.
Moments moments(std::vector<double> v) {
  Moments m;
  m.n = v.size();
  if (v.empty()) return m;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = m.n > 1 ? ss / static_cast<double>(m.n - 1) : 0.0;
  return m;
}

std::vector<double> column_values(const Eigen::MatrixXd& x, Eigen::Index col,
                                  const std::vector<int>& groups, int group,
                                  const std::vector<std::size_t>* rows) {
  std::vector<double> out;
  auto take = [&](std::size_t i) {
    if (groups[i] == group) out.push_back(x(static_cast<Eigen::Index>(i), col));
  };
  if (rows) {
    for (std::size_t i : *rows) take(i);
  } else {
    for (std::size_t i = 0; i < groups.size(); ++i) take(i);
  }
  return out;
}

std::vector<std::size_t> control_rows(const MatchedPairs& pairs) {
  std::vector<std::size_t> rows;
  for (const auto& p : pairs.pairs) rows.push_back(p.control_index);
  std::sort(rows.begin(), rows.end());
  return rows;
}

void check_shapes(const Eigen::MatrixXd& x, const std::vector<int>& groups) {
  if (static_cast<Eigen::Index>(groups.size()) != x.rows()) {
    throw InputError("group labels do not match the number of rows");
  }
}

}  // namespace

std::vector<std::size_t> matched_rows(const MatchedPairs& pairs) {
  std::vector<std::size_t> rows;
  for (const auto& p : pairs.pairs) {
    rows.push_back(p.treated_index);
    rows.push_back(p.control_index);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

std::vector<CovariateStat> asmd(const Eigen::MatrixXd& x, const std::vector<int>& groups,
                                const std::vector<std::size_t>* subset) {
  check_shapes(x, groups);
  std::vector<CovariateStat> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Moments ct = moments(column_values(x, j, groups, 1, nullptr));
    const Moments cc = moments(column_values(x, j, groups, 0, nullptr));
    if (ct.n == 0 || cc.n == 0) throw InputError("ASMD needs both groups to be non-empty");
    Moments t = ct, c = cc;
    if (subset) {
      t = moments(column_values(x, j, groups, 1, subset));
      c = moments(column_values(x, j, groups, 0, subset));
      if (t.n == 0 || c.n == 0) throw InputError("ASMD subset lacks one of the groups");
    }
    const double pooled = std::sqrt((ct.var + cc.var) / 2.0);
    if (!(pooled > 0.0)) {
      out.push_back({0.0, true});
    } else {
      out.push_back({std::abs(t.mean - c.mean) / pooled, false});
    }
  }
  return out;
}

VarianceReduction variance_reduction(const Eigen::MatrixXd& x, const std::vector<int>& groups,
                                     const MatchedPairs& pairs) {
  check_shapes(x, groups);
  if (pairs.pairs.empty()) throw InputError("variance reduction needs at least one pair");
  const std::vector<std::size_t> matched = control_rows(pairs);
  VarianceReduction out;
  double sum = 0.0;
  std::size_t used = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double all = moments(column_values(x, j, groups, 0, nullptr)).var;
    const double sub = moments(column_values(x, j, groups, 0, &matched)).var;
    if (!(all > 0.0)) {
      out.percent.push_back({0.0, true});
      continue;
    }
    const double pct = 100.0 * (all - sub) / all;
    out.percent.push_back({pct, false});
    sum += pct;
    ++used;
  }
  out.average = used > 0 ? sum / static_cast<double>(used) : 0.0;
  return out;
}

double ate_naive(const Eigen::VectorXd& targets, const std::vector<int>& groups) {
  if (static_cast<Eigen::Index>(groups.size()) != targets.size()) {
    throw InputError("group labels do not match the number of targets");
  }
  std::vector<double> t, c;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    (groups[i] == 1 ? t : c).push_back(targets(static_cast<Eigen::Index>(i)));
  }
  if (t.empty() || c.empty()) throw InputError("naive ATE needs both groups to be non-empty");
  return moments(t).mean - moments(c).mean;
}

double ate_matched(const Eigen::VectorXd& targets, const MatchedPairs& pairs) {
  if (pairs.pairs.empty()) throw InputError("matched ATE needs at least one pair");
  std::vector<double> diffs;
  for (const auto& p : pairs.pairs) {
    diffs.push_back(targets(static_cast<Eigen::Index>(p.treated_index)) -
                    targets(static_cast<Eigen::Index>(p.control_index)));
  }
  return moments(diffs).mean;
}

namespace {

GroupMoments describe(const std::vector<double>& v) {
  GroupMoments g;
  if (v.empty()) return g;
  const Moments m = moments(v);
  g.mean = m.mean;
  g.sd = std::sqrt(m.var);
  g.distribution = {quantile(v, 0.05), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75),
                    quantile(v, 0.95)};
  return g;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  const double denom = std::sqrt((da * da).sum() * (db * db).sum());
  return denom > 0.0 ? (da * db).sum() / denom : 0.0;
}

}  // namespace

BalanceReport assess_balance(const FeatureMatrix& features, const MatchedPairs& pairs) {
  const Eigen::MatrixXd& x = features.covariates;
  const auto& g = features.groups;
  BalanceReport r;
  r.n_pairs = pairs.pairs.size();
  const std::vector<std::size_t> rows = matched_rows(pairs);
  const std::vector<std::size_t> controls = control_rows(pairs);
  std::vector<std::size_t> treated;
  for (const auto& p : pairs.pairs) treated.push_back(p.treated_index);
  std::sort(treated.begin(), treated.end());

  const auto before = asmd(x, g);
  const auto after = pairs.pairs.empty() ? before : asmd(x, g, &rows);
  const VarianceReduction vr =
      pairs.pairs.empty() ? VarianceReduction{} : variance_reduction(x, g, pairs);

  double sum_before = 0.0, sum_after = 0.0;
  std::size_t used = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto uj = static_cast<std::size_t>(j);
    CovariateBalance b;
    b.name = uj < features.covariate_names.size() ? features.covariate_names[uj]
                                                  : "x" + std::to_string(j + 1);
    b.asmd_before = before[uj];
    b.asmd_after = after[uj];
    const auto c_all = column_values(x, j, g, 0, nullptr);
    const auto t_all = column_values(x, j, g, 1, nullptr);
    b.control_before = describe(c_all);
    b.treated_before = describe(t_all);
    b.var_control_before = moments(c_all).var;
    if (!pairs.pairs.empty()) {
      const auto c_sub = column_values(x, j, g, 0, &controls);
      const auto t_sub = column_values(x, j, g, 1, &treated);
      b.control_after = describe(c_sub);
      b.treated_after = describe(t_sub);
      b.var_control_after = moments(c_sub).var;
      b.variance_reduction = vr.percent[uj];
    } else {
      b.variance_reduction = {0.0, true};
    }
    b.target_correlation = correlation(x.col(j), features.target);
    if (!b.asmd_before.degenerate) {
      sum_before += b.asmd_before.value;
      sum_after += b.asmd_after.value;
      ++used;
    }
    r.covariates.push_back(std::move(b));
  }
  if (used > 0) {
    r.avg_asmd_before = sum_before / static_cast<double>(used);
    r.avg_asmd_after = sum_after / static_cast<double>(used);
  }
  r.avg_variance_reduction = vr.average;
  return r;
}

EffectReport estimate_effect(const FeatureMatrix& features, const MatchedPairs& pairs) {
  EffectReport e;
  e.ate_naive = ate_naive(features.target, features.groups);
  std::vector<double> c, t;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    (features.groups[i] == 1 ? t : c).push_back(features.target(static_cast<Eigen::Index>(i)));
  }
  e.target_mean_control_before = moments(c).mean;
  e.target_mean_treated_before = moments(t).mean;
  e.n_pairs = pairs.pairs.size();
  if (!pairs.pairs.empty()) {
    e.ate_matched = ate_matched(features.target, pairs);
    std::vector<double> mc, mt;
    for (const auto& p : pairs.pairs) {
      mc.push_back(features.target(static_cast<Eigen::Index>(p.control_index)));
      mt.push_back(features.target(static_cast<Eigen::Index>(p.treated_index)));
    }
    e.target_mean_control_after = moments(mc).mean;
    e.target_mean_treated_after = moments(mt).mean;
  }
  return e;
}

}  // namespace boatmatch
