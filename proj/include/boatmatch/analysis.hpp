#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boatmatch/ingest.hpp"
#include "boatmatch/matching.hpp"

namespace boatmatch {

struct CovariateStat {
  double value = 0.0;
  bool degenerate = false;
};

// Matched rows: every treated and control index appearing in `pairs`.
std::vector<std::size_t> matched_rows(const MatchedPairs& pairs);

// |mean_t - mean_c| / sqrt((s_t^2 + s_c^2) / 2). The pooled SD always comes
// from the full (pre-match) groups; `subset`, when given, restricts only the
// means. Throws InputError when a group is empty in the evaluated rows.
std::vector<CovariateStat> asmd(const Eigen::MatrixXd& x, const std::vector<int>& groups,
                                const std::vector<std::size_t>* subset = nullptr);

struct VarianceReduction {
  std::vector<CovariateStat> percent;  // degenerate where var(control, all) = 0
  double average = 0.0;                // over non-degenerate covariates
};

// 100 * (var(control, all) - var(control, matched)) / var(control, all).
VarianceReduction variance_reduction(const Eigen::MatrixXd& x, const std::vector<int>& groups,
                                     const MatchedPairs& pairs);

// mean(target | treated) - mean(target | control).
double ate_naive(const Eigen::VectorXd& targets, const std::vector<int>& groups);

// Mean over pairs of target_treated - target_control. Throws on empty pairs.
double ate_matched(const Eigen::VectorXd& targets, const MatchedPairs& pairs);

struct DistributionSummary {
  double q05 = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double q95 = 0.0;
};

struct GroupMoments {
  double mean = 0.0;
  double sd = 0.0;
  DistributionSummary distribution;
};

struct CovariateBalance {
  std::string name;
  CovariateStat asmd_before;
  CovariateStat asmd_after;
  GroupMoments control_before;
  GroupMoments treated_before;
  GroupMoments control_after;
  GroupMoments treated_after;
  double var_control_before = 0.0;
  double var_control_after = 0.0;
  CovariateStat variance_reduction;
  // Pearson correlation with the target over all units; 0 when undefined.
  double target_correlation = 0.0;
};

struct BalanceReport {
  std::vector<CovariateBalance> covariates;
  double avg_asmd_before = 0.0;
  double avg_asmd_after = 0.0;
  double avg_variance_reduction = 0.0;
  std::size_t n_pairs = 0;
};

BalanceReport assess_balance(const FeatureMatrix& features, const MatchedPairs& pairs);

struct EffectReport {
  double ate_naive = 0.0;
  std::optional<double> ate_matched;
  double target_mean_control_before = 0.0;
  double target_mean_treated_before = 0.0;
  std::optional<double> target_mean_control_after;
  std::optional<double> target_mean_treated_after;
  std::size_t n_pairs = 0;
};

EffectReport estimate_effect(const FeatureMatrix& features, const MatchedPairs& pairs);

}  // namespace boatmatch
