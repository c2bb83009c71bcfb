#include "boatmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <tuple>

#include "boatmatch/error.hpp"

namespace boatmatch {

void MatchConfig::validate() const {
  if (method == MatchMethod::kCaliper && !(caliper_width > 0.0)) {
    throw InputError("caliper width must be positive");
  }
}

double score_distance(double p_control, double p_treated) {
  return std::abs(p_control - p_treated);
}

namespace {

struct ControlKey {
  double score;
  const std::string* id;
  std::size_t index;

  bool operator<(const ControlKey& o) const {
    if (score != o.score) return score < o.score;
    return *id < *o.id;
  }
};

std::vector<std::size_t> treated_order(const ScoreTable& scores, MatchOrder order) {
  std::vector<std::size_t> treated;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.groups[i] == 1) treated.push_back(i);
  }
  if (order == MatchOrder::kDescendingScore) {
    std::stable_sort(treated.begin(), treated.end(), [&](std::size_t a, std::size_t b) {
      const double sa = scores.point_score(static_cast<Eigen::Index>(a));
      const double sb = scores.point_score(static_cast<Eigen::Index>(b));
      if (sa != sb) return sa > sb;
      return scores.unit_ids[a] < scores.unit_ids[b];
    });
  }
  return treated;
}

// Greedy matching with an optional caliper (infinite for 1:1 nearest neighbour).
MatchedPairs greedy_match(const ScoreTable& scores, double width, MatchOrder order) {
  if (scores.point_score.size() != static_cast<Eigen::Index>(scores.size()) ||
      scores.groups.size() != scores.size()) {
    throw InputError("score table columns have inconsistent lengths");
  }
  std::set<ControlKey> pool;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores.groups[i] == 0) {
      pool.insert({scores.point_score(static_cast<Eigen::Index>(i)), &scores.unit_ids[i], i});
    }
  }
  static const std::string kEmpty;

  MatchedPairs result;
  for (std::size_t t : treated_order(scores, order)) {
    const double p = scores.point_score(static_cast<Eigen::Index>(t));
    if (pool.empty()) {
      result.unmatched_treated.push_back(scores.unit_ids[t]);
      continue;
    }
    // First control with score >= p, and the last one below it.
    auto above = pool.lower_bound({p, &kEmpty, 0});
    std::optional<std::set<ControlKey>::iterator> best;
    double best_distance = std::numeric_limits<double>::infinity();
    auto consider = [&](std::set<ControlKey>::iterator it) {
      const double d = score_distance(it->score, p);
      if (d < best_distance || (d == best_distance && *it->id < *(*best)->id)) {
        best = it;
        best_distance = d;
      }
    };
    if (above != pool.end()) consider(above);
    if (above != pool.begin()) {
      // Among controls sharing the nearest lower score, the smallest id comes first.
      auto below = std::prev(above);
      consider(pool.lower_bound({below->score, &kEmpty, 0}));
    }
    if (!best || !(best_distance <= width)) {
      result.unmatched_treated.push_back(scores.unit_ids[t]);
      continue;
    }
    const ControlKey c = **best;
    result.pairs.push_back({scores.unit_ids[t], *c.id, best_distance, t, c.index});
    pool.erase(*best);
  }
  return result;
}

}  // namespace

MatchedPairs caliper_match(const ScoreTable& scores, double width, MatchOrder order) {
  if (!(width > 0.0)) throw InputError("caliper width must be positive");
  return greedy_match(scores, width, order);
}

MatchedPairs nn1_match(const ScoreTable& scores, MatchOrder order) {
  const auto n_treated =
      static_cast<std::size_t>(std::count(scores.groups.begin(), scores.groups.end(), 1));
  const std::size_t n_control = scores.size() - n_treated;
  if (n_control < n_treated) throw MatchingInfeasible(n_control, n_treated);
  return greedy_match(scores, std::numeric_limits<double>::infinity(), order);
}

MatchedPairs match(const ScoreTable& scores, const MatchConfig& config) {
  config.validate();
  if (config.method == MatchMethod::kCaliper) {
    return caliper_match(scores, config.caliper_width, config.order);
  }
  return nn1_match(scores, config.order);
}

namespace {

std::pair<double, double> mean_sd(std::vector<double> v) {
  // Sorted summation: the summary must not depend on pair order.
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace

MatchSummary match_summary(const MatchedPairs& pairs, const ScoreTable& scores) {
  MatchSummary s;
  s.n_treated =
      static_cast<std::size_t>(std::count(scores.groups.begin(), scores.groups.end(), 1));
  s.n_pairs = pairs.pairs.size();
  s.match_rate = s.n_treated > 0 ? static_cast<double>(s.n_pairs) / static_cast<double>(s.n_treated)
                                 : 0.0;
  if (pairs.pairs.empty()) return s;
  std::vector<double> treated, control, delta;
  for (const auto& p : pairs.pairs) {
    treated.push_back(scores.point_score(static_cast<Eigen::Index>(p.treated_index)));
    control.push_back(scores.point_score(static_cast<Eigen::Index>(p.control_index)));
    delta.push_back(p.delta_p);
  }
  std::tie(s.treated_mean, s.treated_sd) = mean_sd(treated);
  std::tie(s.control_mean, s.control_sd) = mean_sd(control);
  s.mean_delta_p = mean_sd(delta).first;
  return s;
}

}  // namespace boatmatch
