#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "boatmatch/scoring.hpp"

namespace boatmatch {

enum class MatchMethod { kCaliper, kNearestNeighbor };
enum class MatchOrder { kDescendingScore, kInputOrder };

struct MatchConfig {
  MatchMethod method = MatchMethod::kCaliper;
  double caliper_width = 0.05;
  MatchOrder order = MatchOrder::kDescendingScore;

  void validate() const;
};

struct MatchedPair {
  std::string treated_id;
  std::string control_id;
  double delta_p = 0.0;
  std::size_t treated_index = 0;  // row in the ScoreTable
  std::size_t control_index = 0;
};

struct MatchedPairs {
  std::vector<MatchedPair> pairs;
  std::vector<std::string> unmatched_treated;
};

double score_distance(double p_control, double p_treated);

// Greedy nearest-within-caliper matching without replacement. Treated units
// are visited in the configured order (descending score, ties by unit_id);
// control ties at equal distance go to the lexicographically smaller unit_id.
MatchedPairs caliper_match(const ScoreTable& scores, double width,
                           MatchOrder order = MatchOrder::kDescendingScore);

// Greedy 1:1 nearest-neighbour matching without replacement. Throws
// MatchingInfeasible when there are fewer controls than treated units.
MatchedPairs nn1_match(const ScoreTable& scores,
                       MatchOrder order = MatchOrder::kDescendingScore);

MatchedPairs match(const ScoreTable& scores, const MatchConfig& config);

struct MatchSummary {
  std::size_t n_treated = 0;
  std::size_t n_pairs = 0;
  double match_rate = 0.0;
  // Undefined (nullopt) when there are no pairs.
  std::optional<double> mean_delta_p;
  std::optional<double> treated_mean;
  std::optional<double> treated_sd;
  std::optional<double> control_mean;
  std::optional<double> control_sd;
};

MatchSummary match_summary(const MatchedPairs& pairs, const ScoreTable& scores);

}  // namespace boatmatch
