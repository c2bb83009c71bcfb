#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boatmatch/ingest.hpp"
#include "boatmatch/model.hpp"
#include "boatmatch/sampler.hpp"

namespace boatmatch {

struct GroupScoreStats {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

struct ScoreTable {
  std::vector<std::string> unit_ids;
  std::vector<int> groups;
  Eigen::VectorXd point_score;          // sigmoid at the posterior-mean parameters
  std::optional<Eigen::MatrixXd> draw_scores;  // K x N, one row per sampled draw

  std::size_t size() const { return unit_ids.size(); }
  GroupScoreStats group_stats(int group) const;
  // Per-unit mean over draw_scores rows; differs from point_score (Jensen).
  Eigen::VectorXd mean_draw_score() const;
};

// Column means of the draws.
ParamVector point_estimate(const PosteriorDraws& draws);
ParamVector point_estimate(const Eigen::MatrixXd& draws);

// Throws InputError for an unscaled matrix or a dimension mismatch.
ScoreTable score_all(const ParamVector& theta, const FeatureMatrix& features);

// Samples k draw rows without replacement and scores every unit under each.
// Returns the k x N score matrix; `selected` receives the chosen row indices.
Eigen::MatrixXd score_uncertainty(const Eigen::MatrixXd& draws, const FeatureMatrix& features,
                                  std::size_t k, std::uint64_t seed,
                                  std::vector<std::size_t>* selected = nullptr);

}  // namespace boatmatch
