#include "boatmatch/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "boatmatch/error.hpp"
#include "boatmatch/random.hpp"

namespace boatmatch {

GroupScoreStats ScoreTable::group_stats(int group) const {
  GroupScoreStats s;
  double sum = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (groups[i] != group) continue;
    ++s.count;
    sum += point_score(static_cast<Eigen::Index>(i));
  }
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    if (groups[i] != group) continue;
    const double d = point_score(static_cast<Eigen::Index>(i)) - s.mean;
    ss += d * d;
  }
  s.sd = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  return s;
}

Eigen::VectorXd ScoreTable::mean_draw_score() const {
  if (!draw_scores || draw_scores->rows() == 0) {
    throw InputError("score table has no per-draw scores");
  }
  return draw_scores->colwise().mean().transpose();
}

ParamVector point_estimate(const Eigen::MatrixXd& draws) {
  if (draws.rows() == 0) throw InputError("point estimate needs at least one draw");
  return draws.colwise().mean().transpose();
}

ParamVector point_estimate(const PosteriorDraws& draws) { return point_estimate(draws.draws); }

namespace {

void check_compatible(Eigen::Index dim, const FeatureMatrix& features) {
  if (!features.scaled) {
    throw InputError("propensity scores need the scaled feature matrix the model was fit on");
  }
  if (dim != static_cast<Eigen::Index>(features.cols()) + 1) {
    throw InputError("parameter dimension " + std::to_string(dim) + " does not match " +
                     std::to_string(features.cols()) + " covariates + intercept");
  }
}

Eigen::VectorXd scores_for(const ParamVector& theta, const FeatureMatrix& features) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(features.rows()));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = propensity(theta, features.covariates.row(i).transpose());
  }
  return out;
}

}  // namespace

ScoreTable score_all(const ParamVector& theta, const FeatureMatrix& features) {
  check_compatible(theta.size(), features);
  ScoreTable t;
  t.unit_ids = features.unit_ids;
  t.groups = features.groups;
  t.point_score = scores_for(theta, features);
  return t;
}

Eigen::MatrixXd score_uncertainty(const Eigen::MatrixXd& draws, const FeatureMatrix& features,
                                  std::size_t k, std::uint64_t seed,
                                  std::vector<std::size_t>* selected) {
  check_compatible(draws.cols(), features);
  const auto n_draws = static_cast<std::size_t>(draws.rows());
  if (k > n_draws) {
    throw InputError("requested " + std::to_string(k) + " uncertainty draws but only " +
                     std::to_string(n_draws) + " posterior draws exist");
  }
  std::vector<std::size_t> order(n_draws);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first k entries are a uniform sample without replacement.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_draws - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(k);

  Eigen::MatrixXd out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(features.rows()));
  for (std::size_t r = 0; r < k; ++r) {
    const ParamVector theta = draws.row(static_cast<Eigen::Index>(order[r])).transpose();
    out.row(static_cast<Eigen::Index>(r)) = scores_for(theta, features).transpose();
  }
  if (selected) *selected = std::move(order);
  return out;
}

}  // namespace boatmatch
