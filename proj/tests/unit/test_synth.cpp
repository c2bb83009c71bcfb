#include <gtest/gtest.h>

#include <cmath>

#include "boatmatch/analysis.hpp"
#include "boatmatch/error.hpp"
#include "boatmatch/matching.hpp"
#include "boatmatch/scoring.hpp"
#include "boatmatch/synth.hpp"

using namespace boatmatch;

namespace {

Eigen::MatrixXd uniform_x(std::size_t n, std::size_t i, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::MatrixXd x(n, i);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = u(rng);
  return x;
}

}  // namespace

TEST(GenerateFromPrior, TinyVarianceGivesFairCoin) {
  Rng rng(1);
  const Priors tiny{1e-12, 1e-12};
  const auto pp = generate_from_prior(tiny, uniform_x(10000, 3, 2), rng);
  EXPECT_LT(pp.theta.cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_NEAR(pp.y.mean(), 0.5, 0.05);
}

TEST(GenerateFromPrior, Deterministic) {
  const Eigen::MatrixXd x = uniform_x(100, 2, 3);
  Rng a(9), b(9);
  const auto pa = generate_from_prior({}, x, a);
  const auto pb = generate_from_prior({}, x, b);
  EXPECT_EQ(pa.theta, pb.theta);
  EXPECT_EQ(pa.y, pb.y);
}

TEST(DrawAssignment, LargeInterceptTreatsAlmostAll) {
  Rng rng(4);
  const Eigen::MatrixXd x = uniform_x(10000, 2, 5);
  const auto y = draw_assignment(make_params(10.0, Eigen::VectorXd::Zero(2)), x, rng);
  EXPECT_GT(y.mean(), 0.99);
}

TEST(DrawAssignment, FractionMatchesMeanPropensity) {
  Rng rng(6);
  const Eigen::MatrixXd x = uniform_x(100000, 3, 7);
  ParamVector theta(4);
  theta << -0.5, 1.0, -2.0, 0.5;
  const auto y = draw_assignment(theta, x, rng);
  double expected = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) expected += propensity(theta, x.row(r).transpose());
  expected /= static_cast<double>(x.rows());
  EXPECT_NEAR(y.mean(), expected, 0.01);
}

TEST(GenerateStudy, ExactCountsAndRanges) {
  SynthConfig c;
  c.n_control = 200;
  c.n_treated = 12;
  c.n_covariates = 4;
  c.seed = 11;
  const Study s = generate_study(c.with_defaults());
  EXPECT_EQ(s.features.count_group(0), 200u);
  EXPECT_EQ(s.features.count_group(1), 12u);
  EXPECT_TRUE(s.features.scaled);
  EXPECT_GE(s.features.covariates.minCoeff(), 0.0);
  EXPECT_LE(s.features.covariates.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(s.features.target.minCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(s.features.target.maxCoeff(), 1.0);
  EXPECT_EQ(s.features.covariate_names.size(), 4u);
}

TEST(GenerateStudy, Deterministic) {
  SynthConfig c;
  c.n_control = 150;
  c.n_treated = 10;
  c.n_covariates = 3;
  c.seed = 21;
  c.with_defaults();
  const Study a = generate_study(c), b = generate_study(c);
  EXPECT_EQ(a.features.covariates, b.features.covariates);
  EXPECT_EQ(a.features.target, b.features.target);
  EXPECT_EQ(a.features.groups, b.features.groups);
  EXPECT_EQ(a.truth.alpha, b.truth.alpha);
}

TEST(GenerateStudy, TauRecordedInBothUnits) {
  SynthConfig c;
  c.n_control = 150;
  c.n_treated = 10;
  c.n_covariates = 3;
  c.tau = 0.5;
  c.seed = 22;
  const Study s = generate_study(c.with_defaults());
  const double span = s.truth.target_range.max - s.truth.target_range.min;
  EXPECT_EQ(s.truth.tau_raw, 0.5);
  EXPECT_NEAR(s.truth.tau_scaled, 0.5 / span, 1e-12);
}

TEST(GenerateStudy, NullModel) {
  SynthConfig c;
  c.n_control = 100;
  c.n_treated = 10;
  c.n_covariates = 3;
  c.outcome_beta = Eigen::VectorXd::Zero(3);
  c.noise_sd = 0.0;
  c.seed = 1;
  const Study s = generate_study(c.with_defaults());
  EXPECT_EQ(s.features.target.minCoeff(), s.features.target.maxCoeff());
  EXPECT_EQ(ate_naive(s.features.target, s.features.groups), 0.0);
}

TEST(GenerateStudy, UnreachableCountsThrow) {
  SynthConfig c;
  c.n_control = 50;
  c.n_treated = 50;
  c.n_covariates = 2;
  c.true_alpha = -60.0;
  c.max_rejection_rounds = 200;
  c.seed = 3;
  EXPECT_THROW(generate_study(c.with_defaults()), InputError);
}

TEST(GenerateStudy, ConfoundingBiasesNaiveEstimate) {
  // Paired-permutation null: flipping pair signs gives the spread of a zero-effect ATE.
  SynthConfig c;
  c.seed = 77;
  const Study s = generate_study(c.with_defaults());
  const FeatureMatrix& f = s.features;
  const double naive = ate_naive(f.target, f.groups);

  Rng rng(5);
  std::vector<double> perm;
  std::vector<int> g = f.groups;
  for (int r = 0; r < 400; ++r) {
    std::shuffle(g.begin(), g.end(), rng);
    perm.push_back(ate_naive(f.target, g));
  }
  double m = 0, v = 0;
  for (double p : perm) m += p;
  m /= perm.size();
  for (double p : perm) v += (p - m) * (p - m);
  const double null_sd = std::sqrt(v / (perm.size() - 1));
  EXPECT_GT(std::abs(naive), 3.0 * null_sd);

  // Matching on the true propensity removes the bias.
  const ScoreTable scores = score_all(make_params(s.truth.alpha, s.truth.beta), f);
  const MatchedPairs pairs = nn1_match(scores);
  std::vector<double> diffs;
  for (const auto& p : pairs.pairs) diffs.push_back(f.target(p.treated_index) - f.target(p.control_index));
  double dm = 0, dv = 0;
  for (double d : diffs) dm += d;
  dm /= diffs.size();
  for (double d : diffs) dv += (d - dm) * (d - dm);
  const double matched_se = std::sqrt(dv / (diffs.size() - 1) / diffs.size());
  EXPECT_NEAR(ate_matched(f.target, pairs), dm, 1e-12);
  EXPECT_LT(std::abs(dm), 2.0 * matched_se);
}

TEST(SynthConfig, Validation) {
  SynthConfig c;
  c.n_control = 1;
  c.n_treated = 0;
  EXPECT_THROW(c.with_defaults().validate(), InputError);
  SynthConfig d;
  d.noise_sd = -1;
  EXPECT_THROW(d.with_defaults().validate(), InputError);
}
