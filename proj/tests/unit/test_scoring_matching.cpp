#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "boatmatch/error.hpp"
#include "boatmatch/matching.hpp"
#include "boatmatch/scoring.hpp"

using namespace boatmatch;

namespace {

FeatureMatrix features_1d(const std::vector<double>& x, const std::vector<int>& g) {
  FeatureMatrix f;
  for (std::size_t i = 0; i < x.size(); ++i) f.unit_ids.push_back("u" + std::to_string(i));
  f.groups = g;
  f.covariates = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  f.target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.size()));
  f.covariate_names = {"x1"};
  f.scaled = true;
  return f;
}

// Score table with explicit ids so tie rules can be pinned down.
ScoreTable table(const std::vector<std::pair<std::string, double>>& controls,
                 const std::vector<std::pair<std::string, double>>& treated) {
  ScoreTable s;
  std::vector<double> v;
  for (const auto& [id, p] : controls) {
    s.unit_ids.push_back(id);
    s.groups.push_back(0);
    v.push_back(p);
  }
  for (const auto& [id, p] : treated) {
    s.unit_ids.push_back(id);
    s.groups.push_back(1);
    v.push_back(p);
  }
  s.point_score = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return s;
}

const MatchedPair* pair_for(const MatchedPairs& m, const std::string& treated) {
  for (const auto& p : m.pairs)
    if (p.treated_id == treated) return &p;
  return nullptr;
}

}  // namespace

TEST(PointEstimate, Examples) {
  Eigen::MatrixXd one(1, 3);
  one << 0.1, -0.2, 0.3;
  EXPECT_EQ(point_estimate(one), one.row(0).transpose());
  Eigen::MatrixXd sym(2, 2);
  sym << 1, -3, -1, 3;
  EXPECT_EQ(point_estimate(sym), Eigen::VectorXd::Zero(2));
  Eigen::MatrixXd three(3, 2);
  three << 1, 2, 3, 4, 5, 9;
  EXPECT_DOUBLE_EQ(point_estimate(three)(0), 3.0);
  EXPECT_DOUBLE_EQ(point_estimate(three)(1), 5.0);
}

TEST(ScoreAll, Examples) {
  const FeatureMatrix f = features_1d({0.5, 0.1, 0.9, 0.3}, {0, 0, 1, 1});
  const ScoreTable zero = score_all(Eigen::VectorXd::Zero(2), f);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(zero.point_score(i), 0.5);
  EXPECT_DOUBLE_EQ(zero.group_stats(0).mean, 0.5);
  EXPECT_DOUBLE_EQ(zero.group_stats(1).mean, 0.5);
  const ParamVector theta = make_params(0.0, Eigen::VectorXd::Constant(1, 1.0));
  const ScoreTable s = score_all(theta, f);
  EXPECT_NEAR(s.point_score(0), 0.622459, 1e-6);
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_EQ(s.point_score(i), propensity(theta, f.covariates.row(i).transpose()));
  }
}

TEST(ScoreAll, Preconditions) {
  FeatureMatrix f = features_1d({0.5, 0.1}, {0, 1});
  EXPECT_THROW(score_all(Eigen::VectorXd::Zero(3), f), InputError);
  f.scaled = false;
  EXPECT_THROW(score_all(Eigen::VectorXd::Zero(2), f), InputError);
}

TEST(ScoreAll, MonotoneInPositiveCoefficient) {
  const FeatureMatrix f = features_1d({0.1, 0.2, 0.4, 0.8}, {0, 0, 1, 1});
  const ScoreTable s = score_all(make_params(-1.0, Eigen::VectorXd::Constant(1, 2.0)), f);
  for (Eigen::Index i = 1; i < 4; ++i) EXPECT_GT(s.point_score(i), s.point_score(i - 1));
}

TEST(ScoreUncertainty, Selection) {
  const FeatureMatrix f = features_1d({0.1, 0.6, 0.9}, {0, 0, 1});
  Eigen::MatrixXd draws(6, 2);
  for (int r = 0; r < 6; ++r) draws.row(r) << 0.1 * r, -0.2 * r;
  std::vector<std::size_t> sel;
  const Eigen::MatrixXd all = score_uncertainty(draws, f, 6, 42, &sel);
  std::vector<std::size_t> sorted = sel;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(all.rows(), 6);

  std::vector<std::size_t> one;
  const Eigen::MatrixXd single = score_uncertainty(draws, f, 1, 7, &one);
  const ScoreTable direct = score_all(draws.row(static_cast<Eigen::Index>(one[0])).transpose(), f);
  EXPECT_EQ(single.row(0).transpose(), direct.point_score);

  EXPECT_EQ(score_uncertainty(draws, f, 3, 5), score_uncertainty(draws, f, 3, 5));
  EXPECT_THROW(score_uncertainty(draws, f, 7, 5), InputError);
}

TEST(ScoreUncertainty, JensenGapReported) {
  const FeatureMatrix f = features_1d({0.1, 0.9}, {0, 1});
  Eigen::MatrixXd draws(2, 2);
  draws << -3, 4, 5, -4;
  ScoreTable s = score_all(point_estimate(draws), f);
  s.draw_scores = score_uncertainty(draws, f, 2, 1);
  EXPECT_DOUBLE_EQ(s.point_score(0), sigmoid(1.0));
  EXPECT_NEAR(s.mean_draw_score()(0), 0.5 * (sigmoid(-2.6) + sigmoid(4.6)), 1e-12);
  EXPECT_GT(std::abs(s.mean_draw_score()(0) - s.point_score(0)), 0.05);
}

TEST(Distance, Basics) {
  EXPECT_EQ(score_distance(0.3, 0.3), 0.0);
  EXPECT_NEAR(score_distance(0.1, 0.4), 0.3, 1e-15);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng);
    EXPECT_EQ(score_distance(a, b), score_distance(b, a));
  }
}

TEST(Caliper, HandExample) {
  const ScoreTable s = table({{"c1", 0.10}, {"c2", 0.20}, {"c3", 0.40}}, {{"t1", 0.41}, {"t2", 0.19}});
  const MatchedPairs m = caliper_match(s, 0.05);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_TRUE(m.unmatched_treated.empty());
  EXPECT_EQ(pair_for(m, "t1")->control_id, "c3");
  EXPECT_EQ(pair_for(m, "t2")->control_id, "c2");
  EXPECT_NEAR(pair_for(m, "t1")->delta_p, 0.01, 1e-12);
  EXPECT_NEAR(pair_for(m, "t2")->delta_p, 0.01, 1e-12);

  const MatchedPairs none = caliper_match(s, 0.005);
  EXPECT_TRUE(none.pairs.empty());
  EXPECT_EQ(none.unmatched_treated.size(), 2u);
}

TEST(Caliper, IdenticalScoreSets) {
  const ScoreTable s = table({{"c1", 0.2}, {"c2", 0.5}, {"c3", 0.7}}, {{"t1", 0.7}, {"t2", 0.2}, {"t3", 0.5}});
  const MatchedPairs m = caliper_match(s, 0.01);
  ASSERT_EQ(m.pairs.size(), 3u);
  for (const auto& p : m.pairs) EXPECT_EQ(p.delta_p, 0.0);
}

TEST(Caliper, NearestWithinWidthInvariants) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<std::pair<std::string, double>> c, t;
    for (int i = 0; i < 15; ++i) c.push_back({"c" + std::to_string(100 + i), u(rng)});
    for (int i = 0; i < 6; ++i) t.push_back({"t" + std::to_string(100 + i), u(rng)});
    const MatchedPairs m = caliper_match(table(c, t), 0.03);
    std::set<std::string> used;
    for (const auto& p : m.pairs) {
      EXPECT_LE(p.delta_p, 0.03);
      EXPECT_TRUE(used.insert(p.control_id).second);
    }
    EXPECT_EQ(m.pairs.size() + m.unmatched_treated.size(), 6u);
  }
}

TEST(Nn1, HandExamples) {
  const ScoreTable s = table({{"c1", 0.10}, {"c2", 0.20}, {"c3", 0.40}}, {{"t1", 0.41}, {"t2", 0.19}});
  const MatchedPairs m = nn1_match(s);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(pair_for(m, "t1")->control_id, "c3");
  EXPECT_EQ(pair_for(m, "t2")->control_id, "c2");
  EXPECT_NEAR(*match_summary(m, s).mean_delta_p, 0.01, 1e-12);

  const MatchedPairs forced = nn1_match(table({{"c", 0.01}}, {{"t", 0.99}}));
  ASSERT_EQ(forced.pairs.size(), 1u);
  EXPECT_NEAR(forced.pairs[0].delta_p, 0.98, 1e-12);
}

TEST(Nn1, TiedTreatedAreDeterministic) {
  const ScoreTable s = table({{"c1", 0.5}, {"c2", 0.6}}, {{"tb", 0.55}, {"ta", 0.55}});
  const MatchedPairs m = nn1_match(s);
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.pairs[0].treated_id, "ta");
  double total = 0;
  for (const auto& p : m.pairs) total += p.delta_p;
  EXPECT_NEAR(total, 0.10, 1e-12);
  const MatchedPairs again = nn1_match(s);
  EXPECT_EQ(again.pairs[0].control_id, m.pairs[0].control_id);
}

TEST(Nn1, EqualDistanceControlsGoToSmallerId) {
  const ScoreTable s = table({{"c_b", 0.4}, {"c_a", 0.6}}, {{"t", 0.5}});
  EXPECT_EQ(nn1_match(s).pairs[0].control_id, "c_a");
  const ScoreTable same = table({{"c_b", 0.4}, {"c_a", 0.4}}, {{"t", 0.5}});
  EXPECT_EQ(nn1_match(same).pairs[0].control_id, "c_a");
}

TEST(Nn1, InfeasibleNamesCounts) {
  const ScoreTable s = table({{"c", 0.2}}, {{"t1", 0.3}, {"t2", 0.4}});
  try {
    nn1_match(s);
    FAIL() << "expected MatchingInfeasible";
  } catch (const MatchingInfeasible& e) {
    EXPECT_EQ(e.n_control(), 1u);
    EXPECT_EQ(e.n_treated(), 2u);
    EXPECT_NE(std::string(e.what()).find("1 controls < 2 treated"), std::string::npos);
  }
}

TEST(Nn1, GreedyIsNotAlwaysWithinTwiceOptimal) {
  // Descending order: 0.2 takes control 0 first, leaving 0.5 for treated 0.
  const ScoreTable s = table({{"c1", 0.0}, {"c2", 0.5}}, {{"t1", 0.0}, {"t2", 0.2}});
  const MatchedPairs m = nn1_match(s);
  double total = 0;
  for (const auto& p : m.pairs) total += p.delta_p;
  EXPECT_NEAR(total, 0.7, 1e-12);  // optimum is 0.3
}

TEST(Matching, InputOrder) {
  const ScoreTable s = table({{"c1", 0.30}, {"c2", 0.50}}, {{"t1", 0.31}, {"t2", 0.45}});
  const MatchedPairs desc = nn1_match(s);
  EXPECT_EQ(desc.pairs[0].treated_id, "t2");
  const MatchedPairs in = nn1_match(s, MatchOrder::kInputOrder);
  EXPECT_EQ(in.pairs[0].treated_id, "t1");
}

TEST(MatchSummary, Properties) {
  const ScoreTable s = table({{"c1", 0.2}, {"c2", 0.5}}, {{"t1", 0.2}, {"t2", 0.5}});
  MatchedPairs m = nn1_match(s);
  const MatchSummary a = match_summary(m, s);
  EXPECT_EQ(*a.mean_delta_p, 0.0);
  EXPECT_EQ(*a.control_mean, *a.treated_mean);
  EXPECT_EQ(a.match_rate, 1.0);
  std::reverse(m.pairs.begin(), m.pairs.end());
  const MatchSummary b = match_summary(m, s);
  EXPECT_EQ(*a.control_mean, *b.control_mean);
  EXPECT_EQ(*a.control_sd, *b.control_sd);

  const MatchSummary empty = match_summary(caliper_match(table({{"c", 0.1}}, {{"t", 0.9}}), 0.05),
                                           table({{"c", 0.1}}, {{"t", 0.9}}));
  EXPECT_EQ(empty.match_rate, 0.0);
  EXPECT_FALSE(empty.mean_delta_p);
}

TEST(Matching, ControlMeanMovesTowardTreated) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::pair<std::string, double>> c, t;
  for (int i = 0; i < 200; ++i) c.push_back({"c" + std::to_string(1000 + i), 0.5 * u(rng)});
  for (int i = 0; i < 10; ++i) t.push_back({"t" + std::to_string(1000 + i), 0.2 + 0.3 * u(rng)});
  const ScoreTable s = table(c, t);
  const MatchSummary sum = match_summary(nn1_match(s), s);
  const double all_control = s.group_stats(0).mean;
  EXPECT_GT(*sum.control_mean, all_control);
  EXPECT_LE(*sum.control_mean, *sum.treated_mean + 1e-12);
}

TEST(MatchConfig, Validation) {
  MatchConfig c;
  c.caliper_width = 0.0;
  EXPECT_THROW(c.validate(), InputError);
  c.caliper_width = 0.05;
  EXPECT_NO_THROW(c.validate());
}
