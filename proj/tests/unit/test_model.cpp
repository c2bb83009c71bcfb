#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "boatmatch/error.hpp"
#include "boatmatch/model.hpp"

using namespace boatmatch;

namespace {

Dataset make_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Dataset d;
  d.x = x;
  d.y = y;
  return d;
}

Eigen::VectorXd finite_difference(const ParamVector& theta, const Dataset& d, const Priors& p) {
  Eigen::VectorXd g(theta.size());
  const double h = 1e-5;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    ParamVector up = theta, down = theta;
    up(k) += h;
    down(k) -= h;
    g(k) = (log_posterior(up, d, p) - log_posterior(down, d, p)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(LogPrior, DensityAtMode) {
  EXPECT_NEAR(log_prior(make_params(0.0, Eigen::VectorXd::Zero(1)), Priors{}), -1.837877, 1e-6);
}

TEST(LogPrior, InterceptOnly) {
  EXPECT_NEAR(log_prior(make_params(1.0, Eigen::VectorXd()), Priors{}), -1.418939, 1e-6);
}

TEST(LogPrior, EvenFunction) {
  for (double c : {0.3, 1.7, 5.0}) {
    EXPECT_DOUBLE_EQ(log_prior(make_params(c, Eigen::VectorXd()), Priors{2.0, 1.0}),
                     log_prior(make_params(-c, Eigen::VectorXd()), Priors{2.0, 1.0}));
  }
}

TEST(LogPrior, VarianceParameterisation) {
  // lambda is a variance: N(2 | 0, 4) = -0.5 ln(8 pi) - 0.5
  EXPECT_NEAR(log_prior(make_params(2.0, Eigen::VectorXd()), Priors{4.0, 1.0}),
              -0.5 * std::log(8.0 * M_PI) - 0.5, 1e-12);
}

TEST(Propensity, Values) {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.7);
  EXPECT_DOUBLE_EQ(propensity(make_params(0.0, Eigen::VectorXd::Zero(3)), x), 0.5);
  EXPECT_NEAR(propensity(make_params(2.0, Eigen::VectorXd::Zero(3)), x), 0.880797, 1e-6);
  const double tiny = propensity(make_params(-50.0, Eigen::VectorXd::Zero(3)), x);
  EXPECT_GT(tiny, 0.0);
  EXPECT_LT(tiny, 1e-20);
  EXPECT_NEAR(log_sigmoid(-50.0), -50.0, 1e-12);
}

TEST(Propensity, NoOverflow) {
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  for (double a : {-700.0, 700.0}) {
    const double p = propensity(make_params(a, Eigen::VectorXd::Zero(1)), x);
    EXPECT_TRUE(std::isfinite(p));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_TRUE(std::isfinite(log_sigmoid(-700.0)));
  EXPECT_TRUE(std::isfinite(log_sigmoid(700.0)));
}

TEST(Propensity, NegationComplement) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 2);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd beta(3), x(3);
    for (int k = 0; k < 3; ++k) {
      beta(k) = n(rng);
      x(k) = n(rng);
    }
    const double a = n(rng);
    EXPECT_NEAR(propensity(make_params(a, beta), x) + propensity(make_params(-a, -beta), x), 1.0, 1e-12);
  }
}

TEST(LogPosterior, HalfProbabilities) {
  Eigen::MatrixXd x(4, 1);
  x << 0.1, 0.5, 0.9, 0.3;
  Eigen::VectorXd y(4);
  y << 1, 0, 0, 1;
  EXPECT_NEAR(log_posterior(Eigen::VectorXd::Zero(2), make_data(x, y), Priors{}), -4.610466, 1e-6);
}

TEST(LogPosterior, RowSwapInvariant) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 1);
  Eigen::VectorXd y(2), y2(2);
  y << 1, 0;
  y2 << 0, 1;
  const double a = log_posterior(Eigen::VectorXd::Zero(2), make_data(x, y), Priors{});
  const double b = log_posterior(Eigen::VectorXd::Zero(2), make_data(x, y2), Priors{});
  EXPECT_DOUBLE_EQ(a, b);
  EXPECT_NEAR(a, 2 * std::log(0.5) + log_prior(Eigen::VectorXd::Zero(2), Priors{}), 1e-15);
}

TEST(LogPosterior, HandComputedFixture) {
  Eigen::MatrixXd x(3, 2);
  x << 0.2, 0.8, 0.5, 0.1, 0.9, 0.4;
  Eigen::VectorXd y(3);
  y << 1, 0, 1;
  const ParamVector theta = make_params(-0.5, Eigen::Vector2d(1.0, -2.0));
  // etas: -0.5+0.2-1.6 = -1.9; -0.5+0.5-0.2 = -0.2; -0.5+0.9-0.8 = -0.4
  const double ll = -std::log1p(std::exp(1.9)) - std::log1p(std::exp(-0.2)) - std::log1p(std::exp(0.4));
  const double lp = 3 * (-0.5 * std::log(2 * M_PI)) - 0.5 * (0.25 + 1.0 + 4.0);
  EXPECT_NEAR(log_posterior(theta, make_data(x, y), Priors{}), ll + lp, 1e-10);
}

TEST(LogPosterior, PermutationInvariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::MatrixXd x(20, 3);
  Eigen::VectorXd y(20);
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 3; ++c) x(r, c) = u(rng);
    y(r) = r % 3 == 0;
  }
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(20);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 20, rng);
  const ParamVector theta = make_params(0.3, Eigen::Vector3d(-1, 2, 0.5));
  EXPECT_NEAR(log_posterior(theta, make_data(x, y), Priors{}),
              log_posterior(theta, make_data(perm * x, perm * y), Priors{}), 1e-10);
}

TEST(Gradient, BalancedSymmetricIsZero) {
  Eigen::MatrixXd x(4, 1);
  x << -1, 1, -1, 1;
  Eigen::VectorXd y(4);
  y << 1, 1, 0, 0;
  const Eigen::VectorXd g = grad_log_posterior(Eigen::VectorXd::Zero(2), make_data(x, y), Priors{});
  EXPECT_NEAR(g.norm(), 0.0, 1e-15);
}

TEST(Gradient, PriorOnly) {
  Dataset d;
  d.x.resize(0, 2);
  d.y.resize(0);
  const ParamVector theta = make_params(1.5, Eigen::Vector2d(-2.0, 4.0));
  const Eigen::VectorXd g = grad_log_posterior(theta, d, Priors{3.0, 2.0});
  EXPECT_NEAR(g(0), -0.5, 1e-15);
  EXPECT_NEAR(g(1), 1.0, 1e-15);
  EXPECT_NEAR(g(2), -2.0, 1e-15);
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> n(0, 1.5);
  for (int inst = 0; inst < 50; ++inst) {
    const int rows = 1 + inst % 30, dim = inst % 5 + 1;
    Eigen::MatrixXd x(rows, dim);
    Eigen::VectorXd y(rows);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < dim; ++c) x(r, c) = u(rng);
      y(r) = u(rng) < 0.5;
    }
    ParamVector theta(dim + 1);
    for (int k = 0; k <= dim; ++k) theta(k) = n(rng);
    const Dataset d = make_data(x, y);
    const Eigen::VectorXd fd = finite_difference(theta, d, Priors{});
    EXPECT_LT((grad_log_posterior(theta, d, Priors{}) - fd).norm() / fd.norm(), 1e-6);
  }
}

TEST(Gradient, CombinedEvaluationAgrees) {
  Eigen::MatrixXd x(3, 2);
  x << 0.2, 0.8, 0.5, 0.1, 0.9, 0.4;
  Eigen::VectorXd y(3);
  y << 1, 0, 1;
  const Dataset d = make_data(x, y);
  const ParamVector theta = make_params(-0.5, Eigen::Vector2d(1.0, -2.0));
  Eigen::VectorXd g;
  const double v = log_posterior_and_grad(theta, d, Priors{}, g);
  EXPECT_DOUBLE_EQ(v, log_posterior(theta, d, Priors{}));
  EXPECT_LT((g - grad_log_posterior(theta, d, Priors{})).norm(), 1e-14);
}

TEST(DatasetValidate, Rules) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 1);
  Eigen::VectorXd all_one = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(make_data(x, all_one).validate(), InputError);
  Eigen::VectorXd bad(3);
  bad << 0, 1, 2;
  EXPECT_THROW(make_data(x, bad).validate(), InputError);
  Eigen::VectorXd more_treated(3);
  more_treated << 1, 1, 0;
  const auto warnings = make_data(x, more_treated).validate();
  ASSERT_EQ(warnings.size(), 1u);
  Eigen::VectorXd fine(3);
  fine << 1, 0, 0;
  EXPECT_TRUE(make_data(x, fine).validate().empty());
}

TEST(PriorsValidate, PositiveVariances) {
  EXPECT_THROW((Priors{0.0, 1.0}).validate(), InputError);
  EXPECT_THROW((Priors{1.0, -1.0}).validate(), InputError);
  EXPECT_NO_THROW(Priors{}.validate());
}
