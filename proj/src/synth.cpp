#include "boatmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "boatmatch/error.hpp"

namespace boatmatch {

Eigen::VectorXd draw_assignment(const ParamVector& theta, const Eigen::MatrixXd& x, Rng& rng) {
  if (theta.size() != x.cols() + 1) throw InputError("parameter length does not match covariates");
  Eigen::VectorXd y(x.rows());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    const double p = sigmoid(theta(0) + x.row(n).dot(theta.tail(x.cols())));
    y(n) = unif(rng) < p ? 1.0 : 0.0;
  }
  return y;
}

PriorPredictive generate_from_prior(const Priors& priors, const Eigen::MatrixXd& x, Rng& rng) {
  priors.validate();
  PriorPredictive out;
  out.theta.resize(x.cols() + 1);
  std::normal_distribution<double> alpha(0.0, std::sqrt(priors.lambda_alpha));
  std::normal_distribution<double> beta(0.0, std::sqrt(priors.lambda_beta));
  out.theta(0) = alpha(rng);
  for (Eigen::Index i = 1; i < out.theta.size(); ++i) out.theta(i) = beta(rng);
  out.y = draw_assignment(out.theta, x, rng);
  return out;
}

Eigen::VectorXd SynthConfig::default_true_beta(std::size_t n_covariates) {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_covariates), 1.0);
}

Eigen::VectorXd SynthConfig::default_outcome_beta(std::size_t n_covariates) {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_covariates), 1.0);
}

SynthConfig& SynthConfig::with_defaults() {
  if (true_beta.size() == 0) true_beta = default_true_beta(n_covariates);
  if (outcome_beta.size() == 0) outcome_beta = default_outcome_beta(n_covariates);
  return *this;
}

void SynthConfig::validate() const {
  const auto dim = static_cast<Eigen::Index>(n_covariates);
  if (n_control + n_treated < 2) throw InputError("synthetic study needs at least 2 units");
  if (n_control == 0 || n_treated == 0) throw InputError("synthetic study needs both groups");
  if (true_beta.size() != dim) throw InputError("true_beta length must equal n_covariates");
  if (outcome_beta.size() != dim) throw InputError("outcome_beta length must equal n_covariates");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw InputError("noise_sd must be >= 0");
  if (!(covariate_correlation >= 0.0 && covariate_correlation < 1.0)) {
    throw InputError("covariate_correlation must be in [0, 1)");
  }
  if (max_rejection_rounds == 0) throw InputError("max_rejection_rounds must be positive");
  if (true_alpha && !std::isfinite(*true_alpha)) throw InputError("true_alpha must be finite");
}

namespace {

Eigen::MatrixXd draw_covariates(std::size_t n, std::size_t dim, double rho, Rng& rng) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  if (rho == 0.0) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = unif(rng);
    return x;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double common = normal(rng);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double z = a * common + b * normal(rng);
      x(r, c) = 0.5 * std::erfc(-z / std::sqrt(2.0));
    }
  }
  return x;
}

// Intercept giving sum_n sigmoid(alpha + eta_n) = target.
double solve_alpha(const Eigen::VectorXd& eta, double target) {
  auto expected = [&](double alpha) {
    double s = 0.0;
    for (Eigen::Index n = 0; n < eta.size(); ++n) s += sigmoid(alpha + eta(n));
    return s;
  };
  double lo = -50.0 - eta.maxCoeff(), hi = 50.0 - eta.minCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

Study generate_study(const SynthConfig& input) {
  SynthConfig config = input;
  config.with_defaults();
  config.validate();

  Rng rng(config.seed);
  const std::size_t n = config.n_control + config.n_treated;
  const std::size_t dim = config.n_covariates;
  const Eigen::MatrixXd x = draw_covariates(n, dim, config.covariate_correlation, rng);
  const Eigen::VectorXd eta = x * config.true_beta;
  const double alpha =
      config.true_alpha ? *config.true_alpha
                        : solve_alpha(eta, static_cast<double>(config.n_treated));

  std::vector<double> prob(n);
  for (std::size_t i = 0; i < n; ++i) prob[i] = sigmoid(alpha + eta(static_cast<Eigen::Index>(i)));

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> groups(n, 0);
  std::size_t rounds = 0;
  for (;;) {
    if (rounds == config.max_rejection_rounds) {
      throw InputError("could not reach " + std::to_string(config.n_treated) + " treated units in " +
                       std::to_string(rounds) +
                       " rejection rounds; try a weaker true_beta or a different true_alpha");
    }
    ++rounds;
    std::size_t treated = 0;
    for (std::size_t i = 0; i < n; ++i) {
      groups[i] = unif(rng) < prob[i] ? 1 : 0;
      treated += static_cast<std::size_t>(groups[i]);
    }
    if (treated == config.n_treated) break;
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    z(r) = config.outcome_intercept + x.row(r).dot(config.outcome_beta) + config.tau * groups[i] +
           config.noise_sd * noise(rng);
  }

  Study study;
  FeatureMatrix& f = study.features;
  const int width = std::max<int>(4, static_cast<int>(std::to_string(n).size()));
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = std::to_string(i + 1);
    f.unit_ids.push_back("unit_" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id);
  }
  f.groups = groups;
  f.covariates = x;
  for (std::size_t j = 0; j < dim; ++j) {
    f.covariate_names.push_back(dim == kNumCovariates ? std::string(kCovariateNames[j])
                                                      : "x" + std::to_string(j + 1));
    f.scaling_params[f.covariate_names.back()] = {0.0, 1.0};
  }
  const ColumnRange range{z.minCoeff(), z.maxCoeff()};
  const double span = range.max - range.min;
  f.target = span > 0.0 ? Eigen::VectorXd((z.array() - range.min) / span)
                        : Eigen::VectorXd::Zero(z.size());
  f.scaling_params["target"] = range;
  f.scaled = true;

  GroundTruth& t = study.truth;
  t.alpha = alpha;
  t.beta = config.true_beta;
  t.outcome_beta = config.outcome_beta;
  t.tau_raw = config.tau;
  t.tau_scaled = span > 0.0 ? config.tau / span : 0.0;
  t.target_range = range;
  t.rejection_rounds = rounds;
  return study;
}

}  // namespace boatmatch
