#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "boatmatch/ingest.hpp"
#include "boatmatch/model.hpp"
#include "boatmatch/random.hpp"

namespace boatmatch {

struct PriorPredictive {
  ParamVector theta;
  Eigen::VectorXd y;
};

// y_n ~ Bernoulli(sigmoid(alpha + beta . x_n)) for every row of x.
Eigen::VectorXd draw_assignment(const ParamVector& theta, const Eigen::MatrixXd& x, Rng& rng);

// alpha ~ N(0, lambda_alpha), beta ~ N(0, lambda_beta), then draw_assignment.
PriorPredictive generate_from_prior(const Priors& priors, const Eigen::MatrixXd& x, Rng& rng);

struct SynthConfig {
  std::size_t n_control = 1100;
  std::size_t n_treated = 38;
  std::size_t n_covariates = 14;
  // Assignment intercept; when unset it is solved so the expected treated
  // count equals n_treated on the drawn covariates.
  std::optional<double> true_alpha;
  Eigen::VectorXd true_beta;     // assignment coefficients, length I
  Eigen::VectorXd outcome_beta;  // outcome coefficients, length I
  double tau = 0.0;              // treatment effect in raw target units
  double outcome_intercept = 0.0;
  double noise_sd = 0.3;
  // Equicorrelation of the Gaussian copula behind the covariates; 0 gives
  // independent uniforms.
  double covariate_correlation = 0.0;
  std::size_t max_rejection_rounds = 1000000;
  std::uint64_t seed = 0;

  // Fills unset coefficient vectors with the defaults below.
  SynthConfig& with_defaults();
  void validate() const;

  static Eigen::VectorXd default_true_beta(std::size_t n_covariates);
  static Eigen::VectorXd default_outcome_beta(std::size_t n_covariates);
};

struct GroundTruth {
  double alpha = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd outcome_beta;
  double tau_raw = 0.0;
  double tau_scaled = 0.0;
  ColumnRange target_range;
  std::size_t rejection_rounds = 0;
};

struct Study {
  FeatureMatrix features;  // covariates in [0,1], target min-max scaled
  GroundTruth truth;
};

// Throws InputError when the exact group counts are not hit within
// max_rejection_rounds.
Study generate_study(const SynthConfig& config);

}  // namespace boatmatch
