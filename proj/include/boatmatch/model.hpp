#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace boatmatch {

struct FeatureMatrix;

// Treatment-assignment data for the logistic propensity model.
struct Dataset {
  Eigen::MatrixXd x;  // N x I
  Eigen::VectorXd y;  // N, entries 0 or 1
  std::vector<std::string> unit_ids;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }

  // Checks y is binary, sizes agree and both classes are present. Returns
  // warnings (currently only N_c < N_t). Throws InputError otherwise.
  std::vector<std::string> validate() const;

  static Dataset from_features(const FeatureMatrix& features);
};

// Zero-mean Gaussian prior variances on the intercept and the coefficients.
struct Priors {
  double lambda_alpha = 1.0;
  double lambda_beta = 1.0;

  void validate() const;
};

// Packed parameters: index 0 is the intercept, 1..I the coefficients.
using ParamVector = Eigen::VectorXd;

inline double intercept(const ParamVector& theta) { return theta(0); }
inline auto coefficients(const ParamVector& theta) {
  return theta.tail(theta.size() - 1);
}

ParamVector make_params(double alpha, const Eigen::VectorXd& beta);

double sigmoid(double eta);
double log_sigmoid(double eta);

double log_prior(const ParamVector& theta, const Priors& priors);

double propensity(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x);

double log_posterior(const ParamVector& theta, const Dataset& data, const Priors& priors);

Eigen::VectorXd grad_log_posterior(const ParamVector& theta, const Dataset& data,
                                   const Priors& priors);

// Value and gradient in one pass over the data.
double log_posterior_and_grad(const ParamVector& theta, const Dataset& data,
                              const Priors& priors, Eigen::VectorXd& grad);

}  // namespace boatmatch
