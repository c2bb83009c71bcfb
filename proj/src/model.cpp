#include "boatmatch/model.hpp"

#include <cmath>
#include <numbers>

#include "boatmatch/error.hpp"
#include "boatmatch/ingest.hpp"

namespace boatmatch {

std::vector<std::string> Dataset::validate() const {
  if (y.size() != x.rows()) throw InputError("dataset: y length does not match rows of X");
  if (!unit_ids.empty() && unit_ids.size() != size()) {
    throw InputError("dataset: unit_ids length does not match rows of X");
  }
  std::size_t n_treated = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw InputError("dataset: y must be 0 or 1");
    if (y(i) == 1.0) ++n_treated;
  }
  if (!x.allFinite()) throw InputError("dataset: covariates must be finite");
  const std::size_t n_control = size() - n_treated;
  if (n_treated == 0 || n_control == 0) {
    throw InputError("dataset needs both control and treated units (got " +
                     std::to_string(n_control) + " control, " + std::to_string(n_treated) +
                     " treated)");
  }
  std::vector<std::string> warnings;
  if (n_control < n_treated) {
    warnings.push_back("fewer controls (" + std::to_string(n_control) + ") than treated (" +
                       std::to_string(n_treated) + ")");
  }
  return warnings;
}

Dataset Dataset::from_features(const FeatureMatrix& features) {
  Dataset d;
  d.x = features.covariates;
  d.y.resize(static_cast<Eigen::Index>(features.rows()));
  for (std::size_t i = 0; i < features.rows(); ++i) {
    d.y(static_cast<Eigen::Index>(i)) = features.groups[i] == 1 ? 1.0 : 0.0;
  }
  d.unit_ids = features.unit_ids;
  return d;
}

void Priors::validate() const {
  if (!(lambda_alpha > 0.0) || !(lambda_beta > 0.0)) {
    throw InputError("prior variances must be strictly positive");
  }
}

ParamVector make_params(double alpha, const Eigen::VectorXd& beta) {
  ParamVector theta(beta.size() + 1);
  theta(0) = alpha;
  theta.tail(beta.size()) = beta;
  return theta;
}

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(sigmoid(eta)) = -softplus(-eta).
double log_sigmoid(double eta) {
  if (eta >= 0.0) return -std::log1p(std::exp(-eta));
  return eta - std::log1p(std::exp(eta));
}

namespace {

double gaussian_log_density(double v, double variance) {
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * v * v / variance;
}

}  // namespace

double log_prior(const ParamVector& theta, const Priors& priors) {
  double lp = gaussian_log_density(theta(0), priors.lambda_alpha);
  for (Eigen::Index i = 1; i < theta.size(); ++i) {
    lp += gaussian_log_density(theta(i), priors.lambda_beta);
  }
  return lp;
}

double propensity(const ParamVector& theta, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double eta = theta(0) + coefficients(theta).dot(x);
  // Keep the score strictly inside (0, 1) even where the logistic saturates.
  constexpr double kUpper = 1.0 - 0x1p-53;
  return std::min(std::max(sigmoid(eta), std::numeric_limits<double>::min()), kUpper);
}

double log_posterior_and_grad(const ParamVector& theta, const Dataset& data,
                              const Priors& priors, Eigen::VectorXd& grad) {
  const Eigen::Index dim = theta.size();
  grad.resize(dim);
  const double alpha = theta(0);
  const auto beta = coefficients(theta);

  double lp = log_prior(theta, priors);
  grad(0) = -alpha / priors.lambda_alpha;
  grad.tail(dim - 1) = -beta / priors.lambda_beta;
  if (data.size() == 0) return lp;

  const Eigen::VectorXd eta = (data.x * beta).array() + alpha;
  Eigen::VectorXd residual(eta.size());
  double loglik = 0.0;
  for (Eigen::Index n = 0; n < eta.size(); ++n) {
    // y log p + (1 - y) log(1 - p) = y eta + log_sigmoid(-eta)
    loglik += data.y(n) * eta(n) + log_sigmoid(-eta(n));
    residual(n) = data.y(n) - sigmoid(eta(n));
  }
  grad(0) += residual.sum();
  grad.tail(dim - 1).noalias() += data.x.transpose() * residual;
  return lp + loglik;
}

double log_posterior(const ParamVector& theta, const Dataset& data, const Priors& priors) {
  Eigen::VectorXd grad;
  return log_posterior_and_grad(theta, data, priors, grad);
}

Eigen::VectorXd grad_log_posterior(const ParamVector& theta, const Dataset& data,
                                   const Priors& priors) {
  Eigen::VectorXd grad;
  log_posterior_and_grad(theta, data, priors, grad);
  return grad;
}

}  // namespace boatmatch
