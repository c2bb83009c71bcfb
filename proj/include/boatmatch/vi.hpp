#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "boatmatch/model.hpp"
#include "boatmatch/random.hpp"
#include "boatmatch/sampler.hpp"

namespace boatmatch {

// Multivariate normal q(theta) = N(mean, L L^T) with L lower triangular and a
// positive diagonal.
struct Guide {
  Eigen::VectorXd mean;
  Eigen::MatrixXd scale_factor;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  Eigen::MatrixXd covariance() const { return scale_factor * scale_factor.transpose(); }
  Eigen::VectorXd sd() const;
  double entropy() const;
  void validate() const;

  // mean = 0, factor = scale * I.
  static Guide isotropic(std::size_t dim, double scale);
  // mean + L * eps for each column of eps (dim x K); returns K x dim.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& eps) const;
  Eigen::MatrixXd sample(std::size_t n, Rng& rng) const;
};

double gaussian_entropy(const Eigen::MatrixXd& scale_factor);

struct ElboEstimate {
  double value = 0.0;
  std::size_t clamped = 0;  // draws whose log density was not finite
};

// E_q[log p] + H(q) with E_q estimated from n_mc reparameterised draws.
ElboEstimate elbo_estimate(const Guide& guide, const LogDensityFn& log_density,
                           std::size_t n_mc, Rng& rng);

// Reparameterisation gradient of the ELBO w.r.t. the mean and the factor.
// The factor gradient is lower triangular; diagonal entries are derivatives
// w.r.t. L_ii itself (not its log).
struct ElboGradient {
  ElboEstimate estimate;
  Eigen::VectorXd d_mean;
  Eigen::MatrixXd d_factor;
};

// Deterministic given `eps` (dim x n_mc standard normals), so it supports
// common-random-number finite differences.
ElboGradient elbo_gradient(const Guide& guide, const LogDensityFn& log_density,
                           const Eigen::MatrixXd& eps, bool mean_field = false);

struct VIConfig {
  std::size_t n_steps = 40000;
  std::size_t n_mc = 8;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  bool mean_field = false;
  double init_scale = 0.1;

  void validate() const;
};

struct VIResult {
  Guide guide;
  std::vector<double> loss_trace;  // negative ELBO estimate per step
  std::size_t clamped_draws = 0;
};

// Adam on (mean, off-diagonal factor, log diagonal). Throws VIDivergence with
// the offending step index when the loss turns non-finite.
VIResult fit_vi(const LogDensityFn& log_density, std::size_t dim, const VIConfig& config);

VIResult fit_vi(const Dataset& data, const Priors& priors, const VIConfig& config);

}  // namespace boatmatch
