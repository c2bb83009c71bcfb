#include "boatmatch/vi.hpp"

#include <cmath>
#include <numbers>

#include "boatmatch/error.hpp"

namespace boatmatch {

namespace {

// Stand-in for a non-finite log density at a sampled point.
constexpr double kClampedLogDensity = -1e100;

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd eps(rows, cols);
  // Column-major fill: one column per Monte Carlo draw.
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) eps(r, c) = normal(rng);
  }
  return eps;
}

}  // namespace

double gaussian_entropy(const Eigen::MatrixXd& scale_factor) {
  const auto d = static_cast<double>(scale_factor.rows());
  return 0.5 * d * (1.0 + std::log(2.0 * std::numbers::pi)) +
         scale_factor.diagonal().array().log().sum();
}

Eigen::VectorXd Guide::sd() const { return covariance().diagonal().cwiseSqrt(); }

double Guide::entropy() const { return gaussian_entropy(scale_factor); }

void Guide::validate() const {
  const Eigen::Index d = mean.size();
  if (scale_factor.rows() != d || scale_factor.cols() != d) {
    throw InputError("guide scale factor must be square with the mean's dimension");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(scale_factor(i, i) > 0.0)) throw InputError("guide scale factor needs a positive diagonal");
    for (Eigen::Index j = i + 1; j < d; ++j) {
      if (scale_factor(i, j) != 0.0) throw InputError("guide scale factor must be lower triangular");
    }
  }
}

Guide Guide::isotropic(std::size_t dim, double scale) {
  const auto d = static_cast<Eigen::Index>(dim);
  return Guide{Eigen::VectorXd::Zero(d), scale * Eigen::MatrixXd::Identity(d, d)};
}

Eigen::MatrixXd Guide::transform(const Eigen::MatrixXd& eps) const {
  return ((scale_factor.triangularView<Eigen::Lower>() * eps).colwise() + mean).transpose();
}

Eigen::MatrixXd Guide::sample(std::size_t n, Rng& rng) const {
  return transform(standard_normal(mean.size(), static_cast<Eigen::Index>(n), rng));
}

ElboGradient elbo_gradient(const Guide& guide, const LogDensityFn& log_density,
                           const Eigen::MatrixXd& eps, bool mean_field) {
  const Eigen::Index d = guide.mean.size();
  const Eigen::Index k = eps.cols();
  if (k == 0) throw InputError("ELBO needs at least one Monte Carlo draw");
  ElboGradient out;
  out.d_mean = Eigen::VectorXd::Zero(d);
  out.d_factor = Eigen::MatrixXd::Zero(d, d);

  const auto factor = guide.scale_factor.triangularView<Eigen::Lower>();
  Eigen::VectorXd theta(d);
  Eigen::VectorXd grad(d);
  double sum = 0.0;
  for (Eigen::Index s = 0; s < k; ++s) {
    theta = guide.mean + factor * eps.col(s);
    const double lp = log_density(theta, grad);
    if (!std::isfinite(lp) || !grad.allFinite()) {
      sum += kClampedLogDensity;
      ++out.estimate.clamped;
      continue;
    }
    sum += lp;
    out.d_mean += grad;
    out.d_factor.noalias() += grad * eps.col(s).transpose();
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  out.d_mean *= inv_k;
  out.d_factor *= inv_k;
  out.d_factor = out.d_factor.triangularView<Eigen::Lower>();
  if (mean_field) out.d_factor = out.d_factor.diagonal().asDiagonal();
  out.d_factor.diagonal().array() += guide.scale_factor.diagonal().array().inverse();
  out.estimate.value = sum * inv_k + guide.entropy();
  return out;
}

ElboEstimate elbo_estimate(const Guide& guide, const LogDensityFn& log_density,
                           std::size_t n_mc, Rng& rng) {
  guide.validate();
  if (n_mc == 0) throw InputError("ELBO needs at least one Monte Carlo draw");
  const Eigen::MatrixXd eps = standard_normal(guide.mean.size(), static_cast<Eigen::Index>(n_mc), rng);
  const auto factor = guide.scale_factor.triangularView<Eigen::Lower>();
  ElboEstimate out;
  Eigen::VectorXd grad;
  double sum = 0.0;
  for (Eigen::Index s = 0; s < eps.cols(); ++s) {
    const Eigen::VectorXd theta = guide.mean + factor * eps.col(s);
    const double lp = log_density(theta, grad);
    if (!std::isfinite(lp)) {
      sum += kClampedLogDensity;
      ++out.clamped;
    } else {
      sum += lp;
    }
  }
  out.value = sum / static_cast<double>(n_mc) + guide.entropy();
  return out;
}

void VIConfig::validate() const {
  if (n_mc == 0) throw InputError("VI needs n_mc >= 1");
  if (!(learning_rate > 0.0)) throw InputError("VI learning rate must be positive");
  if (!(init_scale > 0.0)) throw InputError("VI initial scale must be positive");
}

namespace {

class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate)
      : lr_(learning_rate), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  // Ascent step on `params` along `grad`.
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    params.array() += lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEpsilon);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
  double lr_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::size_t t_ = 0;
};

// Unconstrained layout: [mean (d) | log diag (d) | strict lower, column-major].
Eigen::VectorXd pack(const Guide& g) {
  const Eigen::Index d = g.mean.size();
  Eigen::VectorXd p(2 * d + d * (d - 1) / 2);
  p.head(d) = g.mean;
  p.segment(d, d) = g.scale_factor.diagonal().array().log();
  Eigen::Index k = 2 * d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j + 1; i < d; ++i) p(k++) = g.scale_factor(i, j);
  }
  return p;
}

Guide unpack(const Eigen::VectorXd& p, Eigen::Index d) {
  Guide g;
  g.mean = p.head(d);
  g.scale_factor = Eigen::MatrixXd::Zero(d, d);
  g.scale_factor.diagonal() = p.segment(d, d).array().exp();
  Eigen::Index k = 2 * d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j + 1; i < d; ++i) g.scale_factor(i, j) = p(k++);
  }
  return g;
}

Eigen::VectorXd pack_gradient(const ElboGradient& grad, const Guide& g) {
  const Eigen::Index d = g.mean.size();
  Eigen::VectorXd p(2 * d + d * (d - 1) / 2);
  p.head(d) = grad.d_mean;
  p.segment(d, d) = grad.d_factor.diagonal().cwiseProduct(g.scale_factor.diagonal());
  Eigen::Index k = 2 * d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j + 1; i < d; ++i) p(k++) = grad.d_factor(i, j);
  }
  return p;
}

}  // namespace

VIResult fit_vi(const LogDensityFn& log_density, std::size_t dim, const VIConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(dim);
  VIResult result;
  result.guide = Guide::isotropic(dim, config.init_scale);
  result.loss_trace.reserve(config.n_steps);
  if (config.n_steps == 0) return result;

  Rng rng(config.seed);
  Eigen::VectorXd params = pack(result.guide);
  Adam adam(params.size(), config.learning_rate);
  for (std::size_t step = 0; step < config.n_steps; ++step) {
    const Guide guide = unpack(params, d);
    const Eigen::MatrixXd eps = standard_normal(d, static_cast<Eigen::Index>(config.n_mc), rng);
    const ElboGradient grad = elbo_gradient(guide, log_density, eps, config.mean_field);
    const double loss = -grad.estimate.value;
    if (!std::isfinite(loss)) throw VIDivergence(step);
    result.loss_trace.push_back(loss);
    result.clamped_draws += grad.estimate.clamped;
    Eigen::VectorXd g = pack_gradient(grad, guide);
    if (config.mean_field) g.tail(g.size() - 2 * d).setZero();
    adam.step(params, g);
    if (!params.allFinite()) throw VIDivergence(step);
  }
  result.guide = unpack(params, d);
  return result;
}

VIResult fit_vi(const Dataset& data, const Priors& priors, const VIConfig& config) {
  data.validate();
  priors.validate();
  return fit_vi(make_log_posterior_fn(data, priors), data.dim() + 1, config);
}

}  // namespace boatmatch
