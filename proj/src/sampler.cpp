#include "boatmatch/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "boatmatch/error.hpp"

namespace boatmatch {

LogDensityFn make_log_posterior_fn(const Dataset& data, const Priors& priors) {
  return [&data, priors](const Eigen::VectorXd& q, Eigen::VectorXd& grad) {
    return log_posterior_and_grad(q, data, priors, grad);
  };
}

double kinetic_energy(const Eigen::VectorXd& momentum, const Eigen::VectorXd& inv_mass) {
  return 0.5 * momentum.dot(inv_mass.cwiseProduct(momentum));
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_mass) {
  return -z.log_density + kinetic_energy(z.momentum, inv_mass);
}

bool leapfrog(PhasePoint& z, double step_size, const Eigen::VectorXd& inv_mass,
              const LogDensityFn& log_density) {
  const double half = 0.5 * step_size;
  z.momentum += half * z.gradient;
  z.position += step_size * inv_mass.cwiseProduct(z.momentum);
  z.log_density = log_density(z.position, z.gradient);
  z.momentum += half * z.gradient;
  return std::isfinite(z.log_density) && z.gradient.allFinite();
}

ChainState ChainState::at(const Eigen::VectorXd& position, const LogDensityFn& log_density) {
  ChainState s;
  s.position = position;
  s.log_density = log_density(s.position, s.gradient);
  if (!std::isfinite(s.log_density) || !s.gradient.allFinite()) {
    throw InputError("log density is not finite at the initial point");
  }
  return s;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Trajectory segment in absolute time order: `left` is earliest, `right` latest.
struct Tree {
  PhasePoint left;
  PhasePoint right;
  Eigen::VectorXd rho;  // sum of momenta over the segment
  ChainState proposal;
  double log_weight = kNegInf;
  double sum_accept = 0.0;
  int n_leapfrog = 0;
  bool divergent = false;
  bool turning = false;

  bool valid() const { return !divergent && !turning; }
};

// No-U-turn criterion on a momentum sum and its two boundary momenta.
bool keeps_going(const Eigen::VectorXd& p_sharp_left, const Eigen::VectorXd& p_sharp_right,
                 const Eigen::VectorXd& rho) {
  return p_sharp_left.dot(rho) > 0.0 && p_sharp_right.dot(rho) > 0.0;
}

class TreeBuilder {
 public:
  TreeBuilder(const LogDensityFn& log_density, const Eigen::VectorXd& inv_mass,
              const NutsOptions& options, double step_size, double h0, double log_slice, Rng& rng)
      : log_density_(log_density),
        inv_mass_(inv_mass),
        options_(options),
        step_size_(step_size),
        h0_(h0),
        log_slice_(log_slice),
        rng_(rng) {}

  Tree build(int depth, const PhasePoint& from, int direction) {
    if (depth == 0) return leaf(from, direction);
    Tree first = build(depth - 1, from, direction);
    if (!first.valid()) return first;
    Tree second = build(depth - 1, direction > 0 ? first.right : first.left, direction);
    if (!second.valid()) {
      first.n_leapfrog += second.n_leapfrog;
      first.sum_accept += second.sum_accept;
      first.divergent = first.divergent || second.divergent;
      first.turning = true;
      return first;
    }
    // Uniform progressive sampling inside a subtree.
    const double total = log_sum_exp(first.log_weight, second.log_weight);
    bool take_second = false;
    if (second.log_weight != kNegInf) {
      take_second = std::log(uniform_(rng_)) < second.log_weight - total;
    }
    ChainState proposal = take_second ? std::move(second.proposal) : std::move(first.proposal);
    Tree merged = direction > 0 ? merge(std::move(first), std::move(second))
                                : merge(std::move(second), std::move(first));
    merged.proposal = std::move(proposal);
    return merged;
  }

  // Joins two adjacent segments; sets `turning` from the criterion over the
  // joined segment and across the seam.
  Tree merge(Tree left, Tree right) const {
    Tree t;
    t.rho = left.rho + right.rho;
    t.log_weight = log_sum_exp(left.log_weight, right.log_weight);
    t.sum_accept = left.sum_accept + right.sum_accept;
    t.n_leapfrog = left.n_leapfrog + right.n_leapfrog;

    const Eigen::VectorXd ps_ll = inv_mass_.cwiseProduct(left.left.momentum);
    const Eigen::VectorXd ps_lr = inv_mass_.cwiseProduct(left.right.momentum);
    const Eigen::VectorXd ps_rl = inv_mass_.cwiseProduct(right.left.momentum);
    const Eigen::VectorXd ps_rr = inv_mass_.cwiseProduct(right.right.momentum);
    bool go = keeps_going(ps_ll, ps_rr, t.rho);
    go = go && keeps_going(ps_ll, ps_rl, left.rho + right.left.momentum);
    go = go && keeps_going(ps_lr, ps_rr, right.rho + left.right.momentum);
    t.turning = !go;

    t.left = std::move(left.left);
    t.right = std::move(right.right);
    t.proposal = std::move(left.proposal);
    return t;
  }

  double uniform() { return uniform_(rng_); }

 private:
  Tree leaf(const PhasePoint& from, int direction) {
    Tree t;
    PhasePoint z = from;
    const bool finite = leapfrog(z, direction * step_size_, inv_mass_, log_density_);
    t.n_leapfrog = 1;
    const double h = finite ? hamiltonian(z, inv_mass_) : std::numeric_limits<double>::infinity();
    const double energy_error = h - h0_;
    if (!finite || !std::isfinite(h) || energy_error > options_.max_energy_error) {
      t.divergent = true;
      t.left = z;
      t.right = z;
      t.rho = z.momentum;
      return t;
    }
    t.sum_accept = energy_error <= 0.0 ? 1.0 : std::exp(-energy_error);
    if (options_.sampling == TrajectorySampling::kMultinomial) {
      t.log_weight = -energy_error;
    } else {
      t.log_weight = -energy_error >= log_slice_ ? 0.0 : kNegInf;
    }
    t.rho = z.momentum;
    t.proposal.position = z.position;
    t.proposal.gradient = z.gradient;
    t.proposal.log_density = z.log_density;
    t.left = z;
    t.right = std::move(z);
    return t;
  }

  const LogDensityFn& log_density_;
  const Eigen::VectorXd& inv_mass_;
  const NutsOptions& options_;
  double step_size_;
  double h0_;
  double log_slice_;
  Rng& rng_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace

Transition nuts_step(const ChainState& state, double step_size, const Eigen::VectorXd& inv_mass,
                     const LogDensityFn& log_density, const NutsOptions& options, Rng& rng) {
  if (!(step_size > 0.0)) throw InputError("step size must be positive");
  const Eigen::Index dim = state.position.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  PhasePoint z0;
  z0.position = state.position;
  z0.gradient = state.gradient;
  z0.log_density = state.log_density;
  z0.momentum.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z0.momentum(i) = normal(rng) / std::sqrt(inv_mass(i));
  const double h0 = hamiltonian(z0, inv_mass);
  const double log_slice =
      options.sampling == TrajectorySampling::kSlice ? std::log(uniform(rng)) : 0.0;

  TreeBuilder builder(log_density, inv_mass, options, step_size, h0, log_slice, rng);

  Tree trajectory;
  trajectory.left = z0;
  trajectory.right = z0;
  trajectory.rho = z0.momentum;
  trajectory.proposal = state;
  trajectory.log_weight = 0.0;

  Transition out;
  out.state = state;
  const int max_depth = std::max(1, options.max_tree_depth);
  int depth = 0;
  double sum_accept = 0.0;
  int n_leapfrog = 0;
  bool divergent = false;
  while (depth < max_depth) {
    const int direction = builder.uniform() < 0.5 ? -1 : 1;
    Tree sub = builder.build(depth, direction > 0 ? trajectory.right : trajectory.left, direction);
    sum_accept += sub.sum_accept;
    n_leapfrog += sub.n_leapfrog;
    ++depth;
    if (sub.divergent) {
      divergent = true;
      break;
    }
    if (sub.turning) break;
    // Biased progressive sampling between the old trajectory and the new subtree.
    if (sub.log_weight != kNegInf) {
      const double log_ratio = sub.log_weight - trajectory.log_weight;
      if (log_ratio >= 0.0 || std::log(builder.uniform()) < log_ratio) {
        out.state = sub.proposal;
      }
    }
    trajectory = direction > 0 ? builder.merge(std::move(trajectory), std::move(sub))
                               : builder.merge(std::move(sub), std::move(trajectory));
    if (trajectory.turning) break;
  }

  out.stats.tree_depth = depth;
  out.stats.n_leapfrog = n_leapfrog;
  out.stats.divergent = divergent;
  out.stats.accept_stat = n_leapfrog > 0 ? sum_accept / n_leapfrog : 0.0;
  out.stats.energy = h0;
  return out;
}

DualAveraging::DualAveraging(double center, double target_accept, double gamma, double t0,
                             double kappa)
    : log_center_(std::log(center)),
      target_(target_accept),
      gamma_(gamma),
      t0_(t0),
      kappa_(kappa),
      log_step_(log_center_),
      log_step_bar_(log_center_) {
  if (!(center > 0.0)) throw InputError("dual averaging center must be positive");
}

double DualAveraging::update(double accept_stat) {
  ++count_;
  const double t = static_cast<double>(count_);
  const double stat = std::min(1.0, std::max(0.0, accept_stat));
  const double eta = 1.0 / (t + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - stat);
  log_step_ = log_center_ - std::sqrt(t) / gamma_ * h_bar_;
  const double w = std::pow(t, -kappa_);
  log_step_bar_ = w * log_step_ + (1.0 - w) * log_step_bar_;
  return step_size();
}

double DualAveraging::step_size() const { return std::exp(log_step_); }
double DualAveraging::final_step_size() const { return std::exp(log_step_bar_); }

void DualAveraging::restart(double center) {
  log_center_ = std::log(center);
  h_bar_ = 0.0;
  count_ = 0;
  log_step_ = log_center_;
  log_step_bar_ = log_center_;
}

double find_reasonable_step_size(const ChainState& state, double initial,
                                 const Eigen::VectorXd& inv_mass, const LogDensityFn& log_density,
                                 Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index dim = state.position.size();
  double step = initial;
  PhasePoint z0;
  z0.position = state.position;
  z0.gradient = state.gradient;
  z0.log_density = state.log_density;
  z0.momentum.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z0.momentum(i) = normal(rng) / std::sqrt(inv_mass(i));
  const double h0 = hamiltonian(z0, inv_mass);

  auto log_accept = [&](double eps) {
    PhasePoint z = z0;
    if (!leapfrog(z, eps, inv_mass, log_density)) return kNegInf;
    const double h = hamiltonian(z, inv_mass);
    return std::isfinite(h) ? h0 - h : kNegInf;
  };
  const double log_half = std::log(0.5);
  const int direction = log_accept(step) > log_half ? 1 : -1;
  for (int i = 0; i < 100; ++i) {
    const double la = log_accept(step);
    if (direction == 1 ? !(la > log_half) : la > log_half) break;
    step = direction == 1 ? step * 2.0 : step * 0.5;
    if (step < 1e-12 || step > 1e7) break;
  }
  return step;
}

void SamplerConfig::validate() const {
  if (n_samples == 0) throw InputError("n_samples must be positive");
  if (n_chains == 0) throw InputError("n_chains must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw InputError("target_accept must lie in (0, 1)");
  }
  if (max_tree_depth < 0) throw InputError("max_tree_depth must be non-negative");
}

std::size_t PosteriorDraws::n_chains() const {
  if (chain_ids.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(chain_ids.begin(), chain_ids.end())) + 1;
}

Eigen::MatrixXd PosteriorDraws::chain(int id) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < chain_ids.size(); ++i) {
    if (chain_ids[i] == id) rows.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), draws.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = draws.row(rows[r]);
  }
  return out;
}

namespace {

struct ChainResult {
  Eigen::MatrixXd draws;
  std::size_t divergences = 0;
  double sum_accept = 0.0;
  double sum_depth = 0.0;
  double step_size = 0.0;
  std::vector<std::string> warnings;
};

ChainResult run_chain(const LogDensityFn& log_density, Eigen::VectorXd initial,
                      const SamplerConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index dim = initial.size();
  ChainResult result;
  result.draws.resize(static_cast<Eigen::Index>(config.n_samples), dim);

  NutsOptions options;
  options.max_tree_depth = config.max_tree_depth;
  options.sampling = config.sampling;

  Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(dim);
  ChainState state = ChainState::at(initial, log_density);
  double step = find_reasonable_step_size(state, 1.0, inv_mass, log_density, rng);
  DualAveraging adapter(10.0 * step, config.target_accept);

  // Variance window for optional diagonal mass adaptation.
  const std::size_t warmup = config.n_warmup;
  const std::size_t window_begin = warmup * 15 / 100;
  const std::size_t window_end = warmup - warmup / 10;
  const bool adapt_mass = config.adapt_diag_mass && window_end > window_begin + 20;
  if (config.adapt_diag_mass && !adapt_mass) {
    result.warnings.push_back("warmup too short for mass-matrix adaptation; using identity");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  std::size_t window_count = 0;

  const std::size_t total = warmup + config.n_samples;
  for (std::size_t it = 0; it < total; ++it) {
    Transition tr = nuts_step(state, step, inv_mass, log_density, options, rng);
    state = std::move(tr.state);
    if (it < warmup) {
      step = adapter.update(tr.stats.accept_stat);
      if (adapt_mass && it >= window_begin && it < window_end) {
        ++window_count;
        const Eigen::VectorXd delta = state.position - mean;
        mean += delta / static_cast<double>(window_count);
        m2 += delta.cwiseProduct(state.position - mean);
        if (it + 1 == window_end) {
          const double n = static_cast<double>(window_count);
          const Eigen::VectorXd var = m2 / (n - 1.0);
          inv_mass = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
          step = find_reasonable_step_size(state, step, inv_mass, log_density, rng);
          adapter.restart(10.0 * step);
        }
      }
      if (it + 1 == warmup) step = adapter.final_step_size();
    } else {
      const auto row = static_cast<Eigen::Index>(it - warmup);
      result.draws.row(row) = state.position.transpose();
      result.sum_accept += tr.stats.accept_stat;
      result.sum_depth += tr.stats.tree_depth;
      if (tr.stats.divergent) ++result.divergences;
    }
  }
  result.step_size = step;
  return result;
}

}  // namespace

PosteriorDraws sample(const LogDensityFn& log_density, const Eigen::VectorXd& initial,
                      const SamplerConfig& config, const Eigen::VectorXd& prior_sd) {
  config.validate();
  const Eigen::Index dim = initial.size();
  std::vector<ChainResult> chains(config.n_chains);
  std::vector<Eigen::VectorXd> starts(config.n_chains);
  for (std::size_t c = 0; c < config.n_chains; ++c) {
    if (config.init == InitMode::kPriorDraw) {
      Rng init_rng(derive_seed(config.seed, stream_id("init") + c));
      std::normal_distribution<double> normal(0.0, 1.0);
      starts[c].resize(dim);
      for (Eigen::Index i = 0; i < dim; ++i) {
        const double sd = prior_sd.size() == dim ? prior_sd(i) : 1.0;
        starts[c](i) = sd * normal(init_rng);
      }
    } else {
      starts[c] = initial;
    }
  }

  auto run = [&](std::size_t c) {
    chains[c] = run_chain(log_density, starts[c], config, derive_seed(config.seed, c));
  };
  if (config.parallel_chains && config.n_chains > 1) {
    std::vector<std::jthread> workers;
    for (std::size_t c = 0; c < config.n_chains; ++c) workers.emplace_back(run, c);
  } else {
    for (std::size_t c = 0; c < config.n_chains; ++c) run(c);
  }

  PosteriorDraws out;
  const auto per_chain = static_cast<Eigen::Index>(config.n_samples);
  out.draws.resize(per_chain * static_cast<Eigen::Index>(config.n_chains), dim);
  double sum_accept = 0.0;
  for (std::size_t c = 0; c < config.n_chains; ++c) {
    out.draws.middleRows(static_cast<Eigen::Index>(c) * per_chain, per_chain) = chains[c].draws;
    out.chain_ids.insert(out.chain_ids.end(), config.n_samples, static_cast<int>(c));
    out.divergence_count += chains[c].divergences;
    sum_accept += chains[c].sum_accept;
    out.step_sizes.push_back(chains[c].step_size);
    out.mean_tree_depth.push_back(chains[c].sum_depth / static_cast<double>(config.n_samples));
    for (auto& w : chains[c].warnings) {
      out.warnings.push_back("chain " + std::to_string(c) + ": " + w);
    }
  }
  const double total = static_cast<double>(out.size());
  out.mean_accept = sum_accept / total;
  if (static_cast<double>(out.divergence_count) > 0.1 * total) {
    out.unreliable = true;
    out.warnings.push_back(std::to_string(out.divergence_count) +
                           " divergent transitions (more than 10%); draws are unreliable");
  }
  if (config.n_warmup < 500) {
    out.warnings.push_back("n_warmup = " + std::to_string(config.n_warmup) +
                           " is short for step-size adaptation (< 500)");
  }
  return out;
}

PosteriorDraws sample_posterior(const Dataset& data, const Priors& priors,
                                const SamplerConfig& config) {
  std::vector<std::string> data_warnings = data.validate();
  priors.validate();
  const Eigen::Index dim = static_cast<Eigen::Index>(data.dim()) + 1;
  Eigen::VectorXd prior_sd(dim);
  prior_sd(0) = std::sqrt(priors.lambda_alpha);
  prior_sd.tail(dim - 1).setConstant(std::sqrt(priors.lambda_beta));
  PosteriorDraws draws =
      sample(make_log_posterior_fn(data, priors), Eigen::VectorXd::Zero(dim), config, prior_sd);
  draws.warnings.insert(draws.warnings.begin(), data_warnings.begin(), data_warnings.end());
  return draws;
}

}  // namespace boatmatch
