#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "boatmatch/model.hpp"
#include "boatmatch/random.hpp"

namespace boatmatch {

// Returns log p(q) and writes its gradient into `grad`.
using LogDensityFn = std::function<double(const Eigen::VectorXd& q, Eigen::VectorXd& grad)>;

LogDensityFn make_log_posterior_fn(const Dataset& data, const Priors& priors);

struct PhasePoint {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  Eigen::VectorXd gradient;  // of the log density at `position`
  double log_density = 0.0;
};

// One kick-drift-kick step under a diagonal inverse mass matrix. Returns false
// when the new log density or gradient is not finite.
bool leapfrog(PhasePoint& z, double step_size, const Eigen::VectorXd& inv_mass,
              const LogDensityFn& log_density);

double kinetic_energy(const Eigen::VectorXd& momentum, const Eigen::VectorXd& inv_mass);
double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_mass);

enum class TrajectorySampling { kMultinomial, kSlice };

struct NutsOptions {
  int max_tree_depth = 10;
  double max_energy_error = 1000.0;
  TrajectorySampling sampling = TrajectorySampling::kMultinomial;
};

struct ChainState {
  Eigen::VectorXd position;
  Eigen::VectorXd gradient;
  double log_density = 0.0;

  static ChainState at(const Eigen::VectorXd& position, const LogDensityFn& log_density);
};

struct TransitionStats {
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
  double energy = 0.0;
};

struct Transition {
  ChainState state;
  TransitionStats stats;
};

// One NUTS transition: fresh momentum, recursive doubling in a random
// direction until a U-turn, divergence or the depth limit, and a draw from the
// trajectory. max_tree_depth bounds the number of doublings; 0 is treated as a
// single doubling, i.e. a one-leapfrog Metropolis proposal.
Transition nuts_step(const ChainState& state, double step_size,
                     const Eigen::VectorXd& inv_mass, const LogDensityFn& log_density,
                     const NutsOptions& options, Rng& rng);

// Nesterov dual averaging of log step size toward a target acceptance rate.
// The iterate shrinks toward `center`; with every statistic equal to the
// target the step size stays at `center`.
class DualAveraging {
 public:
  DualAveraging(double center, double target_accept, double gamma = 0.05,
                double t0 = 10.0, double kappa = 0.75);

  // Feeds one acceptance statistic and returns the step size to use next.
  double update(double accept_stat);

  double step_size() const;        // current iterate
  double final_step_size() const;  // averaged iterate, used after warmup
  void restart(double center);

 private:
  double log_center_;
  double target_;
  double gamma_;
  double t0_;
  double kappa_;
  double h_bar_ = 0.0;
  double log_step_ = 0.0;
  double log_step_bar_ = 0.0;
  std::size_t count_ = 0;
};

// Doubles or halves an initial guess until one leapfrog step crosses an
// acceptance probability of 1/2.
double find_reasonable_step_size(const ChainState& state, double initial,
                                 const Eigen::VectorXd& inv_mass,
                                 const LogDensityFn& log_density, Rng& rng);

enum class InitMode { kZeros, kPriorDraw };

struct SamplerConfig {
  std::size_t n_samples = 3000;
  std::size_t n_warmup = 200;
  std::size_t n_chains = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 0;
  InitMode init = InitMode::kZeros;
  TrajectorySampling sampling = TrajectorySampling::kMultinomial;
  bool adapt_diag_mass = false;
  bool parallel_chains = true;

  void validate() const;
};

struct PosteriorDraws {
  Eigen::MatrixXd draws;        // S x D, rows grouped by chain
  std::vector<int> chain_ids;   // length S
  std::size_t divergence_count = 0;
  double mean_accept = 0.0;
  std::vector<double> step_sizes;  // per chain, frozen after warmup
  std::vector<double> mean_tree_depth;
  bool unreliable = false;         // more than 10% divergent transitions
  std::vector<std::string> warnings;

  std::size_t size() const { return static_cast<std::size_t>(draws.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(draws.cols()); }
  std::size_t n_chains() const;
  // Draws of one chain, in order.
  Eigen::MatrixXd chain(int id) const;
};

// Runs the configured chains on an arbitrary log density. `initial` gives the
// starting point of every chain (ignored for kPriorDraw, where each chain
// starts from a standard normal draw scaled by `prior_sd`).
PosteriorDraws sample(const LogDensityFn& log_density, const Eigen::VectorXd& initial,
                      const SamplerConfig& config,
                      const Eigen::VectorXd& prior_sd = Eigen::VectorXd());

PosteriorDraws sample_posterior(const Dataset& data, const Priors& priors,
                                const SamplerConfig& config);

}  // namespace boatmatch
