#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "boatmatch/matching.hpp"
#include "boatmatch/model.hpp"
#include "boatmatch/sampler.hpp"
#include "boatmatch/synth.hpp"
#include "boatmatch/vi.hpp"

namespace boatmatch::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInputError = 1,
  kNotConverged = 2,
  kMatchingInfeasible = 3,
};

enum class InferenceMethod { kNuts, kVi, kBoth };

// Everything one run needs. Stage seeds are derived from `seed`:
// simulate <- derive_seed(seed, "simulate"), nuts <- "nuts", vi <- "vi",
// uncertainty scoring <- "scores", per-chain seeds <- (nuts seed, chain index).
struct RunConfig {
  std::uint64_t seed = 20210322;
  std::string out_dir = "out";

  std::string trips_path;
  std::string assignment_path;
  std::string features_path;  // defaults to <out>/features.csv
  std::string draws_path;     // defaults to <out>/draws.csv
  std::string pairs_path;     // defaults to <out>/pairs.csv

  Priors priors;
  SamplerConfig sampler;
  VIConfig vi;
  InferenceMethod method = InferenceMethod::kNuts;
  std::vector<MatchMethod> match_methods{MatchMethod::kCaliper};
  MatchConfig match;
  std::size_t uncertainty_draws = 25;
  bool match_on_mean_draw_score = false;
  double rhat_threshold = 1.1;
  SynthConfig synth;

  // Applies the keys present in `doc` over the defaults.
  static RunConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  std::string features_file() const;
  std::string draws_file() const;
  std::string pairs_file() const;
};

int cmd_ingest(const RunConfig& config, std::ostream& log);
int cmd_fit(const RunConfig& config, std::ostream& log);
int cmd_match(const RunConfig& config, std::ostream& log);
int cmd_assess(const RunConfig& config, std::ostream& log);
int cmd_simulate(const RunConfig& config, std::ostream& log);
// ingest (when trips are given) or simulate, then fit, match, assess.
int cmd_pipeline(const RunConfig& config, std::ostream& log);

// Parses argv, dispatches a subcommand and maps failures to exit codes.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace boatmatch::cli
