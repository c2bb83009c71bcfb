#include "boatmatch/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "boatmatch/analysis.hpp"
#include "boatmatch/diagnostics.hpp"
#include "boatmatch/error.hpp"
#include "boatmatch/ingest.hpp"
#include "boatmatch/io.hpp"
#include "boatmatch/scoring.hpp"

namespace boatmatch::cli {

using nlohmann::json;

namespace {

std::string method_name(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::kNuts: return "nuts";
    case InferenceMethod::kVi: return "vi";
    case InferenceMethod::kBoth: return "both";
  }
  return "nuts";
}

InferenceMethod parse_method(const std::string& s) {
  if (s == "nuts") return InferenceMethod::kNuts;
  if (s == "vi") return InferenceMethod::kVi;
  if (s == "both") return InferenceMethod::kBoth;
  throw InputError("unknown inference method '" + s + "' (expected nuts, vi or both)");
}

std::string match_name(MatchMethod m) { return m == MatchMethod::kCaliper ? "caliper" : "nn1"; }

std::vector<MatchMethod> parse_match(const std::string& s) {
  if (s == "caliper") return {MatchMethod::kCaliper};
  if (s == "nn1") return {MatchMethod::kNearestNeighbor};
  if (s == "both") return {MatchMethod::kCaliper, MatchMethod::kNearestNeighbor};
  throw InputError("unknown match method '" + s + "' (expected caliper, nn1 or both)");
}

Eigen::VectorXd coefficient_vector(const json& v, std::size_t dim) {
  if (v.is_number()) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), v.get<double>());
  const auto values = v.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw InputError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw InputError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void take(const json& obj, const char* key, T& target) {
  if (obj.contains(key)) target = obj.at(key).get<T>();
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string suffix(const RunConfig& c, MatchMethod m) {
  return c.match_methods.size() > 1 ? "_" + match_name(m) : std::string();
}

void log_warnings(std::ostream& log, const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) log << "warning: " << w << "\n";
}

FeatureMatrix load_scaled_features(const RunConfig& c, std::ostream& log) {
  FeatureMatrix f = io::read_features(c.features_file());
  if (!f.scaled) {
    log << "features are not in [0,1]; applying min-max scaling\n";
    ScaleResult s = minmax_scale(f);
    log_warnings(log, s.warnings);
    f = std::move(s.matrix);
  }
  return f;
}

SamplerConfig sampler_for(const RunConfig& c) {
  SamplerConfig s = c.sampler;
  s.seed = derive_seed(c.seed, "nuts");
  return s;
}

VIConfig vi_for(const RunConfig& c) {
  VIConfig v = c.vi;
  v.seed = derive_seed(c.seed, "vi");
  return v;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig c;
  try {
    check_keys(doc,
               {"seed", "out_dir", "trips", "assignment", "features", "draws", "pairs", "priors", "sampler",
                "vi", "method", "match", "uncertainty_draws", "match_on_mean_draw_score", "rhat_threshold",
                "synth"},
               "config");
    take(doc, "seed", c.seed);
    take(doc, "out_dir", c.out_dir);
    take(doc, "trips", c.trips_path);
    take(doc, "assignment", c.assignment_path);
    take(doc, "features", c.features_path);
    take(doc, "draws", c.draws_path);
    take(doc, "pairs", c.pairs_path);
    take(doc, "uncertainty_draws", c.uncertainty_draws);
    take(doc, "match_on_mean_draw_score", c.match_on_mean_draw_score);
    take(doc, "rhat_threshold", c.rhat_threshold);
    if (doc.contains("method")) c.method = parse_method(doc.at("method").get<std::string>());
    if (doc.contains("priors")) {
      const json& p = doc.at("priors");
      check_keys(p, {"lambda_alpha", "lambda_beta"}, "priors");
      take(p, "lambda_alpha", c.priors.lambda_alpha);
      take(p, "lambda_beta", c.priors.lambda_beta);
    }
    if (doc.contains("sampler")) {
      const json& s = doc.at("sampler");
      check_keys(s,
                 {"n_samples", "n_warmup", "n_chains", "target_accept", "max_tree_depth", "init", "sampling",
                  "adapt_diag_mass", "parallel_chains"},
                 "sampler");
      take(s, "n_samples", c.sampler.n_samples);
      take(s, "n_warmup", c.sampler.n_warmup);
      take(s, "n_chains", c.sampler.n_chains);
      take(s, "target_accept", c.sampler.target_accept);
      take(s, "max_tree_depth", c.sampler.max_tree_depth);
      take(s, "adapt_diag_mass", c.sampler.adapt_diag_mass);
      take(s, "parallel_chains", c.sampler.parallel_chains);
      if (s.contains("init")) {
        const auto v = s.at("init").get<std::string>();
        if (v == "zeros") c.sampler.init = InitMode::kZeros;
        else if (v == "prior") c.sampler.init = InitMode::kPriorDraw;
        else throw InputError("config: sampler.init must be 'zeros' or 'prior'");
      }
      if (s.contains("sampling")) {
        const auto v = s.at("sampling").get<std::string>();
        if (v == "multinomial") c.sampler.sampling = TrajectorySampling::kMultinomial;
        else if (v == "slice") c.sampler.sampling = TrajectorySampling::kSlice;
        else throw InputError("config: sampler.sampling must be 'multinomial' or 'slice'");
      }
    }
    if (doc.contains("vi")) {
      const json& v = doc.at("vi");
      check_keys(v, {"n_steps", "n_mc", "learning_rate", "mean_field", "init_scale"}, "vi");
      take(v, "n_steps", c.vi.n_steps);
      take(v, "n_mc", c.vi.n_mc);
      take(v, "learning_rate", c.vi.learning_rate);
      take(v, "mean_field", c.vi.mean_field);
      take(v, "init_scale", c.vi.init_scale);
    }
    if (doc.contains("match")) {
      const json& m = doc.at("match");
      check_keys(m, {"method", "caliper_width", "order"}, "match");
      if (m.contains("method")) c.match_methods = parse_match(m.at("method").get<std::string>());
      take(m, "caliper_width", c.match.caliper_width);
      if (m.contains("order")) {
        const auto v = m.at("order").get<std::string>();
        if (v == "descending_score") c.match.order = MatchOrder::kDescendingScore;
        else if (v == "input") c.match.order = MatchOrder::kInputOrder;
        else throw InputError("config: match.order must be 'descending_score' or 'input'");
      }
    }
    if (doc.contains("synth")) {
      const json& s = doc.at("synth");
      check_keys(s,
                 {"n_control", "n_treated", "n_covariates", "true_alpha", "true_beta", "outcome_beta", "tau",
                  "outcome_intercept", "noise_sd", "covariate_correlation", "max_rejection_rounds"},
                 "synth");
      take(s, "n_control", c.synth.n_control);
      take(s, "n_treated", c.synth.n_treated);
      take(s, "n_covariates", c.synth.n_covariates);
      if (s.contains("true_alpha") && !s.at("true_alpha").is_null()) {
        c.synth.true_alpha = s.at("true_alpha").get<double>();
      }
      if (s.contains("true_beta")) c.synth.true_beta = coefficient_vector(s.at("true_beta"), c.synth.n_covariates);
      if (s.contains("outcome_beta")) {
        c.synth.outcome_beta = coefficient_vector(s.at("outcome_beta"), c.synth.n_covariates);
      }
      take(s, "tau", c.synth.tau);
      take(s, "outcome_intercept", c.synth.outcome_intercept);
      take(s, "noise_sd", c.synth.noise_sd);
      take(s, "covariate_correlation", c.synth.covariate_correlation);
      take(s, "max_rejection_rounds", c.synth.max_rejection_rounds);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  SynthConfig s = synth;
  s.with_defaults();
  std::vector<std::string> methods;
  for (auto m : match_methods) methods.push_back(match_name(m));
  return {
      {"seed", seed},
      {"out_dir", out_dir},
      {"trips", trips_path},
      {"assignment", assignment_path},
      {"features", features_file()},
      {"draws", draws_file()},
      {"pairs", pairs_file()},
      {"method", method_name(method)},
      {"priors", {{"lambda_alpha", priors.lambda_alpha}, {"lambda_beta", priors.lambda_beta}}},
      {"sampler",
       {{"n_samples", sampler.n_samples},
        {"n_warmup", sampler.n_warmup},
        {"n_chains", sampler.n_chains},
        {"target_accept", sampler.target_accept},
        {"max_tree_depth", sampler.max_tree_depth},
        {"init", sampler.init == InitMode::kZeros ? "zeros" : "prior"},
        {"sampling", sampler.sampling == TrajectorySampling::kMultinomial ? "multinomial" : "slice"},
        {"adapt_diag_mass", sampler.adapt_diag_mass},
        {"parallel_chains", sampler.parallel_chains}}},
      {"vi",
       {{"n_steps", vi.n_steps},
        {"n_mc", vi.n_mc},
        {"learning_rate", vi.learning_rate},
        {"mean_field", vi.mean_field},
        {"init_scale", vi.init_scale}}},
      {"match",
       {{"method", methods.size() > 1 ? "both" : methods.front()},
        {"caliper_width", match.caliper_width},
        {"order", match.order == MatchOrder::kDescendingScore ? "descending_score" : "input"}}},
      {"uncertainty_draws", uncertainty_draws},
      {"match_on_mean_draw_score", match_on_mean_draw_score},
      {"rhat_threshold", rhat_threshold},
      {"synth",
       {{"n_control", s.n_control},
        {"n_treated", s.n_treated},
        {"n_covariates", s.n_covariates},
        {"true_alpha", s.true_alpha ? json(*s.true_alpha) : json(nullptr)},
        {"true_beta", to_std(s.true_beta)},
        {"outcome_beta", to_std(s.outcome_beta)},
        {"tau", s.tau},
        {"outcome_intercept", s.outcome_intercept},
        {"noise_sd", s.noise_sd},
        {"covariate_correlation", s.covariate_correlation},
        {"max_rejection_rounds", s.max_rejection_rounds}}},
  };
}

std::string RunConfig::features_file() const {
  return features_path.empty() ? join(out_dir, "features.csv") : features_path;
}
std::string RunConfig::draws_file() const {
  return draws_path.empty() ? join(out_dir, "draws.csv") : draws_path;
}
std::string RunConfig::pairs_file() const {
  return pairs_path.empty() ? join(out_dir, "pairs.csv") : pairs_path;
}

int cmd_ingest(const RunConfig& c, std::ostream& log) {
  if (c.trips_path.empty()) throw InputError("ingest needs --trips");
  if (c.assignment_path.empty()) throw InputError("ingest needs --assignment");
  std::ifstream trips(c.trips_path, std::ios::binary);
  if (!trips) throw InputError("cannot read '" + c.trips_path + "'");
  std::ifstream assign(c.assignment_path, std::ios::binary);
  if (!assign) throw InputError("cannot read '" + c.assignment_path + "'");
  const Assignment assignment = parse_assignment(assign);
  const IngestResult r = ingest(trips, assignment);
  log_warnings(log, r.warnings);
  io::write_features(c.features_file(), r.features);
  io::write_rejects(join(c.out_dir, "rejects.csv"), r.rejects);
  io::write_json(join(c.out_dir, "scaling.json"), io::scaling_to_json(r.features));
  log << "ingest: " << r.features.rows() << " units (" << r.features.count_group(0) << " control, "
      << r.features.count_group(1) << " treated), " << r.rejects.size() << " rejected records\n";
  return kSuccess;
}

int cmd_simulate(const RunConfig& c, std::ostream& log) {
  SynthConfig s = c.synth;
  s.seed = derive_seed(c.seed, "simulate");
  const Study study = generate_study(s);
  io::write_features(c.features_file(), study.features);
  io::write_json(join(c.out_dir, "scaling.json"), io::scaling_to_json(study.features));
  io::write_json(join(c.out_dir, "ground_truth.json"), io::ground_truth_to_json(study.truth));
  log << "simulate: " << study.features.count_group(0) << " control, " << study.features.count_group(1)
      << " treated, " << study.features.cols() << " covariates, tau_scaled " << study.truth.tau_scaled << "\n";
  return kSuccess;
}

int cmd_fit(const RunConfig& c, std::ostream& log) {
  c.priors.validate();
  const FeatureMatrix f = load_scaled_features(c, log);
  const Dataset data = Dataset::from_features(f);
  log_warnings(log, data.validate());

  std::optional<PosteriorDraws> nuts;
  std::optional<VIResult> vi;
  if (c.method != InferenceMethod::kVi) {
    nuts = sample_posterior(data, c.priors, sampler_for(c));
    log_warnings(log, nuts->warnings);
    io::write_json(join(c.out_dir, "draw_stats.json"), io::draw_stats_to_json(*nuts));
  }
  if (c.method != InferenceMethod::kNuts) {
    const VIConfig vc = vi_for(c);
    vi = fit_vi(data, c.priors, vc);
    if (vi->clamped_draws > 0) {
      log << "warning: " << vi->clamped_draws << " guide draws had a non-finite log density\n";
    }
    io::write_json(join(c.out_dir, "guide.json"), io::guide_to_json(vi->guide));
    io::write_loss_trace(join(c.out_dir, "loss.csv"), vi->loss_trace);
  }

  PosteriorDraws draws;
  if (nuts) {
    draws = *nuts;
  } else {
    Rng rng(derive_seed(vi_for(c).seed, "draws"));
    draws.draws = vi->guide.sample(c.sampler.n_samples, rng);
    draws.chain_ids.assign(c.sampler.n_samples, 0);
  }
  io::write_draws(c.draws_file(), draws);

  const DiagnosticsReport report = diagnose(draws, c.rhat_threshold);
  json diag = io::diagnostics_to_json(report);
  diag["method"] = method_name(c.method);
  if (nuts && vi) {
    const ParamVector nuts_mean = point_estimate(*nuts);
    const Eigen::VectorXd gap = (nuts_mean - vi->guide.mean).cwiseAbs();
    diag["vi_nuts_mean_gap"] = to_std(gap);
    diag["vi_nuts_max_mean_gap"] = gap.maxCoeff();
    log << "fit: max |E_vi - E_nuts| = " << gap.maxCoeff() << "\n";
  }
  io::write_json(join(c.out_dir, "diagnostics.json"), diag);

  if (!report.converged) {
    log << "fit: not converged (R-hat threshold " << c.rhat_threshold << ")\n";
    return kNotConverged;
  }
  log << "fit: converged, " << draws.size() << " draws\n";
  return kSuccess;
}

int cmd_match(const RunConfig& c, std::ostream& log) {
  c.match.validate();
  const FeatureMatrix f = load_scaled_features(c, log);
  const PosteriorDraws draws = io::read_draws(c.draws_file());
  ScoreTable scores = score_all(point_estimate(draws), f);
  if (c.uncertainty_draws > 0) {
    const std::size_t k = std::min(c.uncertainty_draws, draws.size());
    scores.draw_scores = score_uncertainty(draws.draws, f, k, derive_seed(c.seed, "scores"));
    io::write_draw_scores(join(c.out_dir, "draw_scores.csv"), scores);
  }
  io::write_scores(join(c.out_dir, "scores.csv"), scores);

  ScoreTable for_matching = scores;
  if (c.match_on_mean_draw_score) {
    if (!scores.draw_scores) throw InputError("match_on_mean_draw_score needs uncertainty_draws > 0");
    for_matching.point_score = scores.mean_draw_score();
  }
  for (MatchMethod m : c.match_methods) {
    MatchConfig mc = c.match;
    mc.method = m;
    const MatchedPairs pairs = match(for_matching, mc);
    const std::string sfx = suffix(c, m);
    io::write_pairs(c.match_methods.size() > 1 ? join(c.out_dir, "pairs" + sfx + ".csv") : c.pairs_file(),
                    pairs);
    io::write_unmatched(join(c.out_dir, "unmatched" + sfx + ".csv"), pairs);
    const MatchSummary summary = match_summary(pairs, for_matching);
    json doc = io::match_summary_to_json(summary);
    doc["method"] = match_name(m);
    if (m == MatchMethod::kCaliper) doc["caliper_width"] = mc.caliper_width;
    io::write_json(join(c.out_dir, "match_summary" + sfx + ".json"), doc);
    log << "match (" << match_name(m) << "): " << summary.n_pairs << "/" << summary.n_treated
        << " treated matched\n";
  }
  return kSuccess;
}

int cmd_assess(const RunConfig& c, std::ostream& log) {
  const FeatureMatrix f = load_scaled_features(c, log);
  for (MatchMethod m : c.match_methods) {
    const std::string sfx = suffix(c, m);
    const std::string path =
        c.match_methods.size() > 1 ? join(c.out_dir, "pairs" + sfx + ".csv") : c.pairs_file();
    const MatchedPairs pairs = io::read_pairs(path, f);
    const BalanceReport balance = assess_balance(f, pairs);
    const EffectReport effect = estimate_effect(f, pairs);
    io::write_json(join(c.out_dir, "balance" + sfx + ".json"), io::balance_to_json(balance));
    io::write_json(join(c.out_dir, "effect" + sfx + ".json"), io::effect_to_json(effect));
    io::write_balance_table(join(c.out_dir, "table" + sfx + ".csv"), balance);
    log << "assess (" << match_name(m) << "): avg ASMD " << balance.avg_asmd_before << " -> "
        << balance.avg_asmd_after << ", ATE naive " << effect.ate_naive;
    if (effect.ate_matched) log << ", matched " << *effect.ate_matched;
    log << "\n";
  }
  return kSuccess;
}

int cmd_pipeline(const RunConfig& c, std::ostream& log) {
  int code = c.trips_path.empty() ? cmd_simulate(c, log) : cmd_ingest(c, log);
  if (code != kSuccess) return code;
  code = cmd_fit(c, log);
  if (code != kSuccess) return code;
  code = cmd_match(c, log);
  if (code != kSuccess) return code;
  return cmd_assess(c, log);
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian propensity score matching for fleet software A/B studies"};
  app.require_subcommand(1, 1);

  std::string config_path, method, match_method, out_dir, trips, assignment, features, draws, pairs;
  std::uint64_t seed = 0;
  double caliper = 0.0;
  std::size_t samples = 0, warmup = 0, chains = 0, vi_steps = 0;

  auto* o_config = app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* o_seed = app.add_option("--seed", seed, "top-level seed");
  auto* o_method = app.add_option("--method", method, "inference method")->check(CLI::IsMember({"nuts", "vi", "both"}));
  auto* o_match = app.add_option("--match", match_method, "matching method")
                      ->check(CLI::IsMember({"caliper", "nn1", "both"}));
  auto* o_caliper = app.add_option("--caliper", caliper, "caliper width on the propensity scale");
  auto* o_out = app.add_option("--out", out_dir, "output directory");
  auto* o_trips = app.add_option("--trips", trips, "drive-cycle CSV");
  auto* o_assign = app.add_option("--assignment", assignment, "unit_id,group CSV");
  auto* o_features = app.add_option("--features", features, "features CSV (default <out>/features.csv)");
  auto* o_draws = app.add_option("--draws", draws, "draws CSV (default <out>/draws.csv)");
  auto* o_pairs = app.add_option("--pairs", pairs, "pairs CSV (default <out>/pairs.csv)");
  auto* o_samples = app.add_option("--samples", samples, "posterior draws per chain");
  auto* o_warmup = app.add_option("--warmup", warmup, "warmup iterations per chain");
  auto* o_chains = app.add_option("--chains", chains, "number of chains");
  auto* o_vi_steps = app.add_option("--vi-steps", vi_steps, "optimisation steps for VI");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"ingest", "aggregate drive cycles into scaled per-unit features"},
      {"fit", "sample the propensity model posterior"},
      {"match", "score units and build matched pairs"},
      {"assess", "covariate balance and treatment effect"},
      {"simulate", "generate a confounded synthetic study"},
      {"pipeline", "ingest or simulate, then fit, match and assess"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInputError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RunConfig c;
    if (o_config->count()) c = RunConfig::from_json(io::read_json(config_path));
    if (o_seed->count()) c.seed = seed;
    if (o_method->count()) c.method = parse_method(method);
    if (o_match->count()) c.match_methods = parse_match(match_method);
    if (o_caliper->count()) c.match.caliper_width = caliper;
    if (o_out->count()) c.out_dir = out_dir;
    if (o_trips->count()) c.trips_path = trips;
    if (o_assign->count()) c.assignment_path = assignment;
    if (o_features->count()) c.features_path = features;
    if (o_draws->count()) c.draws_path = draws;
    if (o_pairs->count()) c.pairs_path = pairs;
    if (o_samples->count()) c.sampler.n_samples = samples;
    if (o_warmup->count()) c.sampler.n_warmup = warmup;
    if (o_chains->count()) c.sampler.n_chains = chains;
    if (o_vi_steps->count()) c.vi.n_steps = vi_steps;

    std::filesystem::create_directories(c.out_dir);
    io::write_json(join(c.out_dir, "run_config.json"), c.to_json());

    if (command == "ingest") return cmd_ingest(c, err);
    if (command == "fit") return cmd_fit(c, err);
    if (command == "match") return cmd_match(c, err);
    if (command == "assess") return cmd_assess(c, err);
    if (command == "simulate") return cmd_simulate(c, err);
    return cmd_pipeline(c, err);
  } catch (const MatchingInfeasible& e) {
    err << "error: " << e.what() << "\n";
    return kMatchingInfeasible;
  } catch (const VIDivergence& e) {
    err << "error: " << e.what() << "\n";
    return kNotConverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace boatmatch::cli
