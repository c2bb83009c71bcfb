#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "boatmatch/analysis.hpp"
#include "boatmatch/diagnostics.hpp"
#include "boatmatch/ingest.hpp"
#include "boatmatch/matching.hpp"
#include "boatmatch/sampler.hpp"
#include "boatmatch/scoring.hpp"
#include "boatmatch/synth.hpp"
#include "boatmatch/vi.hpp"

// File formats shared by the CLI stages. Every JSON document carries
// "schema_version".
namespace boatmatch::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const json& doc);
json read_json(const std::string& path);

// unit_id,group,target,<covariates...>
void write_features(const std::string& path, const FeatureMatrix& features);
// `scaled` is inferred: true iff every covariate and target value is in [0,1].
FeatureMatrix read_features(const std::string& path);

void write_rejects(const std::string& path, const std::vector<Reject>& rejects);
json scaling_to_json(const FeatureMatrix& features);

// chain,draw_index,alpha,beta_1..beta_I
void write_draws(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws read_draws(const std::string& path);
json draw_stats_to_json(const PosteriorDraws& draws);

json diagnostics_to_json(const DiagnosticsReport& report);

json guide_to_json(const Guide& guide);
Guide guide_from_json(const json& doc);
void write_loss_trace(const std::string& path, const std::vector<double>& trace);

// unit_id,group,point_score[,mean_draw_score]
void write_scores(const std::string& path, const ScoreTable& scores);
// unit_id,group,draw_1..draw_K
void write_draw_scores(const std::string& path, const ScoreTable& scores);

// treated_id,control_id,delta_p
void write_pairs(const std::string& path, const MatchedPairs& pairs);
// Resolves ids against `features`; unknown ids throw InputError.
MatchedPairs read_pairs(const std::string& path, const FeatureMatrix& features);
void write_unmatched(const std::string& path, const MatchedPairs& pairs);
json match_summary_to_json(const MatchSummary& summary);

json balance_to_json(const BalanceReport& report);
json effect_to_json(const EffectReport& report);
// One row per covariate: mean/sd by group, before and after matching.
void write_balance_table(const std::string& path, const BalanceReport& report);

json ground_truth_to_json(const GroundTruth& truth);

}  // namespace boatmatch::io
