#include "boatmatch/io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "boatmatch/csv.hpp"
#include "boatmatch/error.hpp"

namespace boatmatch::io {

namespace {

std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  return out;
}

std::string fmt(double v) { return csv::format_double(v); }

double field_double(const csv::Table& t, std::size_t row, std::size_t col, const std::string& path) {
  const auto& r = t.rows[row];
  auto v = col < r.size() ? csv::parse_double(r[col]) : std::nullopt;
  if (!v) {
    throw InputError(path + " line " + std::to_string(t.line_numbers[row]) + ": bad number in column '" +
                     t.header[col] + "'");
  }
  return *v;
}

std::size_t require_column(const csv::Table& t, const std::string& name, const std::string& path) {
  auto c = t.column(name);
  if (!c) throw InputError(path + ": missing column '" + name + "'");
  return *c;
}

json with_version(json doc) {
  doc["schema_version"] = kSchemaVersion;
  return doc;
}

json stat_json(const CovariateStat& s) {
  return s.degenerate ? json{{"value", nullptr}, {"degenerate", true}}
                      : json{{"value", s.value}, {"degenerate", false}};
}

json moments_json(const GroupMoments& g) {
  return {{"mean", g.mean},
          {"sd", g.sd},
          {"q05", g.distribution.q05},
          {"q25", g.distribution.q25},
          {"q50", g.distribution.q50},
          {"q75", g.distribution.q75},
          {"q95", g.distribution.q95}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

void write_json(const std::string& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_features(const std::string& path, const FeatureMatrix& f) {
  auto out = open_out(path);
  csv::Row header{"unit_id", "group", "target"};
  header.insert(header.end(), f.covariate_names.begin(), f.covariate_names.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv::Row row{f.unit_ids[i], std::to_string(f.groups[i]), fmt(f.target(r))};
    for (Eigen::Index j = 0; j < f.covariates.cols(); ++j) row.push_back(fmt(f.covariates(r, j)));
    csv::write_row(out, row);
  }
}

FeatureMatrix read_features(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t c_id = require_column(t, "unit_id", path);
  const std::size_t c_group = require_column(t, "group", path);
  const std::size_t c_target = require_column(t, "target", path);
  std::vector<std::size_t> cov_cols;
  FeatureMatrix f;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == c_id || c == c_group || c == c_target) continue;
    cov_cols.push_back(c);
    f.covariate_names.push_back(t.header[c]);
  }
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  f.target.resize(n);
  f.covariates.resize(n, static_cast<Eigen::Index>(cov_cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& row = t.rows[i];
    if (row.size() != t.header.size()) {
      throw InputError(path + " line " + std::to_string(t.line_numbers[i]) + ": wrong field count");
    }
    f.unit_ids.push_back(row[c_id]);
    const auto g = csv::parse_int(row[c_group]);
    if (!g || (*g != 0 && *g != 1)) {
      throw InputError(path + " line " + std::to_string(t.line_numbers[i]) + ": group must be 0 or 1");
    }
    f.groups.push_back(static_cast<int>(*g));
    f.target(r) = field_double(t, i, c_target, path);
    for (std::size_t j = 0; j < cov_cols.size(); ++j) {
      f.covariates(r, static_cast<Eigen::Index>(j)) = field_double(t, i, cov_cols[j], path);
    }
  }
  auto in_unit = [](const auto& m) { return m.size() == 0 || (m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0); };
  f.scaled = in_unit(f.target) && in_unit(f.covariates);
  return f;
}

void write_rejects(const std::string& path, const std::vector<Reject>& rejects) {
  auto out = open_out(path);
  csv::write_row(out, {"unit_id", "cycle_id", "reason"});
  for (const auto& r : rejects) csv::write_row(out, {r.unit_id, r.cycle_id, r.reason});
}

json scaling_to_json(const FeatureMatrix& f) {
  json doc = json::object();
  for (const auto& [name, range] : f.scaling_params) doc[name] = {{"min", range.min}, {"max", range.max}};
  return with_version(doc);
}

void write_draws(const std::string& path, const PosteriorDraws& d) {
  auto out = open_out(path);
  csv::Row header{"chain", "draw_index", "alpha"};
  for (std::size_t i = 1; i < d.dim(); ++i) header.push_back("beta_" + std::to_string(i));
  csv::write_row(out, header);
  std::map<int, std::size_t> counter;
  for (std::size_t s = 0; s < d.size(); ++s) {
    const int chain = d.chain_ids[s];
    csv::Row row{std::to_string(chain), std::to_string(counter[chain]++)};
    for (Eigen::Index j = 0; j < d.draws.cols(); ++j) {
      row.push_back(fmt(d.draws(static_cast<Eigen::Index>(s), j)));
    }
    csv::write_row(out, row);
  }
}

PosteriorDraws read_draws(const std::string& path) {
  const csv::Table t = csv::read_file(path);
  const std::size_t c_chain = require_column(t, "chain", path);
  const std::size_t c_alpha = require_column(t, "alpha", path);
  std::vector<std::size_t> cols{c_alpha};
  for (std::size_t i = 1;; ++i) {
    auto c = t.column("beta_" + std::to_string(i));
    if (!c) break;
    cols.push_back(*c);
  }
  if (t.rows.empty()) throw InputError(path + ": no draws");
  PosteriorDraws d;
  d.draws.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t s = 0; s < t.rows.size(); ++s) {
    const auto chain = csv::parse_int(t.rows[s][c_chain]);
    if (!chain || *chain < 0) {
      throw InputError(path + " line " + std::to_string(t.line_numbers[s]) + ": bad chain id");
    }
    d.chain_ids.push_back(static_cast<int>(*chain));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      d.draws(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = field_double(t, s, cols[j], path);
    }
  }
  return d;
}

json draw_stats_to_json(const PosteriorDraws& d) {
  return with_version({{"n_draws", d.size()},
                       {"n_chains", d.n_chains()},
                       {"divergences", d.divergence_count},
                       {"mean_accept", d.mean_accept},
                       {"step_size", d.step_sizes},
                       {"mean_tree_depth", d.mean_tree_depth},
                       {"unreliable", d.unreliable},
                       {"warnings", d.warnings}});
}

json diagnostics_to_json(const DiagnosticsReport& r) {
  json dims = json::array();
  for (std::size_t i = 0; i < r.rhat.size(); ++i) {
    json d{{"name", i == 0 ? std::string("alpha") : "beta_" + std::to_string(i)}};
    d["rhat"] = r.rhat[i].degenerate ? json(nullptr) : json(r.rhat[i].value);
    d["ess"] = r.ess[i].degenerate ? json(nullptr) : json(r.ess[i].value);
    d["degenerate"] = r.rhat[i].degenerate || r.ess[i].degenerate;
    if (i < r.summaries.size()) {
      const auto& s = r.summaries[i];
      d["mean"] = s.mean;
      d["sd"] = s.sd;
      d["q05"] = s.q05;
      d["q95"] = s.q95;
    }
    dims.push_back(std::move(d));
  }
  return with_version({{"rhat_threshold", r.threshold}, {"converged", r.converged}, {"dimensions", dims}});
}

json guide_to_json(const Guide& g) {
  std::vector<double> factor;
  for (Eigen::Index r = 0; r < g.scale_factor.rows(); ++r)
    for (Eigen::Index c = 0; c <= r; ++c) factor.push_back(g.scale_factor(r, c));
  std::vector<double> mean(g.mean.data(), g.mean.data() + g.mean.size());
  const Eigen::VectorXd sd = g.sd();
  return with_version({{"dim", g.dim()},
                       {"mean", mean},
                       {"scale_tril_rowmajor", factor},
                       {"sd", std::vector<double>(sd.data(), sd.data() + sd.size())}});
}

Guide guide_from_json(const json& doc) {
  try {
    const std::size_t dim = doc.at("dim").get<std::size_t>();
    const auto mean = doc.at("mean").get<std::vector<double>>();
    const auto factor = doc.at("scale_tril_rowmajor").get<std::vector<double>>();
    if (mean.size() != dim || factor.size() != dim * (dim + 1) / 2) {
      throw InputError("guide: inconsistent dimensions");
    }
    Guide g;
    const auto d = static_cast<Eigen::Index>(dim);
    g.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    g.scale_factor = Eigen::MatrixXd::Zero(d, d);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c <= r; ++c) g.scale_factor(r, c) = factor[k++];
    g.validate();
    return g;
  } catch (const json::exception& e) {
    throw InputError(std::string("guide: ") + e.what());
  }
}

void write_loss_trace(const std::string& path, const std::vector<double>& trace) {
  auto out = open_out(path);
  csv::write_row(out, {"step", "loss"});
  for (std::size_t i = 0; i < trace.size(); ++i) csv::write_row(out, {std::to_string(i), fmt(trace[i])});
}

void write_scores(const std::string& path, const ScoreTable& s) {
  auto out = open_out(path);
  csv::Row header{"unit_id", "group", "point_score"};
  Eigen::VectorXd mean_draw;
  if (s.draw_scores) {
    header.push_back("mean_draw_score");
    mean_draw = s.mean_draw_score();
  }
  csv::write_row(out, header);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv::Row row{s.unit_ids[i], std::to_string(s.groups[i]), fmt(s.point_score(r))};
    if (s.draw_scores) row.push_back(fmt(mean_draw(r)));
    csv::write_row(out, row);
  }
}

void write_draw_scores(const std::string& path, const ScoreTable& s) {
  if (!s.draw_scores) throw InputError("no draw scores to write");
  const Eigen::MatrixXd& m = *s.draw_scores;
  auto out = open_out(path);
  csv::Row header{"unit_id", "group"};
  for (Eigen::Index k = 0; k < m.rows(); ++k) header.push_back("draw_" + std::to_string(k + 1));
  csv::write_row(out, header);
  for (std::size_t i = 0; i < s.size(); ++i) {
    csv::Row row{s.unit_ids[i], std::to_string(s.groups[i])};
    for (Eigen::Index k = 0; k < m.rows(); ++k) row.push_back(fmt(m(k, static_cast<Eigen::Index>(i))));
    csv::write_row(out, row);
  }
}

void write_pairs(const std::string& path, const MatchedPairs& pairs) {
  auto out = open_out(path);
  csv::write_row(out, {"treated_id", "control_id", "delta_p"});
  for (const auto& p : pairs.pairs) csv::write_row(out, {p.treated_id, p.control_id, fmt(p.delta_p)});
}

MatchedPairs read_pairs(const std::string& path, const FeatureMatrix& features) {
  const csv::Table t = csv::read_file(path);
  const std::size_t c_t = require_column(t, "treated_id", path);
  const std::size_t c_c = require_column(t, "control_id", path);
  const std::size_t c_d = require_column(t, "delta_p", path);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < features.rows(); ++i) index[features.unit_ids[i]] = i;
  MatchedPairs out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    if (row.size() != t.header.size()) {
      throw InputError(path + " line " + std::to_string(t.line_numbers[i]) + ": wrong field count");
    }
    MatchedPair p;
    p.treated_id = row[c_t];
    p.control_id = row[c_c];
    p.delta_p = field_double(t, i, c_d, path);
    auto ti = index.find(p.treated_id);
    auto ci = index.find(p.control_id);
    if (ti == index.end() || ci == index.end()) {
      throw InputError(path + " line " + std::to_string(t.line_numbers[i]) + ": unknown unit id");
    }
    if (features.groups[ti->second] != 1 || features.groups[ci->second] != 0) {
      throw InputError(path + " line " + std::to_string(t.line_numbers[i]) + ": pair groups are wrong");
    }
    p.treated_index = ti->second;
    p.control_index = ci->second;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

void write_unmatched(const std::string& path, const MatchedPairs& pairs) {
  auto out = open_out(path);
  csv::write_row(out, {"treated_id"});
  for (const auto& id : pairs.unmatched_treated) csv::write_row(out, {id});
}

json match_summary_to_json(const MatchSummary& s) {
  return with_version({{"n_treated", s.n_treated},
                       {"n_pairs", s.n_pairs},
                       {"match_rate", s.match_rate},
                       {"mean_delta_p", optional_json(s.mean_delta_p)},
                       {"treated_score_mean", optional_json(s.treated_mean)},
                       {"treated_score_sd", optional_json(s.treated_sd)},
                       {"control_score_mean", optional_json(s.control_mean)},
                       {"control_score_sd", optional_json(s.control_sd)}});
}

json balance_to_json(const BalanceReport& r) {
  json covs = json::array();
  for (const auto& c : r.covariates) {
    covs.push_back({{"name", c.name},
                    {"asmd_before", stat_json(c.asmd_before)},
                    {"asmd_after", stat_json(c.asmd_after)},
                    {"var_control_before", c.var_control_before},
                    {"var_control_after", c.var_control_after},
                    {"variance_reduction_percent", stat_json(c.variance_reduction)},
                    {"control_before", moments_json(c.control_before)},
                    {"treated_before", moments_json(c.treated_before)},
                    {"control_after", moments_json(c.control_after)},
                    {"treated_after", moments_json(c.treated_after)},
                    {"target_correlation", c.target_correlation}});
  }
  return with_version({{"n_pairs", r.n_pairs},
                       {"avg_asmd_before", r.avg_asmd_before},
                       {"avg_asmd_after", r.avg_asmd_after},
                       {"avg_variance_reduction_percent", r.avg_variance_reduction},
                       {"covariates", covs}});
}

json effect_to_json(const EffectReport& e) {
  return with_version({{"ate_naive", e.ate_naive},
                       {"ate_matched", optional_json(e.ate_matched)},
                       {"target_mean_control_before", e.target_mean_control_before},
                       {"target_mean_treated_before", e.target_mean_treated_before},
                       {"target_mean_control_after", optional_json(e.target_mean_control_after)},
                       {"target_mean_treated_after", optional_json(e.target_mean_treated_after)},
                       {"n_pairs", e.n_pairs}});
}

void write_balance_table(const std::string& path, const BalanceReport& r) {
  auto out = open_out(path);
  csv::write_row(out, {"covariate", "control_mean_before", "control_sd_before", "treated_mean_before",
                       "treated_sd_before", "control_mean_after", "control_sd_after", "treated_mean_after",
                       "treated_sd_after", "asmd_before", "asmd_after"});
  auto stat = [](const CovariateStat& s) { return s.degenerate ? std::string() : fmt(s.value); };
  for (const auto& c : r.covariates) {
    csv::write_row(out, {c.name, fmt(c.control_before.mean), fmt(c.control_before.sd),
                         fmt(c.treated_before.mean), fmt(c.treated_before.sd), fmt(c.control_after.mean),
                         fmt(c.control_after.sd), fmt(c.treated_after.mean), fmt(c.treated_after.sd),
                         stat(c.asmd_before), stat(c.asmd_after)});
  }
}

json ground_truth_to_json(const GroundTruth& t) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return with_version({{"alpha", t.alpha},
                       {"beta", vec(t.beta)},
                       {"outcome_beta", vec(t.outcome_beta)},
                       {"tau_raw", t.tau_raw},
                       {"tau_scaled", t.tau_scaled},
                       {"target_min", t.target_range.min},
                       {"target_max", t.target_range.max},
                       {"rejection_rounds", t.rejection_rounds}});
}

}  // namespace boatmatch::io
