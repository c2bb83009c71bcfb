#include "boatmatch/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <iterator>
#include <limits>
#include <sstream>
#include <tuple>

#include "boatmatch/csv.hpp"
#include "boatmatch/error.hpp"

namespace boatmatch {

namespace {

constexpr double kMinOdometerKm = 100.0;
constexpr double kMaxAvgSpeedKmh = 200.0;
constexpr double kMinDistanceKm = 0.5;
constexpr double kMinDurationS = 60.0;
constexpr double kHighSocPercent = 80.0;
constexpr double kLowSocPercent = 21.0;

bool parse_digits(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

std::optional<bool> parse_bool(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "1" || lower == "true" || lower == "yes") return true;
  if (lower == "0" || lower == "false" || lower == "no") return false;
  return std::nullopt;
}

std::string format_number(double v) { return csv::format_double(v); }

// First violated record invariant, or empty.
std::string check_record(const DriveCycleRecord& r) {
  auto non_negative = [](double v) { return v >= 0.0; };
  if (!non_negative(r.distance)) return "distance < 0";
  if (!non_negative(r.duration)) return "duration < 0";
  if (!non_negative(r.fuel)) return "fuel < 0";
  if (!non_negative(r.odometer)) return "odometer < 0";
  if (r.soc_start < 0.0 || r.soc_start > 100.0) return "soc_start outside [0,100]";
  if (r.soc_end < 0.0 || r.soc_end > 100.0) return "soc_end outside [0,100]";
  if (!non_negative(r.avg_speed)) return "avg_speed < 0";
  if (!non_negative(r.max_speed)) return "max_speed < 0";
  if (!non_negative(r.hybrid_distance)) return "hybrid_distance < 0";
  if (r.hybrid_distance > r.distance) return "hybrid_distance > distance";
  if (!non_negative(r.engine_starts)) return "engine_starts < 0";
  if (r.ambient_temp_min > r.ambient_temp_avg || r.ambient_temp_avg > r.ambient_temp_max) {
    return "ambient temperatures not ordered min <= avg <= max";
  }
  return {};
}

}  // namespace

int UtcTime::weekday() const {
  const std::int64_t days = seconds >= 0 ? seconds / 86400 : -((-seconds + 86399) / 86400);
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

std::optional<UtcTime> UtcTime::parse(std::string_view text) {
  if (auto epoch = csv::parse_int(text)) return UtcTime{*epoch};
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!parse_digits(text, 0, 4, year) || text.size() < 10 || text[4] != '-' ||
      !parse_digits(text, 5, 2, month) || text[7] != '-' || !parse_digits(text, 8, 2, day)) {
    return std::nullopt;
  }
  std::size_t pos = 10;
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != ' ') return std::nullopt;
    if (!parse_digits(text, pos + 1, 2, hour) || text.size() < pos + 9 || text[pos + 3] != ':' ||
        !parse_digits(text, pos + 4, 2, minute) || text[pos + 6] != ':' ||
        !parse_digits(text, pos + 7, 2, second)) {
      return std::nullopt;
    }
    pos += 9;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
    std::string_view zone = text.substr(pos);
    if (!(zone.empty() || zone == "Z" || zone == "+00:00")) return std::nullopt;
  }
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return UtcTime{days * 86400 + hour * 3600 + minute * 60 + second};
}

ParseResult parse_cycles(std::istream& in) {
  const csv::Table table = csv::read(in);
  std::array<std::size_t, kTripColumns.size()> idx{};
  for (std::size_t c = 0; c < kTripColumns.size(); ++c) {
    auto found = table.column(kTripColumns[c]);
    if (!found) throw InputError("trips CSV is missing required column '" +
                                 std::string(kTripColumns[c]) + "'");
    idx[c] = *found;
  }

  ParseResult result;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const csv::Row& row = table.rows[r];
    auto cell = [&](std::size_t c) -> std::string_view {
      return idx[c] < row.size() ? std::string_view(row[idx[c]]) : std::string_view();
    };
    DriveCycleRecord rec;
    rec.unit_id = std::string(cell(0));
    rec.cycle_id = std::string(cell(1));
    auto reject = [&](std::string reason) {
      result.rejects.push_back({rec.unit_id, rec.cycle_id,
                                "line " + std::to_string(table.line_numbers[r]) + ": " + reason});
    };
    if (row.size() < table.header.size()) {
      reject("expected " + std::to_string(table.header.size()) + " fields, found " +
             std::to_string(row.size()));
      continue;
    }
    if (rec.unit_id.empty()) {
      reject("empty unit_id");
      continue;
    }
    auto time = UtcTime::parse(cell(2));
    if (!time) {
      reject("unparseable start_time '" + std::string(cell(2)) + "'");
      continue;
    }
    rec.start_time = *time;

    double* numeric[] = {&rec.distance,        &rec.duration,         &rec.fuel,
                         &rec.odometer,        &rec.soc_start,        &rec.soc_end,
                         &rec.avg_speed,       &rec.max_speed,        &rec.hybrid_distance,
                         nullptr,              &rec.engine_starts,    &rec.ambient_temp_avg,
                         &rec.ambient_temp_min, &rec.ambient_temp_max};
    std::string error;
    for (std::size_t c = 3; c < kTripColumns.size() && error.empty(); ++c) {
      double* target = numeric[c - 3];
      if (target == nullptr) {
        auto flag = parse_bool(cell(c));
        if (!flag) {
          error = "unparseable trailer_attached '" + std::string(cell(c)) + "'";
        } else {
          rec.trailer_attached = *flag;
        }
        continue;
      }
      auto value = csv::parse_double(cell(c));
      if (!value) {
        error = "unparseable " + std::string(kTripColumns[c]) + " '" + std::string(cell(c)) + "'";
      } else {
        *target = *value;
      }
    }
    if (error.empty()) error = check_record(rec);
    if (!error.empty()) {
      reject(error);
      continue;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

FilterResult filter_cycles(const std::vector<DriveCycleRecord>& records) {
  FilterResult result;
  for (const auto& r : records) {
    std::string reason;
    auto add = [&](const char* why) {
      if (!reason.empty()) reason += "; ";
      reason += why;
    };
    if (r.odometer < kMinOdometerKm) add("odometer < 100 km");
    if (r.avg_speed > kMaxAvgSpeedKmh) add("avg_speed > 200 km/h");
    if (r.distance < kMinDistanceKm) add("distance < 0.5 km");
    if (r.duration < kMinDurationS) add("duration < 60 s");
    if (reason.empty()) {
      result.kept.push_back(r);
    } else {
      result.excluded.push_back({r.unit_id, r.cycle_id, reason});
    }
  }
  return result;
}

AggregateResult aggregate_unit(const std::vector<DriveCycleRecord>& input) {
  if (input.empty()) throw InputError("aggregate_unit needs at least one record");
  for (const auto& r : input) {
    if (r.unit_id != input.front().unit_id) {
      throw InputError("aggregate_unit mixes units '" + input.front().unit_id + "' and '" +
                       r.unit_id + "'");
    }
  }

  // Canonical order so floating-point sums do not depend on input order.
  std::vector<const DriveCycleRecord*> records;
  for (const auto& r : input) records.push_back(&r);
  auto key = [](const DriveCycleRecord* r) {
    return std::make_tuple(r->start_time.seconds, r->cycle_id, r->distance,
                           r->duration, r->fuel, r->soc_start, r->soc_end, r->max_speed,
                           r->hybrid_distance, r->engine_starts, r->ambient_temp_avg);
  };
  std::sort(records.begin(), records.end(),
            [&](const auto* a, const auto* b) { return key(a) < key(b); });

  double sum_distance = 0.0, sum_duration = 0.0, sum_fuel = 0.0, sum_hybrid = 0.0;
  double sum_starts = 0.0, sum_temp = 0.0;
  double max_distance = -std::numeric_limits<double>::infinity();
  double max_speed = -std::numeric_limits<double>::infinity();
  double temp_min = std::numeric_limits<double>::infinity();
  double temp_max = -std::numeric_limits<double>::infinity();
  std::size_t soc_high = 0, soc_low = 0, weekday = 0, weekend = 0, trailer = 0;
  for (const auto* r : records) {
    sum_distance += r->distance;
    sum_duration += r->duration;
    sum_fuel += r->fuel;
    sum_hybrid += r->hybrid_distance;
    sum_starts += r->engine_starts;
    sum_temp += r->ambient_temp_avg;
    max_distance = std::max(max_distance, r->distance);
    max_speed = std::max(max_speed, r->max_speed);
    temp_min = std::min(temp_min, r->ambient_temp_min);
    temp_max = std::max(temp_max, r->ambient_temp_max);
    if (r->soc_start > kHighSocPercent) ++soc_high;
    if (r->soc_end < kLowSocPercent) ++soc_low;
    if (r->start_time.is_weekend()) {
      ++weekend;
    } else {
      ++weekday;
    }
    if (r->trailer_attached) ++trailer;
  }

  AggregateResult result;
  if (sum_distance <= 0.0) {
    result.reason = "total distance is 0; cannot form fuel consumption";
    return result;
  }
  if (sum_duration <= 0.0) {
    result.reason = "total duration is 0; cannot form average speed";
    return result;
  }

  const double n = static_cast<double>(records.size());
  UnitFeatureRow row;
  row.unit_id = input.front().unit_id;
  row.target = sum_fuel / sum_distance;
  row.covariates = {static_cast<double>(soc_high) / n,
                    static_cast<double>(soc_low) / n,
                    static_cast<double>(weekday),
                    static_cast<double>(weekend),
                    sum_distance / n,
                    max_distance,
                    sum_distance / (sum_duration / 3600.0),
                    max_speed,
                    sum_hybrid / sum_distance,
                    static_cast<double>(trailer) / n,
                    sum_starts / n,
                    sum_temp / n,
                    temp_min,
                    temp_max};
  result.row = std::move(row);
  return result;
}

std::size_t FeatureMatrix::count_group(int g) const {
  return static_cast<std::size_t>(std::count(groups.begin(), groups.end(), g));
}

FeatureMatrix FeatureMatrix::from_rows(const std::vector<UnitFeatureRow>& rows) {
  FeatureMatrix m;
  const auto n = static_cast<Eigen::Index>(rows.size());
  m.target.resize(n);
  m.covariates.resize(n, static_cast<Eigen::Index>(kNumCovariates));
  for (auto name : kCovariateNames) m.covariate_names.emplace_back(name);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    m.unit_ids.push_back(r.unit_id);
    m.groups.push_back(static_cast<int>(r.group));
    m.target(i) = r.target;
    for (std::size_t j = 0; j < kNumCovariates; ++j) {
      m.covariates(i, static_cast<Eigen::Index>(j)) = r.covariates[j];
    }
  }
  return m;
}

namespace {

ColumnRange scale_column(Eigen::Ref<Eigen::VectorXd> column, const std::string& name,
                         std::vector<std::string>& warnings) {
  const ColumnRange range{column.minCoeff(), column.maxCoeff()};
  const double span = range.max - range.min;
  if (!(span > 0.0)) {
    column.setZero();
    warnings.push_back("column '" + name + "' is constant (" + format_number(range.min) +
                       "); scaled to 0");
  } else {
    column = (column.array() - range.min) / span;
    // Guard the endpoints against rounding.
    column = column.cwiseMax(0.0).cwiseMin(1.0);
  }
  return range;
}

}  // namespace

ScaleResult minmax_scale(const FeatureMatrix& matrix) {
  if (matrix.scaled) throw InputError("feature matrix is already scaled");
  if (matrix.rows() < 2) throw InputError("min-max scaling needs at least 2 units");
  ScaleResult result{matrix, {}};
  FeatureMatrix& m = result.matrix;
  m.scaling_params.clear();
  for (Eigen::Index j = 0; j < m.covariates.cols(); ++j) {
    const std::string& name = m.covariate_names[static_cast<std::size_t>(j)];
    m.scaling_params[name] = scale_column(m.covariates.col(j), name, result.warnings);
  }
  m.scaling_params["target"] = scale_column(m.target, "target", result.warnings);
  m.scaled = true;
  return result;
}

FeatureMatrix minmax_unscale(const FeatureMatrix& matrix) {
  if (!matrix.scaled) throw InputError("feature matrix is not scaled");
  FeatureMatrix m = matrix;
  auto unscale = [&](Eigen::Ref<Eigen::VectorXd> column, const std::string& name) {
    auto it = m.scaling_params.find(name);
    if (it == m.scaling_params.end()) throw InputError("no scaling parameters for '" + name + "'");
    const ColumnRange& r = it->second;
    if (r.max > r.min) {
      column = column.array() * (r.max - r.min) + r.min;
    } else {
      column.setConstant(r.min);
    }
  };
  for (Eigen::Index j = 0; j < m.covariates.cols(); ++j) {
    unscale(m.covariates.col(j), m.covariate_names[static_cast<std::size_t>(j)]);
  }
  unscale(m.target, "target");
  m.scaled = false;
  return m;
}

Assignment parse_assignment(std::istream& in) {
  const csv::Table table = csv::read(in);
  auto unit = table.column("unit_id");
  auto group = table.column("group");
  if (!unit || !group) throw InputError("assignment CSV needs columns unit_id,group");
  Assignment a;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "assignment line " + std::to_string(table.line_numbers[r]);
    if (row.size() <= std::max(*unit, *group)) throw InputError(where + ": too few fields");
    auto g = csv::parse_int(row[*group]);
    if (!g || (*g != 0 && *g != 1)) {
      throw InputError(where + ": group must be 0 or 1, got '" + row[*group] + "'");
    }
    const Group value = *g == 1 ? Group::kTreatment : Group::kControl;
    auto [it, inserted] = a.groups.emplace(row[*unit], value);
    if (!inserted && it->second != value) {
      throw InputError(where + ": conflicting group for unit '" + row[*unit] + "'");
    }
  }
  return a;
}

IngestResult ingest(std::istream& trips, const Assignment& assignment) {
  const std::string text{std::istreambuf_iterator<char>(trips), std::istreambuf_iterator<char>()};
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw InputError("no cycles after filtering");
  }
  std::istringstream in(text);
  ParseResult parsed = parse_cycles(in);
  FilterResult filtered = filter_cycles(parsed.records);

  IngestResult result;
  result.rejects = std::move(parsed.rejects);
  result.rejects.insert(result.rejects.end(), filtered.excluded.begin(), filtered.excluded.end());
  if (filtered.kept.empty()) throw InputError("no cycles after filtering");

  std::map<std::string, std::vector<DriveCycleRecord>> by_unit;
  for (auto& r : filtered.kept) by_unit[r.unit_id].push_back(std::move(r));

  std::vector<UnitFeatureRow> rows;
  for (auto& [unit_id, records] : by_unit) {
    auto it = assignment.groups.find(unit_id);
    if (it == assignment.groups.end()) {
      result.warnings.push_back("unit '" + unit_id + "' has no group assignment; dropped");
      continue;
    }
    AggregateResult agg = aggregate_unit(records);
    if (!agg.row) {
      result.rejects.push_back({unit_id, "", agg.reason});
      continue;
    }
    agg.row->group = it->second;
    rows.push_back(std::move(*agg.row));
  }
  if (rows.empty()) throw InputError("no units left after aggregation and assignment join");

  ScaleResult scaled = minmax_scale(FeatureMatrix::from_rows(rows));
  result.features = std::move(scaled.matrix);
  result.warnings.insert(result.warnings.end(), scaled.warnings.begin(), scaled.warnings.end());
  return result;
}

}  // namespace boatmatch
