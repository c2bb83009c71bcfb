#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace boatmatch {

// Seconds since the Unix epoch, UTC.
struct UtcTime {
  std::int64_t seconds = 0;

  // 0 = Monday ... 6 = Sunday.
  int weekday() const;
  bool is_weekend() const { return weekday() >= 5; }

  // Accepts "YYYY-MM-DDTHH:MM:SS[.fff][Z]" (a space may replace 'T') or a
  // plain integer epoch.
  static std::optional<UtcTime> parse(std::string_view text);
};

// One key-on/key-off drive cycle of one unit.
struct DriveCycleRecord {
  std::string unit_id;
  std::string cycle_id;
  UtcTime start_time;
  double distance = 0.0;         // km
  double duration = 0.0;         // s
  double fuel = 0.0;             // g
  double odometer = 0.0;         // km
  double soc_start = 0.0;        // %
  double soc_end = 0.0;          // %
  double avg_speed = 0.0;        // km/h
  double max_speed = 0.0;        // km/h
  double hybrid_distance = 0.0;  // km
  bool trailer_attached = false;
  double engine_starts = 0.0;
  double ambient_temp_avg = 0.0;  // deg C
  double ambient_temp_min = 0.0;
  double ambient_temp_max = 0.0;
};

struct Reject {
  std::string unit_id;
  std::string cycle_id;
  std::string reason;
};

inline constexpr std::size_t kNumCovariates = 14;

inline constexpr std::array<std::string_view, kNumCovariates> kCovariateNames = {
    "share_soc_start_high", "share_soc_end_low", "n_weekday_trips",
    "n_weekend_trips",      "avg_trip_distance", "max_trip_distance",
    "avg_trip_speed",       "max_trip_speed",    "share_distance_hybrid",
    "share_trips_trailer",  "avg_engine_starts", "temp_avg",
    "temp_min",             "temp_max"};

inline constexpr std::array<std::string_view, 17> kTripColumns = {
    "unit_id",          "cycle_id",         "start_time",      "distance",
    "duration",         "fuel",             "odometer",        "soc_start",
    "soc_end",          "avg_speed",        "max_speed",       "hybrid_distance",
    "trailer_attached", "engine_starts",    "ambient_temp_avg", "ambient_temp_min",
    "ambient_temp_max"};

struct ParseResult {
  std::vector<DriveCycleRecord> records;
  std::vector<Reject> rejects;
};

// Throws InputError when a required column is missing. Rows with unparseable
// cells or violated record invariants land in `rejects`.
ParseResult parse_cycles(std::istream& csv);

struct FilterResult {
  std::vector<DriveCycleRecord> kept;
  std::vector<Reject> excluded;
};

// Exclusion rules are strict inequalities; boundary values are kept.
FilterResult filter_cycles(const std::vector<DriveCycleRecord>& records);

enum class Group : int { kControl = 0, kTreatment = 1 };

struct UnitFeatureRow {
  std::string unit_id;
  Group group = Group::kControl;
  double target = 0.0;  // g/km
  std::array<double, kNumCovariates> covariates{};
};

// Either a row or a rejection reason.
struct AggregateResult {
  std::optional<UnitFeatureRow> row;
  std::string reason;
};

// All records must share one unit_id. Group is left as control; the caller
// joins the assignment table.
AggregateResult aggregate_unit(const std::vector<DriveCycleRecord>& records);

struct ColumnRange {
  double min = 0.0;
  double max = 0.0;
};

// Column-major numeric view over units. Column names cover covariates only;
// the target has its own scaling entry under "target".
struct FeatureMatrix {
  std::vector<std::string> unit_ids;
  std::vector<int> groups;  // 0 control, 1 treatment
  Eigen::VectorXd target;
  Eigen::MatrixXd covariates;  // N x I
  std::vector<std::string> covariate_names;
  std::map<std::string, ColumnRange> scaling_params;
  bool scaled = false;

  std::size_t rows() const { return unit_ids.size(); }
  std::size_t cols() const { return static_cast<std::size_t>(covariates.cols()); }
  std::size_t count_group(int g) const;

  static FeatureMatrix from_rows(const std::vector<UnitFeatureRow>& rows);
};

struct ScaleResult {
  FeatureMatrix matrix;
  std::vector<std::string> warnings;
};

// Pooled min-max scaling of every covariate and the target. Constant columns
// become 0.0 and produce a warning. Requires N >= 2 and an unscaled input.
ScaleResult minmax_scale(const FeatureMatrix& matrix);

// Inverse of minmax_scale for non-constant columns.
FeatureMatrix minmax_unscale(const FeatureMatrix& matrix);

struct Assignment {
  std::map<std::string, Group> groups;
};

Assignment parse_assignment(std::istream& csv);

struct IngestResult {
  FeatureMatrix features;  // scaled
  std::vector<Reject> rejects;
  std::vector<std::string> warnings;
};

// parse -> filter -> aggregate per unit -> join assignment -> scale.
IngestResult ingest(std::istream& trips, const Assignment& assignment);

}  // namespace boatmatch
