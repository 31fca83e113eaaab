#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chargecast/common.hpp"

namespace chargecast::ingest {

enum class DatePolicy { DayFirst, MonthFirst, Auto };
enum class ConnectorClass { AC, Rapid };

/// How days without sessions are turned into y = 0 rows.
enum class ZeroFill {
  ActiveWindow,  ///< every day between a CPID's first and last session
  ObservedOnly,  ///< no zero rows at all
  FullRange,     ///< every day of the global date range, for every CPID
};

DatePolicy parse_date_policy(std::string_view s);
ZeroFill parse_zero_fill(std::string_view s);
std::string_view to_string(DatePolicy p);
std::string_view to_string(ZeroFill z);
std::string_view to_string(ConnectorClass c);

struct RawSessionRecord {
  std::string cpid;
  std::string start_raw;
  std::string end_raw;
  std::optional<double> duration_min;
  std::optional<double> energy_kwh;
  std::optional<double> cost;
  std::string local_authority;
  std::string source_file;
};

struct StationMeta {
  std::string cpid;
  double lon = 0.0;
  double lat = 0.0;
  ConnectorClass connector_class = ConnectorClass::AC;
  bool is_public_access = true;
  /// First paid day. Empty means the station stayed free for the whole record.
  std::optional<Date> tariff_start_date;
  std::string neighbourhood;
};

using StationTable = std::map<std::string, StationMeta>;

struct CleanSession {
  std::string cpid;
  Timestamp start;
  Date day;
  double duration_min = 0.0;
  double energy_kwh = 0.0;
  double cost = 0.0;
  std::string local_authority;
};

/// Inclusive calendar range.
struct DateWindow {
  Date first;
  Date last;
  bool contains(Date d) const { return first <= d && d <= last; }
};

std::vector<std::string> default_excluded_cpids();

struct CurationConfig {
  double capacity_cap_kwh = 100.0;
  double tariff_cap_gbp = 50.0;
  std::vector<DateWindow> excluded_windows;
  std::vector<std::string> excluded_cpids = default_excluded_cpids();
  DatePolicy date_policy = DatePolicy::Auto;
};

struct CurationReport {
  std::size_t input_total = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> dropped;           ///< rule -> count
  std::map<std::string, std::size_t> input_per_month;   ///< "YYYY-MM" -> count
  std::map<std::string, std::size_t> kept_per_month;
  std::map<std::string, std::string> file_date_policy;  ///< source file -> resolved policy
  std::vector<DateWindow> excluded_windows;
  std::vector<std::string> excluded_cpids;

  std::size_t dropped_total() const;
  std::string to_json() const;
};

// Drop rules, in the order they are tested.
inline constexpr const char* kRuleNullField = "null-field";
inline constexpr const char* kRuleBadTimestamp = "unparseable-timestamp";
inline constexpr const char* kRuleExcludedCpid = "excluded-cpid";
inline constexpr const char* kRuleZeroDuration = "zero-duration";
inline constexpr const char* kRuleZeroEnergy = "zero-energy";
inline constexpr const char* kRuleOverCapacity = "over-capacity";
inline constexpr const char* kRuleOverTariff = "over-tariff";
inline constexpr const char* kRuleExcludedWindow = "excluded-window";
inline constexpr const char* kRuleUnknownCpid = "unknown-cpid";

/// Parses "DD/MM/YYYY[ HH:MM[:SS]]" (slash form, per policy) or ISO "YYYY-MM-DD[ T]HH:MM[:SS]".
/// Returns nullopt when no valid calendar reading exists. Under Auto a slash date that reads
/// validly both ways throws InputError asking for an explicit policy.
std::optional<Timestamp> parse_timestamp(std::string_view raw, DatePolicy policy);

/// Per-file majority vote over unambiguous slash dates (first field > 12 means day-first).
/// Throws InputError when the file has ambiguous rows but no unambiguous one.
DatePolicy resolve_date_policy(std::span<const std::string> raws);

/// "hh:mm:ss", "mm:ss" or plain minutes.
std::optional<double> parse_duration_minutes(std::string_view s);

/// Collapses whitespace and title-cases ("glasgow  city" -> "Glasgow City").
std::string standardize_authority(std::string_view s);

std::pair<std::vector<CleanSession>, CurationReport> curate(
    std::span<const RawSessionRecord> records, const CurationConfig& config);

/// Turns clean sessions back into raw records (ISO timestamps), e.g. to re-run curation.
std::vector<RawSessionRecord> to_raw(std::span<const CleanSession> sessions,
                                     std::string_view source_file = "curated");

struct DailyPanelRow {
  std::string cpid;
  Date day;
  int y = 0;
  ConnectorClass connector_class = ConnectorClass::AC;
  bool is_public_access = true;
  bool is_free = false;
  int day_of_week = 0;  ///< Monday = 0
  double temp_c = std::numeric_limits<double>::quiet_NaN();
  double wind_ms = std::numeric_limits<double>::quiet_NaN();
  double humidity_pct = std::numeric_limits<double>::quiet_NaN();
};

struct AggregateResult {
  std::vector<DailyPanelRow> rows;  ///< sorted by (cpid, day)
  std::size_t dropped_unknown_cpid = 0;
  std::vector<std::string> unknown_cpids;
};

/// Counts sessions per (cpid, day) and zero-fills per policy. Days inside skip_windows are
/// never zero-filled.
AggregateResult aggregate_daily(std::span<const CleanSession> sessions, const StationTable& stations,
                                ZeroFill zero_fill = ZeroFill::ActiveWindow,
                                std::span<const DateWindow> skip_windows = {});

struct WeatherDay {
  Date day;
  double temp_c = 0.0;
  double wind_ms = 0.0;
  double humidity_pct = 0.0;
};
using WeatherTable = std::map<Date, WeatherDay>;

/// Natural cubic spline basis without intercept: df - 1 interior knots at training
/// quantiles, boundary knots at the training range, values outside clamped to it.
class NaturalSplineBasis {
 public:
  static NaturalSplineBasis fit(std::span<const double> training, int df = 3);

  int df() const { return static_cast<int>(projection_.cols()); }
  Eigen::RowVectorXd evaluate(double x) const;
  Eigen::MatrixXd evaluate(std::span<const double> x) const;

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const std::vector<double>& interior_knots() const { return interior_; }

 private:
  NaturalSplineBasis() = default;
  std::vector<double> knot_sequence() const;

  double lower_ = 0.0;
  double upper_ = 0.0;
  std::vector<double> interior_;
  Eigen::MatrixXd projection_;
};

/// Response, fixed-effect design and per-row spatial/temporal indices.
struct ModelFrame {
  std::vector<int> y;
  Eigen::MatrixXd X;
  std::vector<int> cpid_index;  ///< row -> index into cpids
  std::vector<int> day_index;   ///< row -> index into days (0-based; files write 1-based)
  std::vector<std::string> column_names;
  std::vector<std::string> cpids;  ///< spatial units, sorted
  std::vector<Date> days;          ///< dense temporal index, sorted

  std::size_t rows() const { return y.size(); }
  Date row_day(std::size_t r) const { return days[static_cast<std::size_t>(day_index[r])]; }
  const std::string& row_cpid(std::size_t r) const {
    return cpids[static_cast<std::size_t>(cpid_index[r])];
  }
  int column(std::string_view name) const;
};

/// Column order of the fixed-effect design.
std::vector<std::string> design_column_names(int spline_df = 3);

struct FrameResult {
  ModelFrame frame;
  NaturalSplineBasis spline;
};

/// Joins weather and builds the design. Spline knots come from the distinct training days
/// (day < spline_training_end when given). Throws InputError listing days without weather.
FrameResult build_frame(std::span<const DailyPanelRow> panel, const WeatherTable& weather,
                        std::optional<Date> spline_training_end = std::nullopt);

/// Keeps the rows selected by keep (in order) and re-indexes days; cpids are kept as is.
ModelFrame subset_rows(const ModelFrame& frame, std::span<const std::size_t> keep);

/// Train = day < split_date, test = the rest. Throws InputError when a side is empty.
std::pair<ModelFrame, ModelFrame> temporal_split(const ModelFrame& frame, Date split_date);

// File IO

struct SessionColumns {
  std::string cpid = "CPID";
  std::string start_date = "Start Date";
  std::string start_time = "Start Time";
  std::string end_date = "End Date";
  std::string end_time = "End Time";
  std::string duration = "Duration";
  std::string energy = "Total kWh";
  std::string cost = "Cost";
  std::string site = "Site";
  std::string local_authority = "Local Authority";
};

std::vector<RawSessionRecord> read_sessions(const std::filesystem::path& path,
                                            const SessionColumns& columns = {});
StationTable read_stations(const std::filesystem::path& path);
void write_stations(const std::filesystem::path& path, const StationTable& stations);
WeatherTable read_weather(const std::filesystem::path& path);

void write_panel(const std::filesystem::path& path, std::span<const DailyPanelRow> panel);
std::vector<DailyPanelRow> read_panel(const std::filesystem::path& path);
void write_frame(const std::filesystem::path& path, const ModelFrame& frame);
ModelFrame read_frame(const std::filesystem::path& path);

}  // namespace chargecast::ingest
