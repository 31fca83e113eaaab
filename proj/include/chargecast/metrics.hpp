#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chargecast/common.hpp"
#include "chargecast/ingest.hpp"

namespace chargecast::eval {

double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);
/// Percent error over rows with y > 0. Throws InputError when no such row exists.
double mape(std::span<const double> y, std::span<const double> yhat);
/// Rows skipped by mape (y <= 0).
std::size_t mape_skipped(std::span<const double> y);

struct StationMetrics {
  std::string cpid;  ///< "ALL" for the pooled row
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  ///< NaN when every y is 0
  std::size_t mape_skipped = 0;
};

struct MetricTable {
  std::string model;
  std::vector<StationMetrics> stations;  ///< sorted by cpid
  StationMetrics pooled;
};

MetricTable metric_table(const std::string& model, std::span<const std::string> cpid, std::span<const double> y,
                         std::span<const double> yhat);

struct DominanceEntry {
  std::string metric;
  int wins_a = 0;
  int wins_b = 0;
  int ties = 0;
  double pct_a = 0.0;  ///< percent, 1 decimal
  double pct_b = 0.0;
};

struct DominanceResult {
  std::string model_a;
  std::string model_b;
  int stations = 0;
  std::vector<DominanceEntry> metrics;
};

/// Strict per-station wins of A (lower error) against B. Stations must match.
DominanceEntry dominance(const std::string& metric, const std::map<std::string, double>& a,
                         const std::map<std::string, double>& b);
/// MAE, RMSE and MAPE; MAPE skips stations where either side is undefined.
DominanceResult dominance(const MetricTable& a, const MetricTable& b);

double round_percent(int count, int total);

struct BootstrapCI {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean.
BootstrapCI bootstrap_ci(std::span<const double> values, int resamples = 1000, double level = 0.95,
                         std::uint64_t seed = 1);

struct WeekdaySummary {
  int weekday = 0;  ///< Monday = 0
  std::size_t days = 0;
  BootstrapCI ci;
};

/// Daily session totals grouped by weekday; weekdays without data are omitted.
std::vector<WeekdaySummary> weekday_summary(std::span<const ingest::DailyPanelRow> panel, int resamples = 1000,
                                            std::uint64_t seed = 1);

struct MonthlyActivity {
  std::string month;  ///< YYYY-MM
  long sessions = 0;
  int active_chargers = 0;  ///< CPIDs with at least one session
};

std::vector<MonthlyActivity> sessions_vs_chargers(std::span<const ingest::DailyPanelRow> panel);

}  // namespace chargecast::eval
