#include "chargecast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace chargecast::eval {

namespace {

void check_lengths(std::span<const double> y, std::span<const double> yhat) {
  if (y.empty()) throw InputError("metrics need at least one row");
  if (y.size() != yhat.size()) throw InputError("metrics: y and prediction lengths differ");
}

/// Type 7 quantile of sorted values.
double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double mape(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] > 0) {
      s += std::abs(y[i] - yhat[i]) / y[i];
      ++n;
    }
  if (n == 0) throw InputError("MAPE undefined: every observed count is zero");
  return 100.0 * s / static_cast<double>(n);
}

std::size_t mape_skipped(std::span<const double> y) {
  return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](double v) { return !(v > 0); }));
}

namespace {

StationMetrics station_metrics(const std::string& name, std::span<const double> y, std::span<const double> yhat) {
  StationMetrics m;
  m.cpid = name;
  m.n = y.size();
  m.mae = mae(y, yhat);
  m.rmse = rmse(y, yhat);
  m.mape_skipped = mape_skipped(y);
  m.mape = m.mape_skipped == y.size() ? std::numeric_limits<double>::quiet_NaN() : mape(y, yhat);
  return m;
}

}  // namespace

MetricTable metric_table(const std::string& model, std::span<const std::string> cpid, std::span<const double> y,
                         std::span<const double> yhat) {
  check_lengths(y, yhat);
  if (cpid.size() != y.size()) throw InputError("metric_table: cpid and y lengths differ");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
  for (std::size_t i = 0; i < y.size(); ++i) {
    by[cpid[i]].first.push_back(y[i]);
    by[cpid[i]].second.push_back(yhat[i]);
  }
  MetricTable t;
  t.model = model;
  for (const auto& [c, v] : by) t.stations.push_back(station_metrics(c, v.first, v.second));
  t.pooled = station_metrics("ALL", y, yhat);
  return t;
}

double round_percent(int count, int total) {
  if (total <= 0) return 0.0;
  return std::round(1000.0 * count / total) / 10.0;
}

DominanceEntry dominance(const std::string& metric, const std::map<std::string, double>& a,
                         const std::map<std::string, double>& b) {
  if (a.size() != b.size()) throw InputError("dominance: station sets differ");
  DominanceEntry e;
  e.metric = metric;
  for (const auto& [cpid, va] : a) {
    const auto it = b.find(cpid);
    if (it == b.end()) throw InputError("dominance: station '" + cpid + "' missing from the second model");
    if (va < it->second)
      ++e.wins_a;
    else if (it->second < va)
      ++e.wins_b;
    else
      ++e.ties;
  }
  const int n = static_cast<int>(a.size());
  e.pct_a = round_percent(e.wins_a, n);
  e.pct_b = round_percent(e.wins_b, n);
  return e;
}

DominanceResult dominance(const MetricTable& a, const MetricTable& b) {
  DominanceResult r;
  r.model_a = a.model;
  r.model_b = b.model;
  std::map<std::string, double> ma, mb, ra, rb, pa, pb;
  for (const auto& s : a.stations) {
    ma[s.cpid] = s.mae;
    ra[s.cpid] = s.rmse;
  }
  for (const auto& s : b.stations) {
    mb[s.cpid] = s.mae;
    rb[s.cpid] = s.rmse;
  }
  r.metrics.push_back(dominance("MAE", ma, mb));
  r.metrics.push_back(dominance("RMSE", ra, rb));
  for (const auto& s : a.stations)
    if (!std::isnan(s.mape)) pa[s.cpid] = s.mape;
  for (const auto& s : b.stations)
    if (!std::isnan(s.mape) && pa.count(s.cpid)) pb[s.cpid] = s.mape;
  for (auto it = pa.begin(); it != pa.end();) it = pb.count(it->first) ? std::next(it) : pa.erase(it);
  r.metrics.push_back(dominance("MAPE", pa, pb));
  r.stations = static_cast<int>(ma.size());
  return r;
}

BootstrapCI bootstrap_ci(std::span<const double> values, int resamples, double level, std::uint64_t seed) {
  if (values.empty()) throw InputError("bootstrap_ci: no values");
  if (resamples < 1 || !(level > 0 && level < 1)) throw InputError("bootstrap_ci: bad resamples or level");
  BootstrapCI ci;
  for (double v : values) ci.mean += v;
  ci.mean /= static_cast<double>(values.size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  ci.lo = quantile_sorted(means, 0.5 * (1.0 - level));
  ci.hi = quantile_sorted(means, 0.5 * (1.0 + level));
  return ci;
}

std::vector<WeekdaySummary> weekday_summary(std::span<const ingest::DailyPanelRow> panel, int resamples,
                                            std::uint64_t seed) {
  if (panel.empty()) throw InputError("weekday_summary: empty panel");
  std::map<Date, double> totals;
  for (const auto& r : panel) totals[r.day] += r.y;
  std::vector<std::vector<double>> by(7);
  for (const auto& [d, t] : totals) by[static_cast<std::size_t>(weekday_index(d))].push_back(t);
  std::vector<WeekdaySummary> out;
  for (int w = 0; w < 7; ++w) {
    const auto& v = by[static_cast<std::size_t>(w)];
    if (v.empty()) continue;
    out.push_back({w, v.size(), bootstrap_ci(v, resamples, 0.95, seed + static_cast<std::uint64_t>(w))});
  }
  return out;
}

std::vector<MonthlyActivity> sessions_vs_chargers(std::span<const ingest::DailyPanelRow> panel) {
  std::map<std::string, std::pair<long, std::set<std::string>>> by;
  for (const auto& r : panel) {
    auto& e = by[format_date(r.day).substr(0, 7)];
    e.first += r.y;
    if (r.y > 0) e.second.insert(r.cpid);
  }
  std::vector<MonthlyActivity> out;
  for (const auto& [m, e] : by) out.push_back({m, e.first, static_cast<int>(e.second.size())});
  return out;
}

}  // namespace chargecast::eval
