#include "chargecast/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "chargecast/csv.hpp"
#include "json.hpp"

namespace chargecast::ingest {

namespace {

using std::chrono::day;
using std::chrono::month;
using std::chrono::year;
using std::chrono::year_month_day;

bool to_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::optional<double> to_double(std::string_view s) {
  std::string t = trim(s);
  // currency prefixes show up in some monthly exports
  while (!t.empty() && !(std::isdigit(static_cast<unsigned char>(t.front())) || t.front() == '-' ||
                         t.front() == '.'))
    t.erase(0, 1);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<Date> make_date(int y, int m, int d) {
  if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

/// Seconds since midnight for "HH:MM" or "HH:MM:SS"; empty means midnight.
std::optional<long> parse_clock(std::string_view s) {
  if (s.empty()) return 0L;
  std::vector<int> parts;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find(':', pos);
    const auto piece = s.substr(pos, next == std::string_view::npos ? s.npos : next - pos);
    // tolerate fractional seconds
    const auto dot = piece.find('.');
    int v = 0;
    if (!to_int(piece.substr(0, dot), v)) return std::nullopt;
    parts.push_back(v);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  if (parts.size() < 2 || parts.size() > 3) return std::nullopt;
  const int h = parts[0], m = parts[1], sec = parts.size() == 3 ? parts[2] : 0;
  if (h < 0 || h > 23 || m < 0 || m > 59 || sec < 0 || sec > 59) return std::nullopt;
  return static_cast<long>(h) * 3600 + m * 60 + sec;
}

struct SlashDate {
  int first = 0;
  int second = 0;
  int year = 0;
  long seconds = 0;
};

enum class Shape { Iso, Slash, Invalid };

struct Split {
  Shape shape = Shape::Invalid;
  std::optional<Date> iso_date;
  SlashDate slash;
};

Split split_timestamp(std::string_view raw) {
  const std::string s = trim(raw);
  Split out;
  if (s.empty()) return out;
  const auto sep = s.find_first_of(" T");
  const std::string_view date_part = std::string_view(s).substr(0, sep);
  const std::string_view time_part =
      sep == std::string::npos ? std::string_view{} : std::string_view(s).substr(sep + 1);
  const auto clock = parse_clock(trim(time_part));
  if (!clock) return out;

  if (date_part.find('-') != std::string_view::npos) {
    out.iso_date = parse_iso_date(date_part);
    if (out.iso_date) {
      out.shape = Shape::Iso;
      out.slash.seconds = *clock;
    }
    return out;
  }
  const auto a = date_part.find('/');
  const auto b = a == std::string_view::npos ? a : date_part.find('/', a + 1);
  if (b == std::string_view::npos) return out;
  SlashDate sd;
  if (!to_int(date_part.substr(0, a), sd.first) || !to_int(date_part.substr(a + 1, b - a - 1), sd.second) ||
      !to_int(date_part.substr(b + 1), sd.year))
    return out;
  if (date_part.size() - b - 1 == 2) sd.year += 2000;
  sd.seconds = *clock;
  out.shape = Shape::Slash;
  out.slash = sd;
  return out;
}

Timestamp at(Date d, long seconds) { return std::chrono::sys_seconds{d} + std::chrono::seconds{seconds}; }

std::string month_key(Date d) { return format_date(d).substr(0, 7); }

}  // namespace

std::vector<std::string> default_excluded_cpids() {
  return {"62201", "62202", "62203", "62266", "62261", "50433", "62123"};
}

DatePolicy parse_date_policy(std::string_view s) {
  if (s == "day-first") return DatePolicy::DayFirst;
  if (s == "month-first") return DatePolicy::MonthFirst;
  if (s == "auto") return DatePolicy::Auto;
  throw InputError("unknown date policy '" + std::string(s) + "' (day-first|month-first|auto)");
}

ZeroFill parse_zero_fill(std::string_view s) {
  if (s == "active-window") return ZeroFill::ActiveWindow;
  if (s == "observed-only") return ZeroFill::ObservedOnly;
  if (s == "full-range") return ZeroFill::FullRange;
  throw InputError("unknown zero-fill policy '" + std::string(s) +
                   "' (active-window|observed-only|full-range)");
}

std::string_view to_string(DatePolicy p) {
  switch (p) {
    case DatePolicy::DayFirst: return "day-first";
    case DatePolicy::MonthFirst: return "month-first";
    case DatePolicy::Auto: return "auto";
  }
  return "auto";
}

std::string_view to_string(ZeroFill z) {
  switch (z) {
    case ZeroFill::ActiveWindow: return "active-window";
    case ZeroFill::ObservedOnly: return "observed-only";
    case ZeroFill::FullRange: return "full-range";
  }
  return "active-window";
}

std::string_view to_string(ConnectorClass c) { return c == ConnectorClass::Rapid ? "Rapid" : "AC"; }

std::optional<Timestamp> parse_timestamp(std::string_view raw, DatePolicy policy) {
  const Split sp = split_timestamp(raw);
  if (sp.shape == Shape::Iso) return at(*sp.iso_date, sp.slash.seconds);
  if (sp.shape != Shape::Slash) return std::nullopt;
  const SlashDate& s = sp.slash;
  const auto day_first = make_date(s.year, s.second, s.first);
  const auto month_first = make_date(s.year, s.first, s.second);
  switch (policy) {
    case DatePolicy::DayFirst:
      return day_first ? std::optional(at(*day_first, s.seconds)) : std::nullopt;
    case DatePolicy::MonthFirst:
      return month_first ? std::optional(at(*month_first, s.seconds)) : std::nullopt;
    case DatePolicy::Auto:
      if (day_first && month_first && *day_first != *month_first)
        throw InputError("ambiguous date '" + std::string(raw) +
                         "': no unambiguous rows to vote on, set an explicit date policy");
      if (day_first) return at(*day_first, s.seconds);
      if (month_first) return at(*month_first, s.seconds);
      return std::nullopt;
  }
  return std::nullopt;
}

DatePolicy resolve_date_policy(std::span<const std::string> raws) {
  std::size_t day_votes = 0, month_votes = 0, ambiguous = 0;
  for (const auto& raw : raws) {
    const Split sp = split_timestamp(raw);
    if (sp.shape != Shape::Slash) continue;
    const SlashDate& s = sp.slash;
    const bool df = make_date(s.year, s.second, s.first).has_value();
    const bool mf = make_date(s.year, s.first, s.second).has_value();
    if (df && mf) {
      if (s.first != s.second) ++ambiguous;
    } else if (df && s.first > 12) {
      ++day_votes;
    } else if (mf && s.second > 12) {
      ++month_votes;
    }
  }
  if (day_votes == 0 && month_votes == 0) {
    if (ambiguous > 0)
      throw InputError("date format cannot be inferred: " + std::to_string(ambiguous) +
                       " ambiguous DD/MM vs MM/DD rows and none unambiguous; set an explicit date policy");
    return DatePolicy::DayFirst;
  }
  // ties go to day-first, the UK convention of the source network
  return day_votes >= month_votes ? DatePolicy::DayFirst : DatePolicy::MonthFirst;
}

std::optional<double> parse_duration_minutes(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  if (t.find(':') == std::string::npos) return to_double(t);
  std::vector<double> parts;
  std::stringstream ss(t);
  std::string piece;
  while (std::getline(ss, piece, ':')) {
    const auto v = to_double(piece);
    if (!v || *v < 0) return std::nullopt;
    parts.push_back(*v);
  }
  if (parts.size() == 3) return parts[0] * 60.0 + parts[1] + parts[2] / 60.0;
  if (parts.size() == 2) return parts[0] + parts[1] / 60.0;
  return std::nullopt;
}

std::string standardize_authority(std::string_view s) {
  std::string out;
  bool start = true;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
      start = true;
      continue;
    }
    const auto uc = static_cast<unsigned char>(c);
    out.push_back(static_cast<char>(start ? std::toupper(uc) : std::tolower(uc)));
    start = (c == '-');
  }
  return out;
}

std::size_t CurationReport::dropped_total() const {
  std::size_t total = 0;
  for (const auto& [rule, n] : dropped) total += n;
  return total;
}

std::string CurationReport::to_json() const {
  nlohmann::ordered_json j;
  j["input_total"] = input_total;
  j["kept"] = kept;
  j["dropped_total"] = dropped_total();
  j["dropped"] = dropped;
  j["input_per_month"] = input_per_month;
  j["kept_per_month"] = kept_per_month;
  j["file_date_policy"] = file_date_policy;
  auto windows = nlohmann::ordered_json::array();
  for (const auto& w : excluded_windows)
    windows.push_back({{"start", format_date(w.first)}, {"end", format_date(w.last)}});
  j["excluded_windows"] = windows;
  j["excluded_cpids"] = excluded_cpids;
  return j.dump(2) + "\n";
}

std::pair<std::vector<CleanSession>, CurationReport> curate(std::span<const RawSessionRecord> records,
                                                            const CurationConfig& config) {
  if (!(config.capacity_cap_kwh > 0) || !(config.tariff_cap_gbp > 0))
    throw InputError("curation caps must be positive");

  CurationReport report;
  report.input_total = records.size();
  report.excluded_windows = config.excluded_windows;
  report.excluded_cpids = config.excluded_cpids;
  const std::set<std::string> excluded(config.excluded_cpids.begin(), config.excluded_cpids.end());

  // resolve the date policy per source file
  std::map<std::string, DatePolicy> policy;
  {
    std::map<std::string, std::vector<std::string>> by_file;
    for (const auto& r : records) {
      auto& v = by_file[r.source_file];
      v.push_back(r.start_raw);
      v.push_back(r.end_raw);
    }
    for (const auto& [file, raws] : by_file) {
      DatePolicy p = config.date_policy;
      if (p == DatePolicy::Auto) {
        try {
          p = resolve_date_policy(raws);
        } catch (const InputError& e) {
          throw InputError(file + ": " + e.what());
        }
      }
      policy[file] = p;
      report.file_date_policy[file] = std::string(to_string(p));
    }
  }

  std::vector<CleanSession> kept;
  kept.reserve(records.size());
  auto drop = [&](const char* rule) { ++report.dropped[rule]; };

  for (const auto& r : records) {
    const DatePolicy p = policy.at(r.source_file);
    const auto start = r.start_raw.empty() ? std::nullopt : parse_timestamp(r.start_raw, p);
    report.input_per_month[start ? month_key(day_of(*start)) : std::string("unknown")]++;

    const auto finite_nonneg = [](const std::optional<double>& v) {
      return v && std::isfinite(*v) && *v >= 0.0;
    };
    const bool duration_given = r.duration_min.has_value();
    if (!finite_nonneg(r.energy_kwh) || !finite_nonneg(r.cost) || r.start_raw.empty() ||
        (duration_given && !finite_nonneg(r.duration_min)) || (!duration_given && r.end_raw.empty())) {
      drop(kRuleNullField);
      continue;
    }
    if (!start) {
      drop(kRuleBadTimestamp);
      continue;
    }
    double duration = 0.0;
    if (duration_given) {
      duration = *r.duration_min;
    } else {
      const auto end = parse_timestamp(r.end_raw, p);
      if (!end) {
        drop(kRuleBadTimestamp);
        continue;
      }
      duration = static_cast<double>((*end - *start).count()) / 60.0;
    }
    if (excluded.count(r.cpid)) {
      drop(kRuleExcludedCpid);
      continue;
    }
    if (duration <= 0.0) {
      drop(kRuleZeroDuration);
      continue;
    }
    if (*r.energy_kwh <= 0.0) {
      drop(kRuleZeroEnergy);
      continue;
    }
    if (*r.energy_kwh > config.capacity_cap_kwh) {
      drop(kRuleOverCapacity);
      continue;
    }
    if (*r.cost > config.tariff_cap_gbp) {
      drop(kRuleOverTariff);
      continue;
    }
    const Date d = day_of(*start);
    if (std::any_of(config.excluded_windows.begin(), config.excluded_windows.end(),
                    [&](const DateWindow& w) { return w.contains(d); })) {
      drop(kRuleExcludedWindow);
      continue;
    }
    report.kept_per_month[month_key(d)]++;
    kept.push_back(CleanSession{r.cpid, *start, d, duration, *r.energy_kwh, *r.cost,
                                standardize_authority(r.local_authority)});
  }
  report.kept = kept.size();
  return {std::move(kept), std::move(report)};
}

std::vector<RawSessionRecord> to_raw(std::span<const CleanSession> sessions, std::string_view source_file) {
  std::vector<RawSessionRecord> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) {
    RawSessionRecord r;
    r.cpid = s.cpid;
    r.start_raw = format_timestamp(s.start);
    const auto end = s.start + std::chrono::seconds{static_cast<long>(std::llround(s.duration_min * 60.0))};
    r.end_raw = format_timestamp(end);
    r.duration_min = s.duration_min;
    r.energy_kwh = s.energy_kwh;
    r.cost = s.cost;
    r.local_authority = s.local_authority;
    r.source_file = std::string(source_file);
    out.push_back(std::move(r));
  }
  return out;
}

AggregateResult aggregate_daily(std::span<const CleanSession> sessions, const StationTable& stations,
                                ZeroFill zero_fill, std::span<const DateWindow> skip_windows) {
  AggregateResult result;
  std::map<std::string, std::map<Date, int>> counts;
  std::set<std::string> unknown;
  std::optional<Date> global_first, global_last;
  for (const auto& s : sessions) {
    if (!stations.count(s.cpid)) {
      ++result.dropped_unknown_cpid;
      unknown.insert(s.cpid);
      continue;
    }
    counts[s.cpid][s.day]++;
    if (!global_first || s.day < *global_first) global_first = s.day;
    if (!global_last || s.day > *global_last) global_last = s.day;
  }
  result.unknown_cpids.assign(unknown.begin(), unknown.end());

  const auto skipped = [&](Date d) {
    return std::any_of(skip_windows.begin(), skip_windows.end(),
                       [&](const DateWindow& w) { return w.contains(d); });
  };

  for (const auto& [cpid, per_day] : counts) {
    const StationMeta& meta = stations.at(cpid);
    auto emit = [&, &cpid = cpid](Date d, int y) {
      DailyPanelRow row;
      row.cpid = cpid;
      row.day = d;
      row.y = y;
      row.connector_class = meta.connector_class;
      row.is_public_access = meta.is_public_access;
      row.is_free = !meta.tariff_start_date || d < *meta.tariff_start_date;
      row.day_of_week = weekday_index(d);
      result.rows.push_back(std::move(row));
    };
    if (zero_fill == ZeroFill::ObservedOnly) {
      for (const auto& [d, y] : per_day) emit(d, y);
      continue;
    }
    Date first = per_day.begin()->first;
    Date last = per_day.rbegin()->first;
    if (zero_fill == ZeroFill::FullRange) {
      first = *global_first;
      last = *global_last;
    }
    for (Date d = first; d <= last; d += std::chrono::days{1}) {
      const auto it = per_day.find(d);
      if (it != per_day.end())
        emit(d, it->second);
      else if (!skipped(d))
        emit(d, 0);
    }
  }
  return result;
}

// --- natural cubic spline -------------------------------------------------------------

namespace {

double quantile_type7(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// All B-spline basis functions of the given order at x (Cox-de Boor), size knots - order.
std::vector<double> bspline_values(const std::vector<double>& t, int order, double x) {
  const std::size_t m = t.size();
  std::vector<double> b(m - 1, 0.0);
  // locate the knot span; x at the right end belongs to the last non-empty span
  std::size_t span = m;
  for (std::size_t i = 0; i + 1 < m; ++i)
    if (t[i] <= x && x < t[i + 1]) span = i;
  if (span == m)
    for (std::size_t i = m - 1; i-- > 0;)
      if (t[i] < t[i + 1] && x == t[i + 1]) {
        span = i;
        break;
      }
  if (span < m) b[span] = 1.0;
  for (int k = 2; k <= order; ++k) {
    std::vector<double> next(m - static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < next.size(); ++i) {
      double v = 0.0;
      const double d1 = t[i + k - 1] - t[i];
      const double d2 = t[i + k] - t[i + 1];
      if (d1 > 0) v += (x - t[i]) / d1 * b[i];
      if (d2 > 0) v += (t[i + k] - x) / d2 * b[i + 1];
      next[i] = v;
    }
    b = std::move(next);
  }
  return b;
}

std::vector<double> bspline_derivative(const std::vector<double>& t, int order, double x, int deriv) {
  if (deriv == 0) return bspline_values(t, order, x);
  const auto lower = bspline_derivative(t, order - 1, x, deriv - 1);
  std::vector<double> out(t.size() - static_cast<std::size_t>(order), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d1 = t[i + order - 1] - t[i];
    const double d2 = t[i + order] - t[i + 1];
    double v = 0.0;
    if (d1 > 0) v += lower[i] / d1;
    if (d2 > 0) v -= lower[i + 1] / d2;
    out[i] = (order - 1) * v;
  }
  return out;
}

}  // namespace

std::vector<double> NaturalSplineBasis::knot_sequence() const {
  std::vector<double> t(4, lower_);
  t.insert(t.end(), interior_.begin(), interior_.end());
  t.insert(t.end(), 4, upper_);
  return t;
}

NaturalSplineBasis NaturalSplineBasis::fit(std::span<const double> training, int df) {
  if (df < 1) throw InputError("spline df must be >= 1");
  if (training.empty()) throw InputError("degenerate spline basis: no training values");
  std::vector<double> sorted(training.begin(), training.end());
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted.back() - sorted.front() > 0.0)) throw InputError("degenerate spline basis: constant input");

  NaturalSplineBasis basis;
  basis.lower_ = sorted.front();
  basis.upper_ = sorted.back();
  for (int k = 1; k < df; ++k)
    basis.interior_.push_back(quantile_type7(sorted, static_cast<double>(k) / df));

  const auto t = basis.knot_sequence();
  const auto n_basis = static_cast<Eigen::Index>(t.size() - 4);  // df + 3
  // second-derivative constraints at both boundaries, intercept column dropped
  Eigen::MatrixXd constraint(n_basis - 1, 2);
  const auto d_lo = bspline_derivative(t, 4, basis.lower_, 2);
  const auto d_hi = bspline_derivative(t, 4, basis.upper_, 2);
  for (Eigen::Index i = 1; i < n_basis; ++i) {
    constraint(i - 1, 0) = d_lo[static_cast<std::size_t>(i)];
    constraint(i - 1, 1) = d_hi[static_cast<std::size_t>(i)];
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraint);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n_basis - 1, n_basis - 1);
  basis.projection_ = q.rightCols(n_basis - 3);
  return basis;
}

Eigen::RowVectorXd NaturalSplineBasis::evaluate(double x) const {
  const double xc = std::clamp(x, lower_, upper_);
  const auto b = bspline_values(knot_sequence(), 4, xc);
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(b.size() - 1));
  for (std::size_t i = 1; i < b.size(); ++i) row(static_cast<Eigen::Index>(i - 1)) = b[i];
  return row * projection_;
}

Eigen::MatrixXd NaturalSplineBasis::evaluate(std::span<const double> x) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), df());
  for (std::size_t i = 0; i < x.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = evaluate(x[i]);
  return out;
}

// --- model frame ------------------------------------------------------------------------

int ModelFrame::column(std::string_view name) const {
  for (std::size_t i = 0; i < column_names.size(); ++i)
    if (column_names[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> design_column_names(int spline_df) {
  std::vector<std::string> names{"intercept", "rapid", "public", "free",     "monday",
                                 "tuesday",   "wednesday", "thursday", "saturday", "sunday"};
  for (int k = 1; k <= spline_df; ++k) names.push_back("temp_spline_" + std::to_string(k));
  names.push_back("wind");
  names.push_back("humidity");
  return names;
}

FrameResult build_frame(std::span<const DailyPanelRow> panel, const WeatherTable& weather,
                        std::optional<Date> spline_training_end) {
  if (panel.empty()) throw InputError("empty panel");
  std::vector<DailyPanelRow> rows(panel.begin(), panel.end());
  std::sort(rows.begin(), rows.end(), [](const DailyPanelRow& a, const DailyPanelRow& b) {
    return std::tie(a.cpid, a.day) < std::tie(b.cpid, b.day);
  });

  std::set<Date> day_set;
  std::set<std::string> cpid_set;
  for (const auto& r : rows) {
    day_set.insert(r.day);
    cpid_set.insert(r.cpid);
  }
  std::vector<std::string> missing;
  for (Date d : day_set)
    if (!weather.count(d)) missing.push_back(format_date(d));
  if (!missing.empty()) {
    std::string msg = "weather missing for " + std::to_string(missing.size()) + " day(s):";
    for (const auto& m : missing) msg += " " + m;
    throw InputError(msg);
  }

  std::vector<double> training_temps;
  for (Date d : day_set)
    if (!spline_training_end || d < *spline_training_end) training_temps.push_back(weather.at(d).temp_c);
  if (training_temps.empty()) throw InputError("no training days for the temperature spline");
  auto spline = NaturalSplineBasis::fit(training_temps, 3);

  ModelFrame f;
  f.cpids.assign(cpid_set.begin(), cpid_set.end());
  f.days.assign(day_set.begin(), day_set.end());
  f.column_names = design_column_names(spline.df());
  std::map<Date, int> day_pos;
  for (std::size_t i = 0; i < f.days.size(); ++i) day_pos[f.days[i]] = static_cast<int>(i);
  std::map<std::string, int> cpid_pos;
  for (std::size_t i = 0; i < f.cpids.size(); ++i) cpid_pos[f.cpids[i]] = static_cast<int>(i);

  const auto n = static_cast<Eigen::Index>(rows.size());
  f.X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(f.column_names.size()));
  // Monday..Sunday -> dummy column, Friday is the reference level
  constexpr int dow_col[7] = {4, 5, 6, 7, -1, 8, 9};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    const WeatherDay& w = weather.at(row.day);
    f.y.push_back(row.y);
    f.cpid_index.push_back(cpid_pos.at(row.cpid));
    f.day_index.push_back(day_pos.at(row.day));
    f.X(r, 0) = 1.0;
    f.X(r, 1) = row.connector_class == ConnectorClass::Rapid ? 1.0 : 0.0;
    f.X(r, 2) = row.is_public_access ? 1.0 : 0.0;
    f.X(r, 3) = row.is_free ? 1.0 : 0.0;
    const int dc = dow_col[weekday_index(row.day)];
    if (dc >= 0) f.X(r, dc) = 1.0;
    f.X.block(r, 10, 1, spline.df()) = spline.evaluate(w.temp_c);
    f.X(r, 10 + spline.df()) = w.wind_ms;
    f.X(r, 11 + spline.df()) = w.humidity_pct;
  }
  for (Eigen::Index c = 0; c < f.X.cols(); ++c)
    if (f.X.col(c).isZero(0.0))
      throw InputError("design column '" + f.column_names[static_cast<std::size_t>(c)] +
                       "' is all zero; the data cannot identify it");
  return FrameResult{std::move(f), std::move(spline)};
}

ModelFrame subset_rows(const ModelFrame& frame, std::span<const std::size_t> keep) {
  ModelFrame out;
  out.column_names = frame.column_names;
  out.cpids = frame.cpids;
  std::set<int> used_days;
  for (auto r : keep) used_days.insert(frame.day_index[r]);
  std::map<int, int> remap;
  for (int d : used_days) {
    remap[d] = static_cast<int>(out.days.size());
    out.days.push_back(frame.days[static_cast<std::size_t>(d)]);
  }
  out.X.resize(static_cast<Eigen::Index>(keep.size()), frame.X.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto r = keep[i];
    out.y.push_back(frame.y[r]);
    out.cpid_index.push_back(frame.cpid_index[r]);
    out.day_index.push_back(remap.at(frame.day_index[r]));
    out.X.row(static_cast<Eigen::Index>(i)) = frame.X.row(static_cast<Eigen::Index>(r));
  }
  return out;
}

std::pair<ModelFrame, ModelFrame> temporal_split(const ModelFrame& frame, Date split_date) {
  std::vector<std::size_t> train, test;
  for (std::size_t r = 0; r < frame.rows(); ++r) (frame.row_day(r) < split_date ? train : test).push_back(r);
  if (train.empty() || test.empty())
    throw InputError("split date " + format_date(split_date) + " leaves an empty " +
                     (train.empty() ? "training" : "test") + " set");
  return {subset_rows(frame, train), subset_rows(frame, test)};
}

// --- file IO ----------------------------------------------------------------------------

std::vector<RawSessionRecord> read_sessions(const std::filesystem::path& path, const SessionColumns& columns) {
  const auto table = csv::read_file(path);
  const std::string ctx = path.string();
  const int c_cpid = table.require(columns.cpid, ctx);
  const int c_sd = table.require(columns.start_date, ctx);
  const int c_st = table.find(columns.start_time);
  const int c_ed = table.find(columns.end_date);
  const int c_et = table.find(columns.end_time);
  const int c_dur = table.find(columns.duration);
  const int c_kwh = table.require(columns.energy, ctx);
  const int c_cost = table.require(columns.cost, ctx);
  const int c_la = table.find(columns.local_authority);
  if (c_dur < 0 && c_ed < 0)
    throw InputError(ctx + ": need either a duration or an end-date column");

  auto cell = [](const std::vector<std::string>& row, int c) -> std::string {
    return c < 0 ? std::string{} : trim(row[static_cast<std::size_t>(c)]);
  };
  auto join = [](std::string d, const std::string& t) {
    if (d.empty() || t.empty()) return d;
    return d + " " + t;
  };
  std::vector<RawSessionRecord> out;
  out.reserve(table.rows.size());
  const std::string source = path.filename().string();
  for (const auto& row : table.rows) {
    RawSessionRecord r;
    r.cpid = cell(row, c_cpid);
    r.start_raw = join(cell(row, c_sd), cell(row, c_st));
    r.end_raw = join(cell(row, c_ed), cell(row, c_et));
    if (c_dur >= 0) r.duration_min = parse_duration_minutes(cell(row, c_dur));
    r.energy_kwh = to_double(cell(row, c_kwh));
    r.cost = to_double(cell(row, c_cost));
    r.local_authority = cell(row, c_la);
    r.source_file = source;
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

bool parse_bool(const std::string& s, const std::string& ctx) {
  std::string t;
  for (char c : trim(s)) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "true" || t == "1" || t == "yes" || t == "public") return true;
  if (t == "false" || t == "0" || t == "no" || t == "private") return false;
  throw InputError(ctx + ": cannot read boolean '" + s + "'");
}

ConnectorClass parse_connector(const std::string& s, const std::string& ctx) {
  std::string t;
  for (char c : trim(s)) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "ac" || t == "slow" || t == "fast" || t == "standard") return ConnectorClass::AC;
  if (t == "rapid" || t == "ultra-rapid" || t == "ultra rapid" || t == "dc") return ConnectorClass::Rapid;
  throw InputError(ctx + ": unknown connector class '" + s + "'");
}

double require_double(const std::string& s, const std::string& ctx) {
  const auto v = to_double(s);
  if (!v) throw InputError(ctx + ": cannot read number '" + s + "'");
  return *v;
}

}  // namespace

StationTable read_stations(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string ctx = path.string();
  const int c_cpid = table.require("cpid", ctx);
  const int c_lon = table.require("lon", ctx);
  const int c_lat = table.require("lat", ctx);
  const int c_conn = table.require("connector_class", ctx);
  const int c_pub = table.require("is_public_access", ctx);
  const int c_tariff = table.find("tariff_start_date");
  const int c_nb = table.find("neighbourhood");
  StationTable out;
  for (const auto& row : table.rows) {
    auto at = [&](int c) { return c < 0 ? std::string{} : trim(row[static_cast<std::size_t>(c)]); };
    StationMeta m;
    m.cpid = at(c_cpid);
    const std::string rctx = ctx + " (cpid " + m.cpid + ")";
    m.lon = require_double(at(c_lon), rctx);
    m.lat = require_double(at(c_lat), rctx);
    m.connector_class = parse_connector(at(c_conn), rctx);
    m.is_public_access = parse_bool(at(c_pub), rctx);
    const std::string tariff = at(c_tariff);
    if (!tariff.empty()) {
      m.tariff_start_date = parse_iso_date(tariff);
      if (!m.tariff_start_date) throw InputError(rctx + ": bad tariff_start_date '" + tariff + "'");
    }
    m.neighbourhood = at(c_nb);
    if (!out.emplace(m.cpid, m).second) throw InputError(ctx + ": duplicate cpid " + m.cpid);
  }
  return out;
}

void write_stations(const std::filesystem::path& path, const StationTable& stations) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "cpid,lon,lat,connector_class,is_public_access,tariff_start_date,neighbourhood\n";
  for (const auto& [cpid, m] : stations)
    out << csv::escape(cpid) << ',' << csv::format_double(m.lon) << ',' << csv::format_double(m.lat) << ','
        << to_string(m.connector_class) << ',' << (m.is_public_access ? "true" : "false") << ','
        << (m.tariff_start_date ? format_date(*m.tariff_start_date) : std::string{}) << ','
        << csv::escape(m.neighbourhood) << '\n';
}

WeatherTable read_weather(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string ctx = path.string();
  const int c_date = table.require("date", ctx);
  const int c_t = table.require("temp_c", ctx);
  const int c_w = table.require("wind_ms", ctx);
  const int c_h = table.require("humidity_pct", ctx);
  WeatherTable out;
  for (const auto& row : table.rows) {
    const std::string ds = trim(row[static_cast<std::size_t>(c_date)]);
    const auto d = parse_iso_date(ds);
    if (!d) throw InputError(ctx + ": bad date '" + ds + "'");
    WeatherDay w{*d, require_double(row[static_cast<std::size_t>(c_t)], ctx),
                 require_double(row[static_cast<std::size_t>(c_w)], ctx),
                 require_double(row[static_cast<std::size_t>(c_h)], ctx)};
    out[*d] = w;
  }
  return out;
}

void write_panel(const std::filesystem::path& path, std::span<const DailyPanelRow> panel) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "cpid,day,y,connector_class,is_public_access,is_free,day_of_week,temp_c,wind_ms,humidity_pct\n";
  for (const auto& r : panel) {
    out << csv::escape(r.cpid) << ',' << format_date(r.day) << ',' << r.y << ',' << to_string(r.connector_class)
        << ',' << (r.is_public_access ? "true" : "false") << ',' << (r.is_free ? "true" : "false") << ','
        << weekday_name(r.day_of_week) << ',' << csv::format_double(r.temp_c) << ','
        << csv::format_double(r.wind_ms) << ',' << csv::format_double(r.humidity_pct) << '\n';
  }
}

std::vector<DailyPanelRow> read_panel(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string ctx = path.string();
  const int c_cpid = table.require("cpid", ctx);
  const int c_day = table.require("day", ctx);
  const int c_y = table.require("y", ctx);
  const int c_conn = table.require("connector_class", ctx);
  const int c_pub = table.require("is_public_access", ctx);
  const int c_free = table.require("is_free", ctx);
  std::vector<DailyPanelRow> out;
  for (const auto& row : table.rows) {
    auto at = [&](int c) { return trim(row[static_cast<std::size_t>(c)]); };
    DailyPanelRow r;
    r.cpid = at(c_cpid);
    const auto d = parse_iso_date(at(c_day));
    if (!d) throw InputError(ctx + ": bad day '" + at(c_day) + "'");
    r.day = *d;
    if (!to_int(at(c_y), r.y) || r.y < 0) throw InputError(ctx + ": bad count '" + at(c_y) + "'");
    r.connector_class = parse_connector(at(c_conn), ctx);
    r.is_public_access = parse_bool(at(c_pub), ctx);
    r.is_free = parse_bool(at(c_free), ctx);
    r.day_of_week = weekday_index(r.day);
    out.push_back(std::move(r));
  }
  return out;
}

void write_frame(const std::filesystem::path& path, const ModelFrame& frame) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "cpid,day,day_index,y";
  for (const auto& c : frame.column_names) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << csv::escape(frame.row_cpid(r)) << ',' << format_date(frame.row_day(r)) << ','
        << frame.day_index[r] + 1 << ',' << frame.y[r];
    for (Eigen::Index c = 0; c < frame.X.cols(); ++c)
      out << ',' << csv::format_double(frame.X(static_cast<Eigen::Index>(r), c));
    out << '\n';
  }
}

ModelFrame read_frame(const std::filesystem::path& path) {
  const auto table = csv::read_file(path);
  const std::string ctx = path.string();
  const int c_cpid = table.require("cpid", ctx);
  const int c_day = table.require("day", ctx);
  const int c_y = table.require("y", ctx);
  if (c_y + 1 >= static_cast<int>(table.header.size())) throw InputError(ctx + ": no design columns");
  ModelFrame f;
  f.column_names.assign(table.header.begin() + c_y + 1, table.header.end());
  std::set<std::string> cpid_set;
  std::set<Date> day_set;
  std::vector<Date> row_days;
  for (const auto& row : table.rows) {
    const std::string ds = trim(row[static_cast<std::size_t>(c_day)]);
    const auto d = parse_iso_date(ds);
    if (!d) throw InputError(ctx + ": bad day '" + ds + "'");
    row_days.push_back(*d);
    day_set.insert(*d);
    cpid_set.insert(trim(row[static_cast<std::size_t>(c_cpid)]));
  }
  f.cpids.assign(cpid_set.begin(), cpid_set.end());
  f.days.assign(day_set.begin(), day_set.end());
  std::map<std::string, int> cpid_pos;
  for (std::size_t i = 0; i < f.cpids.size(); ++i) cpid_pos[f.cpids[i]] = static_cast<int>(i);
  std::map<Date, int> day_pos;
  for (std::size_t i = 0; i < f.days.size(); ++i) day_pos[f.days[i]] = static_cast<int>(i);
  const auto k = static_cast<Eigen::Index>(f.column_names.size());
  f.X.resize(static_cast<Eigen::Index>(table.rows.size()), k);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    int y = 0;
    if (!to_int(trim(row[static_cast<std::size_t>(c_y)]), y) || y < 0)
      throw InputError(ctx + ": bad count at row " + std::to_string(r + 2));
    f.y.push_back(y);
    f.cpid_index.push_back(cpid_pos.at(trim(row[static_cast<std::size_t>(c_cpid)])));
    f.day_index.push_back(day_pos.at(row_days[r]));
    for (Eigen::Index c = 0; c < k; ++c)
      f.X(static_cast<Eigen::Index>(r), c) =
          require_double(row[static_cast<std::size_t>(c_y + 1 + c)], ctx);
  }
  return f;
}

}  // namespace chargecast::ingest
