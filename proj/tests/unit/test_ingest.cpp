#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "chargecast/common.hpp"
#include "chargecast/ingest.hpp"

using namespace chargecast;
using namespace chargecast::ingest;
using namespace std::chrono;

namespace {

Date ymd(int y, unsigned m, unsigned d) { return Date{year{y} / month{m} / day{d}}; }
Timestamp at(int y, unsigned m, unsigned d, int hh, int mm) { return Timestamp{ymd(y, m, d)} + hours{hh} + minutes{mm}; }

RawSessionRecord raw(std::string cpid, std::string start, double minutes_, double kwh, double cost,
                     std::string file = "f.csv") {
  RawSessionRecord r;
  r.cpid = std::move(cpid);
  r.start_raw = std::move(start);
  r.duration_min = minutes_;
  r.energy_kwh = kwh;
  r.cost = cost;
  r.local_authority = "glasgow city";
  r.source_file = std::move(file);
  return r;
}

CleanSession session(const std::string& cpid, Date d, int hour = 10) {
  CleanSession s;
  s.cpid = cpid;
  s.start = Timestamp{d} + hours{hour};
  s.day = d;
  s.duration_min = 30;
  s.energy_kwh = 10;
  return s;
}

StationTable stations() {
  StationTable t;
  t["A"] = {"A", -4.25, 55.86, ConnectorClass::AC, true, ymd(2024, 3, 10), "x"};
  t["B"] = {"B", -4.26, 55.87, ConnectorClass::Rapid, false, std::nullopt, "y"};
  return t;
}

WeatherTable weather_for(Date first, int days, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  WeatherTable w;
  for (int i = 0; i < days; ++i) {
    const Date d = first + std::chrono::days{i};
    w[d] = {d, 10 + 5 * z(rng), 4 + z(rng), 75 + 5 * z(rng)};
  }
  return w;
}

}  // namespace

TEST_CASE("timestamp parsing") {
  CHECK(parse_timestamp("25/12/2022 10:00", DatePolicy::Auto) == at(2022, 12, 25, 10, 0));
  CHECK(parse_timestamp("2023-03-02T08:15:30", DatePolicy::Auto) == at(2023, 3, 2, 8, 15) + seconds{30});
  CHECK(parse_timestamp("12/25/2022 10:00", DatePolicy::MonthFirst) == at(2022, 12, 25, 10, 0));
  CHECK_FALSE(parse_timestamp("31/31/2023", DatePolicy::DayFirst).has_value());
  CHECK_FALSE(parse_timestamp("31/31/2023", DatePolicy::MonthFirst).has_value());
  CHECK_FALSE(parse_timestamp("30/02/2023 10:00", DatePolicy::DayFirst).has_value());
  CHECK_THROWS_AS(parse_timestamp("02/03/2023 08:00", DatePolicy::Auto), InputError);

  // majority vote over the file's unambiguous rows
  const std::vector<std::string> file = {"25/12/2022 10:00", "02/03/2023 08:00", "13/01/2023 09:00"};
  int first_big = 0, second_big = 0;
  for (const auto& s : file) {
    const int a = std::stoi(s.substr(0, 2)), b = std::stoi(s.substr(3, 2));
    first_big += a > 12;
    second_big += b > 12;
  }
  const DatePolicy expect = first_big >= second_big ? DatePolicy::DayFirst : DatePolicy::MonthFirst;
  CHECK(resolve_date_policy(file) == expect);
  CHECK(parse_timestamp(file[1], resolve_date_policy(file)) == at(2023, 3, 2, 8, 0));

  const std::vector<std::string> us = {"12/25/2022 10:00", "03/02/2023 08:00"};
  CHECK(resolve_date_policy(us) == DatePolicy::MonthFirst);
  const std::vector<std::string> ambiguous = {"02/03/2023 08:00", "04/05/2023 08:00"};
  CHECK_THROWS_AS(resolve_date_policy(ambiguous), InputError);
}

TEST_CASE("durations and authorities") {
  CHECK(parse_duration_minutes("01:30:00") == 90.0);
  CHECK(parse_duration_minutes("45") == 45.0);
  CHECK_FALSE(parse_duration_minutes("").has_value());
  CHECK(standardize_authority("  glasgow   CITY ") == "Glasgow City");
}

TEST_CASE("curation rules") {
  std::vector<RawSessionRecord> in = {
      raw("A", "25/12/2022 10:00", 30, 10, 2),  // kept
      raw("A", "26/12/2022 10:00", 30, 0, 0),   // zero energy
      raw("A", "27/12/2022 10:00", 30, 150, 5), // over capacity
      raw("62266", "27/12/2022 11:00", 30, 10, 2),
      raw("A", "27/12/2022 12:00", 0, 10, 2),   // zero duration
      raw("A", "27/12/2022 13:00", 30, 10, 80), // over tariff
      raw("A", "31/31/2023", 30, 10, 2),        // bad timestamp
      raw("A", "28/12/2022 10:00", 30, 10, 2),  // excluded window
  };
  in.push_back(raw("A", "29/12/2022 10:00", 30, 10, 2));
  in.back().energy_kwh.reset();  // null field
  in.push_back(raw("B", "29/12/2022 10:00", 30, -1, 2));  // negative counts as null
  CurationConfig cfg;
  cfg.excluded_windows = {{ymd(2022, 12, 28), ymd(2022, 12, 28)}};
  const auto [kept, rep] = curate(in, cfg);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].day == ymd(2022, 12, 25));
  CHECK(kept[0].local_authority == "Glasgow City");
  CHECK(rep.dropped.at(kRuleZeroEnergy) == 1);
  CHECK(rep.dropped.at(kRuleOverCapacity) == 1);
  CHECK(rep.dropped.at(kRuleExcludedCpid) == 1);
  CHECK(rep.dropped.at(kRuleZeroDuration) == 1);
  CHECK(rep.dropped.at(kRuleOverTariff) == 1);
  CHECK(rep.dropped.at(kRuleBadTimestamp) == 1);
  CHECK(rep.dropped.at(kRuleExcludedWindow) == 1);
  CHECK(rep.dropped.at(kRuleNullField) == 2);
  CHECK(rep.kept + rep.dropped_total() == rep.input_total);
  CHECK(rep.input_total == in.size());

  const auto ex = default_excluded_cpids();
  CHECK(std::set<std::string>(ex.begin(), ex.end()) ==
        std::set<std::string>{"62201", "62202", "62203", "62266", "62261", "50433", "62123"});

  CurationConfig bad = cfg;
  bad.capacity_cap_kwh = 0;
  CHECK_THROWS_AS(curate(in, bad), InputError);
}

TEST_CASE("curation is idempotent") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> day(1, 28), mon(1, 12), hh(0, 23);
  std::uniform_real_distribution<double> kwh(-5, 130), cost(0, 60), dur(-5, 300);
  std::vector<RawSessionRecord> in;
  const std::vector<std::string> ids = {"A", "B", "62201", "C"};
  for (int i = 0; i < 400; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02d/%02d/2023 %02d:15", day(rng), mon(rng), hh(rng));
    in.push_back(raw(ids[static_cast<std::size_t>(i) % ids.size()], buf, std::max(0.0, dur(rng)), kwh(rng), cost(rng)));
  }
  in.push_back(raw("A", "25/12/2023 10:00", 10, 5, 1));
  CurationConfig cfg;
  cfg.excluded_windows = {{ymd(2023, 6, 1), ymd(2023, 6, 30)}};
  const auto [once, r1] = curate(in, cfg);
  const auto again_raw = to_raw(once);
  const auto [twice, r2] = curate(again_raw, cfg);
  REQUIRE(once.size() == twice.size());
  CHECK(r2.dropped_total() == 0);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(once[i].cpid == twice[i].cpid);
    CHECK(once[i].start == twice[i].start);
    CHECK(once[i].energy_kwh == twice[i].energy_kwh);
    CHECK(once[i].cost == twice[i].cost);
  }
}

TEST_CASE("curation refuses a file with only ambiguous dates") {
  const std::vector<RawSessionRecord> in = {raw("A", "02/03/2023 08:00", 30, 10, 1)};
  CHECK_THROWS_AS(curate(in, {}), InputError);
  CurationConfig cfg;
  cfg.date_policy = DatePolicy::MonthFirst;
  const auto [kept, rep] = curate(in, cfg);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].day == ymd(2023, 2, 3));
}

TEST_CASE("daily aggregation") {
  const auto st = stations();
  SUBCASE("counting with zero fill") {
    const Date d1 = ymd(2024, 3, 1);
    const std::vector<CleanSession> s = {session("A", d1), session("A", d1, 12), session("A", d1 + days{2})};
    const auto agg = aggregate_daily(s, st);
    REQUIRE(agg.rows.size() == 3);
    CHECK(agg.rows[0].y == 2);
    CHECK(agg.rows[1].y == 0);
    CHECK(agg.rows[2].y == 1);
  }
  SUBCASE("single session") {
    const auto agg = aggregate_daily(std::vector<CleanSession>{session("B", ymd(2024, 3, 5))}, st);
    REQUIRE(agg.rows.size() == 1);
    CHECK(agg.rows[0].y == 1);
    CHECK(agg.rows[0].connector_class == ConnectorClass::Rapid);
    CHECK_FALSE(agg.rows[0].is_public_access);
    CHECK(agg.rows[0].is_free);
  }
  SUBCASE("tariff start switches is_free") {
    const std::vector<CleanSession> s = {session("A", ymd(2024, 3, 8)), session("A", ymd(2024, 3, 12))};
    const auto agg = aggregate_daily(s, st);
    for (const auto& r : agg.rows) CHECK(r.is_free == (r.day < ymd(2024, 3, 10)));
  }
  SUBCASE("unknown CPIDs are dropped and reported") {
    const std::vector<CleanSession> s = {session("A", ymd(2024, 3, 8)), session("Z", ymd(2024, 3, 8))};
    const auto agg = aggregate_daily(s, st);
    CHECK(agg.dropped_unknown_cpid == 1);
    CHECK(agg.unknown_cpids == std::vector<std::string>{"Z"});
    CHECK(agg.rows.size() == 1);
  }
  SUBCASE("policies, windows and conservation") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> off(0, 40);
    std::vector<CleanSession> s;
    for (int i = 0; i < 120; ++i) s.push_back(session(i % 3 ? "A" : "B", ymd(2024, 2, 1) + days{off(rng) + (i % 3 ? 0 : 15)}));
    const std::vector<DateWindow> skip = {{ymd(2024, 2, 20), ymd(2024, 2, 22)}};
    std::vector<CleanSession> kept;
    for (const auto& x : s)
      if (!skip[0].contains(x.day)) kept.push_back(x);
    for (ZeroFill z : {ZeroFill::ActiveWindow, ZeroFill::ObservedOnly, ZeroFill::FullRange}) {
      const auto agg = aggregate_daily(kept, st, z, skip);
      long total = 0;
      std::set<std::pair<std::string, Date>> keys;
      std::map<std::string, std::pair<Date, Date>> window;
      for (const auto& x : kept) {
        auto [it, fresh] = window.try_emplace(x.cpid, x.day, x.day);
        it->second.first = std::min(it->second.first, x.day);
        it->second.second = std::max(it->second.second, x.day);
      }
      for (const auto& r : agg.rows) {
        total += r.y;
        CHECK(r.y >= 0);
        CHECK(keys.insert({r.cpid, r.day}).second);
        CHECK_FALSE(skip[0].contains(r.day));
        if (z == ZeroFill::ActiveWindow) {
          CHECK(r.day >= window[r.cpid].first);
          CHECK(r.day <= window[r.cpid].second);
        }
        if (z == ZeroFill::ObservedOnly) CHECK(r.y > 0);
      }
      CHECK(total == static_cast<long>(kept.size()));
      if (z == ZeroFill::ActiveWindow) {
        std::size_t expect = 0;
        for (const auto& [id, w] : window)
          for (Date d = w.first; d <= w.second; d += days{1}) expect += !skip[0].contains(d);
        CHECK(agg.rows.size() == expect);
      }
      CHECK(std::is_sorted(agg.rows.begin(), agg.rows.end(), [](const DailyPanelRow& a, const DailyPanelRow& b) {
        return std::tie(a.cpid, a.day) < std::tie(b.cpid, b.day);
      }));
    }
  }
}

TEST_CASE("temperature spline basis") {
  CHECK_THROWS_WITH_AS(NaturalSplineBasis::fit(std::vector<double>(10, 4.0)), doctest::Contains("degenerate spline basis"),
                       InputError);
  std::vector<double> t(200);
  for (int i = 0; i < 200; ++i) t[static_cast<std::size_t>(i)] = -5.0 + 30.0 * i / 199.0;
  const auto b = NaturalSplineBasis::fit(t);
  CHECK(b.df() == 3);
  CHECK(b.lower() == -5.0);
  CHECK(b.upper() == 25.0);
  // type-7 quantiles of an even grid
  REQUIRE(b.interior_knots().size() == 2);
  CHECK(b.interior_knots()[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(b.interior_knots()[1] == doctest::Approx(15.0).epsilon(1e-12));

  CHECK((b.evaluate(-5.0) - b.evaluate(-20.0)).norm() == 0.0);
  CHECK((b.evaluate(40.0) - b.evaluate(25.0)).norm() == 0.0);

  const Eigen::MatrixXd B = b.evaluate(t);
  Eigen::MatrixXd L(200, 2);
  L.col(0).setOnes();
  for (int i = 0; i < 200; ++i) L(i, 1) = t[static_cast<std::size_t>(i)];
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd coef = L.colPivHouseholderQr().solve(B.col(c));
    const Eigen::VectorXd res = B.col(c) - L * coef;
    CHECK(res.squaredNorm() / 200.0 > 1e-6);
  }
  // a natural spline basis with intercept spans linear functions
  Eigen::MatrixXd full(200, 4);
  full << Eigen::VectorXd::Ones(200), B;
  const Eigen::VectorXd tv = L.col(1);
  const Eigen::VectorXd fit = full * full.colPivHouseholderQr().solve(tv);
  CHECK((fit - tv).cwiseAbs().maxCoeff() < 1e-8);
  // zero second derivative at the boundaries
  const double h = 1e-3;
  for (double edge : {-5.0 + 2 * h, 25.0 - 2 * h}) {
    const Eigen::RowVectorXd d2 = (b.evaluate(edge + h) - 2 * b.evaluate(edge) + b.evaluate(edge - h)) / (h * h);
    CHECK(d2.cwiseAbs().maxCoeff() < 0.05 * std::max(1.0, (b.evaluate(10.0 + h) - 2 * b.evaluate(10.0) + b.evaluate(10.0 - h)).cwiseAbs().maxCoeff() / (h * h)));
  }
}

TEST_CASE("frame construction and split") {
  const auto st = stations();
  std::vector<CleanSession> s;
  const Date first = ymd(2024, 9, 30);
  for (int i = 0; i < 14; ++i) {
    s.push_back(session("A", first + days{i}));
    if (i % 2 == 0) s.push_back(session("B", first + days{i}));
  }
  const auto agg = aggregate_daily(s, st);
  const auto w = weather_for(first, 14);
  const auto fr = build_frame(agg.rows, w, ymd(2024, 10, 6));
  const ModelFrame& f = fr.frame;
  CHECK(f.column_names == design_column_names());
  CHECK(f.column_names == std::vector<std::string>{"intercept", "rapid", "public", "free", "monday", "tuesday",
                                                   "wednesday", "thursday", "saturday", "sunday", "temp_spline_1",
                                                   "temp_spline_2", "temp_spline_3", "wind", "humidity"});
  CHECK(f.days.size() == 14);
  CHECK(f.cpids == std::vector<std::string>{"A", "B"});
  for (Eigen::Index c = 0; c < f.X.cols(); ++c) CHECK(f.X.col(c).cwiseAbs().maxCoeff() > 0.0);
  const int mon = f.column("monday");
  for (std::size_t r = 0; r < f.rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const double dsum = f.X.row(ri).segment(mon, 6).sum();
    CHECK((dsum == 0.0 || dsum == 1.0));
    if (weekday_index(f.row_day(r)) == 4) CHECK(dsum == 0.0);
    if (f.row_cpid(r) == "B") {
      CHECK(f.X(ri, f.column("rapid")) == 1.0);
      CHECK(f.X(ri, f.column("public")) == 0.0);
      CHECK(f.X(ri, f.column("free")) == 1.0);
    }
    CHECK(f.X(ri, f.column("wind")) == w.at(f.row_day(r)).wind_ms);
  }

  const auto [train, test] = temporal_split(f, ymd(2024, 10, 6));
  CHECK(train.rows() + test.rows() == f.rows());
  for (std::size_t r = 0; r < train.rows(); ++r) CHECK(train.row_day(r) < ymd(2024, 10, 6));
  for (std::size_t r = 0; r < test.rows(); ++r) CHECK(test.row_day(r) >= ymd(2024, 10, 6));
  bool saw5 = false, saw6 = false;
  for (std::size_t r = 0; r < train.rows(); ++r) saw5 = saw5 || train.row_day(r) == ymd(2024, 10, 5);
  for (std::size_t r = 0; r < test.rows(); ++r) saw6 = saw6 || test.row_day(r) == ymd(2024, 10, 6);
  CHECK(saw5);
  CHECK(saw6);
  CHECK_THROWS_AS(temporal_split(f, ymd(2024, 9, 1)), InputError);
  CHECK_THROWS_AS(temporal_split(f, ymd(2025, 1, 1)), InputError);

  auto missing = w;
  missing.erase(first + days{3});
  CHECK_THROWS_WITH_AS(build_frame(agg.rows, missing), doctest::Contains("2024-10-03"), InputError);
}

TEST_CASE("file round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "chargecast_ingest_test";
  std::filesystem::create_directories(dir);
  const auto st = stations();
  write_stations(dir / "stations.csv", st);
  const auto st2 = read_stations(dir / "stations.csv");
  REQUIRE(st2.size() == st.size());
  for (const auto& [id, m] : st) {
    const auto& n = st2.at(id);
    CHECK(n.lon == m.lon);
    CHECK(n.lat == m.lat);
    CHECK(n.connector_class == m.connector_class);
    CHECK(n.is_public_access == m.is_public_access);
    CHECK(n.tariff_start_date == m.tariff_start_date);
  }
  std::vector<CleanSession> s;
  for (int i = 0; i < 10; i += 2) s.push_back(session("A", ymd(2024, 3, 1) + days{i}));
  for (int i = 1; i < 10; i += 3) s.push_back(session("B", ymd(2024, 3, 1) + days{i}));
  const auto agg = aggregate_daily(s, st);
  const auto fr = build_frame(agg.rows, weather_for(ymd(2024, 3, 1), 10));
  write_panel(dir / "panel.csv", agg.rows);
  const auto p2 = read_panel(dir / "panel.csv");
  REQUIRE(p2.size() == agg.rows.size());
  for (std::size_t i = 0; i < p2.size(); ++i) {
    CHECK(p2[i].y == agg.rows[i].y);
    CHECK(p2[i].day == agg.rows[i].day);
    CHECK(p2[i].is_free == agg.rows[i].is_free);
    CHECK(p2[i].cpid == agg.rows[i].cpid);
  }
  write_frame(dir / "frame.csv", fr.frame);
  const auto f2 = read_frame(dir / "frame.csv");
  CHECK(f2.y == fr.frame.y);
  CHECK(f2.X == fr.frame.X);
  CHECK(f2.days == fr.frame.days);
  CHECK(f2.column_names == fr.frame.column_names);
  std::filesystem::remove_all(dir);
}
