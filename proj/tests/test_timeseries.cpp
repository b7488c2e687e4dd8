#include <doctest.h>

#include <numeric>
#include <random>

#include "crossgrid/timeseries.hpp"
#include "test_util.hpp"

using namespace crossgrid;
using namespace crossgrid::timeseries;
using crossgrid::testing::TempDir;
using crossgrid::testing::write_file;

namespace {

const Day d0 = parse_date("2014-04-01");

DailySeries daily(const std::string& id, std::size_t n, double base, double step = 1.0) {
  DailySeries s;
  s.id = id;
  for (std::size_t i = 0; i < n; ++i) {
    s.days.push_back(d0 + static_cast<Day>(i));
    s.values.emplace_back(base + step * static_cast<double>(i));
  }
  return s;
}

WeatherSeries weather(std::size_t n) {
  WeatherSeries w;
  w.station_id = "ws";
  w.channels = {daily("ws", n, 5.0, 0.5), daily("ws", n, 100.0, 3.0), daily("ws", n, 2.0, 0.1)};
  return w;
}

RawSeries raw(std::vector<std::int64_t> ts, std::vector<double> v) {
  RawSeries s;
  s.id = "r";
  s.timestamps = std::move(ts);
  s.values = std::move(v);
  return s;
}

NormStats identity() {
  NormStats s;
  for (auto& r : s.ranges) r = {0.0, 1.0};
  return s;
}

}  // namespace

TEST_CASE("dates round-trip and timestamps floor to UTC days") {
  CHECK(format_date(parse_date("2014-04-22")) == "2014-04-22");
  CHECK(day_of_timestamp(0) == 0);
  CHECK(day_of_timestamp(86399) == 0);
  CHECK(day_of_timestamp(86400) == 1);
  CHECK(day_of_timestamp(-1) == -1);
  CHECK(DayRange::parse("2014-04-22..2014-06-01").length() == 41);
  CHECK_THROWS_AS(parse_date("2014-13-01"), Error);
  CHECK_THROWS_AS(DayRange::parse("2014-06-01..2014-04-01"), Error);
}

TEST_CASE("load_raw sorts and keeps the last duplicate") {
  TempDir dir;
  SUBCASE("out of order rows") {
    auto s = load_raw(write_file(dir / "a.csv", "unix_ts,value\n30,3\n10,1\n20,2\n"));
    CHECK(s.timestamps == std::vector<std::int64_t>{10, 20, 30});
    CHECK(s.values == std::vector<double>{1, 2, 3});
  }
  SUBCASE("duplicate timestamp") {
    LoadReport rep;
    auto s = load_raw(write_file(dir / "b.csv", "unix_ts,value\n20,1\n10,5\n20,7\n"), {}, &rep);
    CHECK(s.size() == 2);
    CHECK(s.values.back() == 7.0);
    CHECK(rep.duplicates == 1);
  }
  SUBCASE("configurable column names") {
    RawColumns cols{"Time", "Aggregate", ';'};
    auto s = load_raw(write_file(dir / "c.csv", "Time;Aggregate;Appliance1\n10;300;1\n18;310;2\n"), cols);
    CHECK(s.values == std::vector<double>{300, 310});
  }
  SUBCASE("errors name the line") {
    CHECK_THROWS_WITH_AS(load_raw(write_file(dir / "d.csv", "unix_ts,value\n10,1\nabc,2\n")), doctest::Contains(":3"),
                         Error);
    CHECK_THROWS_AS(load_raw(write_file(dir / "e.csv", "unix_ts,value\n")), Error);
  }
}

TEST_CASE("load_raw row count for a two-year 8-second export") {
  // 2 * 365 * 86400 / 8 readings; streamed straight into the daily bucketer
  const std::int64_t rows = 2LL * 365 * 86400 / 8;
  CHECK(rows == 7884000);
  DailyAggregator agg(DailyStatistic::sum, 86400.0 / 8.0, 0.9);
  for (std::int64_t i = 0; i < rows; ++i) agg.add(i * 8, 1.0);
  auto s = agg.finish("b", "W");
  CHECK(s.size() == 730);
  CHECK(s.valid_count() == 730);
  CHECK(*s.values[0] == 10800.0);
}

TEST_CASE("resample_daily_sum") {
  SUBCASE("sums one day") {
    auto s = resample_daily_sum(raw({0, 3600, 7200}, {2, 3, 5}), {3.0, 0.9});
    REQUIRE(s.size() == 1);
    CHECK(*s.values[0] == 10.0);
  }
  SUBCASE("half coverage is missing") {
    // 24 hourly readings expected, 12 observed: coverage 0.5 < 0.9
    std::vector<std::int64_t> ts;
    std::vector<double> v;
    for (int h = 0; h < 24; ++h) ts.push_back(h * 3600), v.push_back(1.0);
    for (int h = 0; h < 12; ++h) ts.push_back(86400 + h * 3600), v.push_back(1.0);
    auto s = resample_daily_sum(raw(ts, v), {24.0, 0.9});
    REQUIRE(s.size() == 2);
    CHECK(*s.values[0] == 24.0);
    CHECK_FALSE(s.values[1].has_value());
  }
  SUBCASE("two full days, expected count inferred from the sampling step") {
    std::vector<std::int64_t> ts;
    std::vector<double> v;
    for (int k = 0; k < 2 * 96; ++k) ts.push_back(k * 900), v.push_back(2.0);
    auto s = resample_daily_sum(raw(ts, v));
    CHECK(s.size() == 2);
    CHECK(s.valid_count() == 2);
    CHECK(*s.values[1] == 192.0);
  }
  SUBCASE("calendar gaps become missing days") {
    auto s = resample_daily_sum(raw({0, 3 * 86400}, {1, 1}), {1.0, 0.9});
    CHECK(s.size() == 4);
    CHECK(s.valid_count() == 2);
  }
  CHECK_THROWS_AS(resample_daily_sum(raw({}, {})), Error);
}

TEST_CASE("resample_daily_mean") {
  CHECK(*resample_daily_mean(raw({0, 60}, {10, 20}), {2.0, 0.9}).values[0] == 15.0);
  CHECK(*resample_daily_mean(raw({0, 60, 120}, {4, 4, 4}), {3.0, 0.9}).values[0] == 4.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10, 30);
  std::vector<std::int64_t> ts;
  std::vector<double> v;
  for (int k = 0; k < 144; ++k) ts.push_back(k * 600), v.push_back(u(rng));
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  CHECK(*resample_daily_mean(raw(ts, v)).values[0] == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("daily sums are unchanged by chunked streaming") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 500);
  std::vector<std::int64_t> ts;
  std::vector<double> v;
  for (int k = 0; k < 5 * 288; ++k) {
    if (rng() % 10 == 0) continue;
    ts.push_back(k * 300 + 11), v.push_back(u(rng));
  }
  auto whole = resample_daily_sum(raw(ts, v), {288.0, 0.5});
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t cut = rng() % ts.size();
    DailyAggregator agg(DailyStatistic::sum, 288.0, 0.5);
    for (std::size_t i = 0; i < cut; ++i) agg.add(ts[i], v[i]);
    for (std::size_t i = cut; i < ts.size(); ++i) agg.add(ts[i], v[i]);
    auto chunked = agg.finish("r", "");
    CHECK(chunked.days == whole.days);
    CHECK(chunked.values == whole.values);
  }
  // split on a day boundary: per-part resamples concatenate to the whole
  std::size_t boundary = static_cast<std::size_t>(std::lower_bound(ts.begin(), ts.end(), 2 * 86400) - ts.begin());
  auto a = resample_daily_sum(raw({ts.begin(), ts.begin() + static_cast<std::ptrdiff_t>(boundary)},
                                  {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(boundary)}),
                              {288.0, 0.5});
  auto b = resample_daily_sum(raw({ts.begin() + static_cast<std::ptrdiff_t>(boundary), ts.end()},
                                  {v.begin() + static_cast<std::ptrdiff_t>(boundary), v.end()}),
                              {288.0, 0.5});
  a.days.insert(a.days.end(), b.days.begin(), b.days.end());
  a.values.insert(a.values.end(), b.values.begin(), b.values.end());
  CHECK(a.days == whole.days);
  CHECK(a.values == whole.values);
}

TEST_CASE("fit_minmax") {
  DailySeries e = daily("b", 2, 0.0, 10.0);
  auto w = weather(2);
  NormStats s = fit_minmax(e, w);
  CHECK(s.ranges[consumption].min == 0.0);
  CHECK(s.ranges[consumption].max == 10.0);

  SUBCASE("fit range excludes later extremes") {
    DailySeries long_e = daily("b", 10, 0.0, 1.0);
    long_e.values[9] = 100.0;
    auto ws = weather(10);
    NormStats fit = fit_minmax(long_e, ws, DayRange{d0, d0 + 4});
    CHECK(fit.ranges[consumption].max == 4.0);
    CHECK(fit.apply(consumption, 100.0) == 25.0);
    fit.clip = true;
    CHECK(fit.apply(consumption, 100.0) == 1.0);
  }
  SUBCASE("constant channel maps to zero") {
    DailySeries c = daily("b", 3, 7.0, 0.0);
    NormStats fit = fit_minmax(c, weather(3));
    CHECK(fit.ranges[consumption].min == fit.ranges[consumption].max);
    CHECK(fit.apply(consumption, 7.0) == 0.0);
  }
}

TEST_CASE("normalisation round trip") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  NormStats s;
  for (auto& r : s.ranges) {
    double a = u(rng), b = u(rng);
    r = {std::min(a, b), std::max(a, b)};
  }
  for (int k = 0; k < 1000; ++k) {
    double x = u(rng);
    std::size_t c = static_cast<std::size_t>(k) % channel_count;
    CHECK(std::abs(s.invert(c, s.apply(c, x)) - x) <= 1e-12 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("build_windows") {
  SUBCASE("21 valid days give 8 windows") {
    auto ds = build_windows(daily("b", 21, 0), weather(21), identity());
    CHECK(ds.size() == 21 - 13);
  }
  SUBCASE("14 days give exactly one window with the documented layout") {
    auto e = daily("b", 14, 0);
    auto w = weather(14);
    auto ds = build_windows(e, w, identity());
    REQUIRE(ds.size() == 1);
    const Window& win = ds.windows[0];
    CHECK(win.start == d0);
    for (std::size_t t = 0; t < 7; ++t) {
      CHECK(win.x(t, 0) == *e.values[t]);
      CHECK(win.x(t, 1) == *w.channels[0].values[t]);
      CHECK(win.x(t, 2) == *w.channels[1].values[t]);
      CHECK(win.x(t, 3) == *w.channels[2].values[t]);
      CHECK(win.x(t, 4) == *w.channels[0].values[t + 7]);
      CHECK(win.x(t, 5) == *w.channels[1].values[t + 7]);
      CHECK(win.x(t, 6) == *w.channels[2].values[t + 7]);
      CHECK(win.target[t] == *e.values[t + 7]);
    }
  }
  SUBCASE("a missing day breaks contiguity") {
    auto e = daily("b", 14, 0);
    e.values[6].reset();
    auto ds = build_windows(e, weather(14), identity());
    CHECK(ds.empty());
    CHECK_FALSE(ds.diagnostics.empty());
  }
  SUBCASE("missing weather also counts") {
    auto w = weather(21);
    w.channels[2].values[20].reset();
    CHECK(build_windows(daily("b", 21, 0), w, identity()).size() == 7);
  }
  SUBCASE("range restricts both weeks") {
    auto range = DayRange{d0 + 2, d0 + 17};
    CHECK(build_windows(daily("b", 30, 0), weather(30), identity(), range).size() == 16 - 13);
  }
  SUBCASE("normalised values lie in [0, 1] under fitted stats") {
    auto e = daily("b", 40, 3, 2);
    auto w = weather(40);
    auto ds = build_windows(e, w, fit_minmax(e, w));
    for (const auto& win : ds.windows) {
      for (double v : win.input) CHECK((v >= 0.0 && v <= 1.0));
      for (double v : win.target) CHECK((v >= 0.0 && v <= 1.0));
    }
  }
}

TEST_CASE("window count equals the sum over valid runs of max(0, run - 13)") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 60;
    auto e = daily("b", n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng() % 9 == 0) e.values[i].reset();
    }
    std::size_t expected = 0, run = 0;
    for (std::size_t i = 0; i <= n; ++i) {
      if (i < n && e.values[i]) {
        ++run;
      } else {
        expected += run > 13 ? run - 13 : 0;
        run = 0;
      }
    }
    auto w = weather(n);
    CHECK(build_windows(e, w, identity()).size() == expected);
    CHECK(count_windows(e, w) == expected);
  }
}

TEST_CASE("daily and weather files round trip") {
  TempDir dir;
  auto e = daily("b", 5, 1.5, 0.25);
  e.values[2].reset();
  write_daily(dir / "b.csv", e);
  auto back = read_daily(dir / "b.csv", "b");
  CHECK(back.days == e.days);
  CHECK(back.values == e.values);

  auto w = weather(4);
  write_weather(dir / "w.csv", w);
  auto wb = read_weather(dir / "w.csv", "ws");
  for (std::size_t c = 0; c < 3; ++c) CHECK(wb.channels[c].values == w.channels[c].values);
}

TEST_CASE("weather raw files resample to daily means") {
  TempDir dir;
  std::string text = "unix_ts,air_temp,solar_irradiance,wind_speed\n";
  for (int h = 0; h < 48; ++h) {
    text += std::to_string(h * 3600) + "," + std::to_string(h < 24 ? 10 : 20) + ",100," + (h == 5 ? "NA" : "3") + "\n";
  }
  auto w = resample_weather(load_weather_raw(write_file(dir / "w.csv", text)), "ws");
  CHECK(*w.channels[0].values[0] == 10.0);
  CHECK(*w.channels[0].values[1] == 20.0);
  CHECK(*w.channels[2].values[0] == 3.0);
}
