#include "crossgrid/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "crossgrid/delimited.hpp"

namespace crossgrid::timeseries {

namespace {

bool parse_double(const std::string& s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_timestamp(const std::string& s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec == std::errc() && ptr == s.data() + s.size()) return true;
  // fractional seconds are truncated
  double d = 0;
  if (parse_double(s, d)) {
    out = static_cast<std::int64_t>(std::floor(d));
    return true;
  }
  return false;
}

std::string where(const DelimitedReader& r) { return r.path().string() + ":" + std::to_string(r.line_number()); }

}  // namespace

RawSeries normalize_order(RawSeries s, std::size_t* duplicates) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.timestamps[a] < s.timestamps[b]; });
  RawSeries out;
  out.id = std::move(s.id);
  out.unit = std::move(s.unit);
  out.timestamps.reserve(idx.size());
  out.values.reserve(idx.size());
  std::size_t dups = 0;
  for (std::size_t i : idx) {
    if (!out.timestamps.empty() && out.timestamps.back() == s.timestamps[i]) {
      out.values.back() = s.values[i];  // stable sort keeps file order, so this is the later row
      ++dups;
    } else {
      out.timestamps.push_back(s.timestamps[i]);
      out.values.push_back(s.values[i]);
    }
  }
  if (duplicates) *duplicates = dups;
  return out;
}

RawSeries load_raw(const std::filesystem::path& path, const RawColumns& columns, LoadReport* report) {
  DelimitedReader reader(path, columns.delimiter);
  const std::size_t ts_col = reader.column(columns.timestamp);
  const std::size_t v_col = reader.column(columns.value);
  RawSeries s;
  s.id = path.stem().string();
  s.unit = "W";
  std::vector<std::string> f;
  bool sorted = true;
  while (reader.next(f)) {
    if (f.size() <= std::max(ts_col, v_col)) throw Error(where(reader) + ": too few fields");
    std::int64_t ts = 0;
    if (!parse_timestamp(f[ts_col], ts)) throw Error(where(reader) + ": unparseable timestamp '" + f[ts_col] + "'");
    if (is_missing_cell(f[v_col])) continue;
    double v = 0;
    if (!parse_double(f[v_col], v)) throw Error(where(reader) + ": unparseable value '" + f[v_col] + "'");
    if (!s.timestamps.empty() && ts <= s.timestamps.back()) sorted = false;
    s.timestamps.push_back(ts);
    s.values.push_back(v);
  }
  if (s.timestamps.empty()) throw Error(path.string() + ": no readings");
  LoadReport rep;
  rep.rows_read = s.size();
  if (!sorted) s = normalize_order(std::move(s), &rep.duplicates);
  if (report) *report = rep;
  return s;
}

std::optional<double> DailySeries::at(Day d) const {
  auto it = std::lower_bound(days.begin(), days.end(), d);
  if (it == days.end() || *it != d) return std::nullopt;
  return values[static_cast<std::size_t>(it - days.begin())];
}

std::size_t DailySeries::valid_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](const auto& v) { return v.has_value(); }));
}

DailyAggregator::DailyAggregator(DailyStatistic stat, double expected_per_day, double threshold)
    : stat_(stat), expected_(expected_per_day), threshold_(threshold) {}

void DailyAggregator::add(std::int64_t unix_seconds, double value) {
  if (open_ && unix_seconds <= last_ts_) throw Error("DailyAggregator: timestamps must be strictly increasing");
  Day d = day_of_timestamp(unix_seconds);
  if (open_ && d != day_) {
    close_day();
    // calendar gaps become missing days
    for (Day g = day_ + 1; g < d; ++g) {
      out_.days.push_back(g);
      out_.values.emplace_back(std::nullopt);
    }
  }
  if (!open_ || d != day_) {
    open_ = true;
    day_ = d;
    sum_ = 0.0;
    count_ = 0;
  }
  sum_ += value;
  ++count_;
  last_ts_ = unix_seconds;
}

void DailyAggregator::close_day() {
  out_.days.push_back(day_);
  bool covered = expected_ <= 0.0 || static_cast<double>(count_) >= threshold_ * expected_;
  if (covered && count_ > 0) {
    out_.values.emplace_back(stat_ == DailyStatistic::sum ? sum_ : sum_ / static_cast<double>(count_));
  } else {
    out_.values.emplace_back(std::nullopt);
  }
}

DailySeries DailyAggregator::finish(std::string id, std::string unit) {
  if (open_) close_day();
  open_ = false;
  DailySeries out = std::move(out_);
  out_ = {};
  out.id = std::move(id);
  out.unit = std::move(unit);
  return out;
}

double median_step(const RawSeries& s) {
  if (s.size() < 2) return 86400.0;
  std::vector<std::int64_t> steps(s.size() - 1);
  for (std::size_t i = 1; i < s.size(); ++i) steps[i - 1] = s.timestamps[i] - s.timestamps[i - 1];
  auto mid = steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2);
  std::nth_element(steps.begin(), mid, steps.end());
  return static_cast<double>(std::max<std::int64_t>(*mid, 1));
}

namespace {

DailySeries resample(const RawSeries& s, const CoverageRule& rule, DailyStatistic stat, std::string unit) {
  if (s.size() == 0) throw Error("cannot resample an empty series '" + s.id + "'");
  double expected = rule.expected_per_day > 0.0 ? rule.expected_per_day : 86400.0 / median_step(s);
  DailyAggregator agg(stat, expected, rule.threshold);
  for (std::size_t i = 0; i < s.size(); ++i) agg.add(s.timestamps[i], s.values[i]);
  return agg.finish(s.id, std::move(unit));
}

}  // namespace

DailySeries resample_daily_sum(const RawSeries& s, const CoverageRule& rule) {
  return resample(s, rule, DailyStatistic::sum, s.unit);
}

DailySeries resample_daily_mean(const RawSeries& s, const CoverageRule& rule) {
  return resample(s, rule, DailyStatistic::mean, s.unit);
}

void write_daily(const std::filesystem::path& path, const DailySeries& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  if (!s.unit.empty()) out << "# unit: " << s.unit << '\n';
  out << "date,value\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << format_date(s.days[i]) << ',';
    if (s.values[i]) {
      out << *s.values[i];
    } else {
      out << "NA";
    }
    out << '\n';
  }
}

DailySeries read_daily(const std::filesystem::path& path, std::string id) {
  DelimitedReader reader(path);
  const std::size_t dc = reader.column("date");
  const std::size_t vc = reader.column("value");
  DailySeries s;
  s.id = id.empty() ? path.stem().string() : std::move(id);
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() <= std::max(dc, vc)) throw Error(where(reader) + ": too few fields");
    Day d = parse_date(f[dc]);
    if (!s.days.empty() && d <= s.days.back()) throw Error(where(reader) + ": dates must be strictly increasing");
    s.days.push_back(d);
    double v = 0;
    if (is_missing_cell(f[vc])) {
      s.values.emplace_back(std::nullopt);
    } else if (parse_double(f[vc], v)) {
      s.values.emplace_back(v);
    } else {
      throw Error(where(reader) + ": unparseable value '" + f[vc] + "'");
    }
  }
  return s;
}

std::array<RawSeries, 3> load_weather_raw(const std::filesystem::path& path, char delimiter) {
  DelimitedReader reader(path, delimiter);
  const std::size_t tc = reader.column("unix_ts");
  const std::array<std::size_t, 3> cols{reader.column("air_temp"), reader.column("solar_irradiance"),
                                        reader.column("wind_speed")};
  static const std::array<const char*, 3> units{"degC", "W/m2", "m/s"};
  std::array<RawSeries, 3> out;
  for (std::size_t c = 0; c < 3; ++c) {
    out[c].id = path.stem().string();
    out[c].unit = units[c];
  }
  std::vector<std::string> f;
  bool sorted = true;
  std::int64_t last = 0;
  bool any = false;
  while (reader.next(f)) {
    if (f.size() < reader.header().size()) throw Error(where(reader) + ": too few fields");
    std::int64_t ts = 0;
    if (!parse_timestamp(f[tc], ts)) throw Error(where(reader) + ": unparseable timestamp '" + f[tc] + "'");
    if (any && ts <= last) sorted = false;
    last = ts;
    any = true;
    for (std::size_t c = 0; c < 3; ++c) {
      const auto& cell = f[cols[c]];
      if (is_missing_cell(cell)) continue;
      double v = 0;
      if (!parse_double(cell, v)) throw Error(where(reader) + ": unparseable value '" + cell + "'");
      out[c].timestamps.push_back(ts);
      out[c].values.push_back(v);
    }
  }
  if (!any) throw Error(path.string() + ": no readings");
  if (!sorted) {
    for (auto& s : out) s = normalize_order(std::move(s));
  }
  return out;
}

WeatherSeries resample_weather(const std::array<RawSeries, 3>& raw, std::string station_id, const CoverageRule& rule) {
  WeatherSeries w;
  w.station_id = std::move(station_id);
  for (std::size_t c = 0; c < 3; ++c) {
    w.channels[c] = resample_daily_mean(raw[c], rule);
    w.channels[c].id = w.station_id;
  }
  return w;
}

void write_weather(const std::filesystem::path& path, const WeatherSeries& w) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "date,air_temp,solar_irradiance,wind_speed\n";
  std::vector<Day> days;
  for (const auto& c : w.channels) days.insert(days.end(), c.days.begin(), c.days.end());
  std::sort(days.begin(), days.end());
  days.erase(std::unique(days.begin(), days.end()), days.end());
  for (Day d : days) {
    out << format_date(d);
    for (const auto& c : w.channels) {
      auto v = c.at(d);
      out << ',';
      if (v) {
        out << *v;
      } else {
        out << "NA";
      }
    }
    out << '\n';
  }
}

WeatherSeries read_weather(const std::filesystem::path& path, std::string station_id) {
  DelimitedReader reader(path);
  const std::size_t dc = reader.column("date");
  const std::array<std::size_t, 3> cols{reader.column("air_temp"), reader.column("solar_irradiance"),
                                        reader.column("wind_speed")};
  WeatherSeries w;
  w.station_id = station_id.empty() ? path.stem().string() : std::move(station_id);
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() < reader.header().size()) throw Error(where(reader) + ": too few fields");
    Day d = parse_date(f[dc]);
    for (std::size_t c = 0; c < 3; ++c) {
      auto& ch = w.channels[c];
      if (!ch.days.empty() && d <= ch.days.back()) throw Error(where(reader) + ": dates must be strictly increasing");
      ch.days.push_back(d);
      double v = 0;
      if (is_missing_cell(f[cols[c]])) {
        ch.values.emplace_back(std::nullopt);
      } else if (parse_double(f[cols[c]], v)) {
        ch.values.emplace_back(v);
      } else {
        throw Error(where(reader) + ": unparseable value '" + f[cols[c]] + "'");
      }
    }
  }
  for (auto& ch : w.channels) ch.id = w.station_id;
  return w;
}

double NormStats::apply(std::size_t channel, double v) const {
  const auto& r = ranges.at(channel);
  if (r.max == r.min) return 0.0;
  double out = (v - r.min) / (r.max - r.min);
  if (clip) out = std::clamp(out, 0.0, 1.0);
  return out;
}

double NormStats::invert(std::size_t channel, double v) const {
  const auto& r = ranges.at(channel);
  return r.min + v * (r.max - r.min);
}

NormStats fit_minmax(const std::array<std::vector<const DailySeries*>, channel_count>& channels,
                     const std::optional<DayRange>& range) {
  NormStats stats;
  for (std::size_t c = 0; c < channel_count; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const DailySeries* s : channels[c]) {
      for (std::size_t i = 0; i < s->size(); ++i) {
        if (!s->values[i] || (range && !range->contains(s->days[i]))) continue;
        lo = std::min(lo, *s->values[i]);
        hi = std::max(hi, *s->values[i]);
      }
    }
    if (!std::isfinite(lo)) throw Error("fit_minmax: no valid values for channel " + std::to_string(c));
    stats.ranges[c] = {lo, hi};
  }
  return stats;
}

NormStats fit_minmax(const DailySeries& energy, const WeatherSeries& weather, const std::optional<DayRange>& range) {
  return fit_minmax({std::vector<const DailySeries*>{&energy},
                     {&weather.channels[0]},
                     {&weather.channels[1]},
                     {&weather.channels[2]}},
                    range);
}

namespace {

struct AlignedDays {
  Day first = 0;
  std::vector<std::array<double, channel_count>> rows;
  std::vector<bool> valid;
};

AlignedDays align(const DailySeries& energy, const WeatherSeries& weather, const std::optional<DayRange>& range) {
  AlignedDays a;
  if (energy.size() == 0) return a;
  Day first = energy.days.front();
  Day last = energy.days.back();
  if (range) {
    first = std::max(first, range->first);
    last = std::min(last, range->last);
  }
  if (last < first) return a;
  a.first = first;
  const auto n = static_cast<std::size_t>(last - first + 1);
  a.rows.resize(n);
  a.valid.assign(n, false);
  const std::array<const DailySeries*, channel_count> src{&energy, &weather.channels[0], &weather.channels[1],
                                                          &weather.channels[2]};
  for (std::size_t i = 0; i < n; ++i) {
    Day d = first + static_cast<Day>(i);
    bool ok = true;
    for (std::size_t c = 0; c < channel_count && ok; ++c) {
      auto v = src[c]->at(d);
      if (v) {
        a.rows[i][c] = *v;
      } else {
        ok = false;
      }
    }
    a.valid[i] = ok;
  }
  return a;
}

constexpr std::size_t span_days = 2 * window_length;

}  // namespace

std::size_t count_windows(const DailySeries& energy, const WeatherSeries& weather, const std::optional<DayRange>& range) {
  AlignedDays a = align(energy, weather, range);
  std::size_t count = 0, run = 0;
  for (bool v : a.valid) {
    run = v ? run + 1 : 0;
    if (run >= span_days) ++count;
  }
  return count;
}

SequenceDataset build_windows(const DailySeries& energy, const WeatherSeries& weather, const NormStats& stats,
                              const std::optional<DayRange>& range) {
  SequenceDataset ds;
  ds.stats = stats;
  AlignedDays a = align(energy, weather, range);
  std::size_t run = 0;
  for (std::size_t i = 0; i < a.valid.size(); ++i) {
    run = a.valid[i] ? run + 1 : 0;
    if (run < span_days) continue;
    const std::size_t start = i + 1 - span_days;
    Window w;
    w.start = a.first + static_cast<Day>(start);
    w.building_id = energy.id;
    for (std::size_t t = 0; t < window_length; ++t) {
      const auto& cur = a.rows[start + t];
      const auto& nxt = a.rows[start + window_length + t];
      double* row = &w.input[t * input_features];
      row[0] = stats.apply(consumption, cur[consumption]);
      row[1] = stats.apply(air_temperature, cur[air_temperature]);
      row[2] = stats.apply(solar_irradiance, cur[solar_irradiance]);
      row[3] = stats.apply(wind_speed, cur[wind_speed]);
      row[4] = stats.apply(air_temperature, nxt[air_temperature]);
      row[5] = stats.apply(solar_irradiance, nxt[solar_irradiance]);
      row[6] = stats.apply(wind_speed, nxt[wind_speed]);
      w.target[t] = stats.apply(consumption, nxt[consumption]);
    }
    ds.windows.push_back(w);
  }
  if (ds.windows.empty()) {
    ds.diagnostics.push_back("building '" + energy.id + "': fewer than 14 consecutive valid days" +
                             (range ? " in " + range->to_string() : std::string()));
  }
  return ds;
}

}  // namespace crossgrid::timeseries
