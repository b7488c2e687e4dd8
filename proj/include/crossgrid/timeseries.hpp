#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossgrid/common.hpp"

namespace crossgrid::timeseries {

/// Sub-daily readings, timestamps strictly increasing.
struct RawSeries {
  std::string id;
  std::string unit;
  std::vector<std::int64_t> timestamps;
  std::vector<double> values;

  std::size_t size() const { return timestamps.size(); }
};

struct RawColumns {
  std::string timestamp = "unix_ts";
  std::string value = "value";
  char delimiter = ',';
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t duplicates = 0;
};

/// Reads a delimited `timestamp,value` file, sorts it and keeps the last
/// value for repeated timestamps.
RawSeries load_raw(const std::filesystem::path& path, const RawColumns& columns = {},
                   LoadReport* report = nullptr);

/// Sorts by timestamp; duplicate timestamps keep the later entry.
RawSeries normalize_order(RawSeries s, std::size_t* duplicates = nullptr);

/// Daily values, dates strictly increasing; a missing value marks a day
/// with insufficient coverage.
struct DailySeries {
  std::string id;
  std::string unit;
  std::vector<Day> days;
  std::vector<std::optional<double>> values;

  std::size_t size() const { return days.size(); }
  std::optional<double> at(Day d) const;
  std::size_t valid_count() const;
};

struct CoverageRule {
  /// Expected readings per day; 0 infers it from the median sampling step.
  double expected_per_day = 0.0;
  double threshold = 0.9;
};

enum class DailyStatistic { sum, mean };

/// Streaming day bucketer. Points must arrive in timestamp order; days are
/// emitted as soon as a later day starts, so memory stays O(1) per day.
class DailyAggregator {
 public:
  DailyAggregator(DailyStatistic stat, double expected_per_day, double threshold);

  void add(std::int64_t unix_seconds, double value);
  DailySeries finish(std::string id, std::string unit);

 private:
  void close_day();

  DailyStatistic stat_;
  double expected_;
  double threshold_;
  bool open_ = false;
  Day day_ = 0;
  double sum_ = 0.0;
  std::size_t count_ = 0;
  std::int64_t last_ts_ = 0;
  DailySeries out_;
};

DailySeries resample_daily_sum(const RawSeries& s, const CoverageRule& rule = {});
DailySeries resample_daily_mean(const RawSeries& s, const CoverageRule& rule = {});

/// Median spacing between consecutive timestamps, in seconds.
double median_step(const RawSeries& s);

/// `date,value` text, `NA` for missing days.
void write_daily(const std::filesystem::path& path, const DailySeries& s);
DailySeries read_daily(const std::filesystem::path& path, std::string id = {});

/// Channels feeding a window: consumption plus three weather channels.
enum Channel : std::size_t { consumption = 0, air_temperature = 1, solar_irradiance = 2, wind_speed = 3 };
inline constexpr std::size_t channel_count = 4;

/// The three weather channels of one station.
struct WeatherSeries {
  std::string station_id;
  std::array<DailySeries, 3> channels;  // air temperature, solar irradiance, wind speed
};

/// Weather file with columns `unix_ts,air_temp,solar_irradiance,wind_speed`.
std::array<RawSeries, 3> load_weather_raw(const std::filesystem::path& path, char delimiter = ',');
WeatherSeries resample_weather(const std::array<RawSeries, 3>& raw, std::string station_id,
                               const CoverageRule& rule = {});
void write_weather(const std::filesystem::path& path, const WeatherSeries& w);
WeatherSeries read_weather(const std::filesystem::path& path, std::string station_id = {});

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

/// Min-max statistics per channel.
struct NormStats {
  std::array<FeatureRange, channel_count> ranges{};
  bool clip = false;

  /// Constant channels (max == min) map to 0.
  double apply(std::size_t channel, double v) const;
  double invert(std::size_t channel, double v) const;
};

/// Per-channel min/max over the days of `range` (all days when absent).
/// Each entry of `channels` lists the series contributing to one channel.
NormStats fit_minmax(const std::array<std::vector<const DailySeries*>, channel_count>& channels,
                     const std::optional<DayRange>& range = std::nullopt);

/// One building's channels: consumption plus its station's weather.
NormStats fit_minmax(const DailySeries& energy, const WeatherSeries& weather,
                     const std::optional<DayRange>& range = std::nullopt);

inline constexpr std::size_t window_length = 7;
inline constexpr std::size_t input_features = 7;

/// One training pair. Input row t holds
/// [consumption(d+t), temp(d+t), solar(d+t), wind(d+t), temp(d+7+t),
///  solar(d+7+t), wind(d+7+t)]; target t is consumption(d+7+t).
struct Window {
  Day start = 0;
  std::string building_id;
  std::array<double, window_length * input_features> input{};
  std::array<double, window_length> target{};

  double x(std::size_t t, std::size_t f) const { return input[t * input_features + f]; }
};

struct SequenceDataset {
  std::vector<Window> windows;
  NormStats stats;
  std::vector<std::string> diagnostics;

  std::size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
};

/// Slides a 14-day span one day at a time over days on which all four
/// channels are valid; values are normalised with `stats`. When `range` is
/// set, both weeks must lie inside it.
SequenceDataset build_windows(const DailySeries& energy, const WeatherSeries& weather, const NormStats& stats,
                              const std::optional<DayRange>& range = std::nullopt);

/// Number of windows build_windows would produce, without building them.
std::size_t count_windows(const DailySeries& energy, const WeatherSeries& weather,
                          const std::optional<DayRange>& range = std::nullopt);

}  // namespace crossgrid::timeseries
