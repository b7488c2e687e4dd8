#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace crossgrid {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a lookup by id (request, building, station) finds nothing.
class NotFound : public Error {
 public:
  using Error::Error;
};

/// Building ids compare numerically when both are integers, otherwise
/// lexicographically. "2" < "10".
bool id_less(std::string_view a, std::string_view b);

/// Days since 1970-01-01 (UTC).
using Day = std::int32_t;

Day day_of_timestamp(std::int64_t unix_seconds);
Day parse_date(std::string_view iso);  // YYYY-MM-DD
std::string format_date(Day d);

/// Inclusive calendar range.
struct DayRange {
  Day first = 0;
  Day last = 0;

  bool contains(Day d) const { return d >= first && d <= last; }
  std::size_t length() const { return last >= first ? static_cast<std::size_t>(last - first + 1) : 0; }

  /// Accepts "YYYY-MM-DD..YYYY-MM-DD".
  static DayRange parse(std::string_view text);
  std::string to_string() const;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string trim(std::string_view s);

}  // namespace crossgrid
