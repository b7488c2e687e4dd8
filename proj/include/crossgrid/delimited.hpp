#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crossgrid {

/// Splits one record. Double-quoted fields may contain the delimiter;
/// fields are trimmed.
std::vector<std::string> split_record(std::string_view line, char delimiter);

/// Streaming reader for header-first delimited text. Blank lines and lines
/// starting with '#' are skipped.
class DelimitedReader {
 public:
  DelimitedReader(const std::filesystem::path& path, char delimiter = ',');

  const std::vector<std::string>& header() const { return header_; }
  std::size_t column(std::string_view name) const;  // throws if absent

  /// Returns false at end of file. `line_number()` is 1-based.
  bool next(std::vector<std::string>& fields);
  std::size_t line_number() const { return line_no_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  char delimiter_;
  std::vector<std::string> header_;
  std::size_t line_no_ = 0;
};

/// Parses `key=value` pairs separated by commas, semicolons or newlines.
/// Keys keep their first-seen order in the returned vector.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

bool is_missing_cell(std::string_view cell);

}  // namespace crossgrid
