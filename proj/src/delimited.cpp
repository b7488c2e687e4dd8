#include "crossgrid/delimited.hpp"

#include <algorithm>

#include "crossgrid/common.hpp"

namespace crossgrid {

std::vector<std::string> split_record(std::string_view line, char delimiter) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

DelimitedReader::DelimitedReader(const std::filesystem::path& path, char delimiter)
    : path_(path), in_(path), delimiter_(delimiter) {
  if (!in_) throw Error("cannot open " + path.string());
  if (!next(header_)) throw Error(path.string() + ": missing header row");
}

std::size_t DelimitedReader::column(std::string_view name) const {
  auto it = std::find(header_.begin(), header_.end(), name);
  if (it == header_.end()) throw Error(path_.string() + ": no column named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header_.begin());
}

bool DelimitedReader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no_ == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    fields = split_record(line, delimiter_);
    return true;
  }
  return false;
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string item;
  auto flush = [&] {
    std::string t = trim(item);
    item.clear();
    if (t.empty()) return;
    auto eq = t.find('=');
    if (eq == std::string::npos) eq = t.find(':');
    if (eq == std::string::npos) throw Error("malformed key-value pair '" + t + "'");
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw Error("empty key in '" + t + "'");
    for (const auto& kv : out) {
      if (kv.first == key) throw Error("duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  };
  for (char c : text) {
    if (c == ',' || c == ';' || c == '\n') {
      flush();
    } else {
      item.push_back(c);
    }
  }
  flush();
  return out;
}

bool is_missing_cell(std::string_view cell) {
  std::string t = trim(cell);
  return t.empty() || t == "NA";
}

}  // namespace crossgrid
