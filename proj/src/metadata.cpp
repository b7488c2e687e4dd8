#include "crossgrid/metadata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crossgrid/common.hpp"
#include "crossgrid/delimited.hpp"

namespace crossgrid::metadata {

namespace {

std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double numeric_value(const Cell& c) { return *parse_number(*c); }

ColumnSpec parse_column(const std::string& name, const std::string& kind_text) {
  ColumnSpec col;
  col.name = name;
  std::string k = kind_text;
  if (k.rfind("numeric", 0) == 0) {
    col.kind = ColumnKind::numeric;
    std::string rest = trim(std::string_view(k).substr(7));
    if (!rest.empty()) {
      if (rest.rfind(">=", 0) != 0) throw Error("schema: bad numeric bound '" + k + "'");
      auto bound = parse_number(trim(std::string_view(rest).substr(2)));
      if (!bound) throw Error("schema: bad numeric bound '" + k + "'");
      col.min_value = bound;
    }
  } else if (k == "categorical") {
    col.kind = ColumnKind::categorical;
  } else if (k.rfind("ordered", 0) == 0) {
    col.kind = ColumnKind::ordered;
    std::string rest = trim(std::string_view(k).substr(7));
    if (!rest.empty()) {
      if (rest.front() != '(' || rest.back() != ')') throw Error("schema: bad level list '" + k + "'");
      std::string inner = rest.substr(1, rest.size() - 2);
      std::stringstream ss(inner);
      std::string level;
      while (std::getline(ss, level, '|')) {
        level = trim(level);
        if (level.empty()) throw Error("schema: empty level in '" + k + "'");
        col.levels.push_back(level);
      }
    }
  } else {
    throw Error("schema: unknown kind '" + k + "' for column '" + name + "'");
  }
  return col;
}

}  // namespace

std::string_view to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::ordered: return "ordered";
  }
  return "?";
}

Schema Schema::parse(std::string_view text) {
  Schema s;
  bool have_id = false;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    auto colon = t.find(':');
    auto sep = std::min(eq, colon);
    if (sep == std::string::npos) throw Error("schema line " + std::to_string(line_no) + ": expected name = kind");
    std::string name = trim(std::string_view(t).substr(0, sep));
    std::string kind = trim(std::string_view(t).substr(sep + 1));
    if (name.empty()) throw Error("schema line " + std::to_string(line_no) + ": empty column name");
    if (kind == "id") {
      if (have_id) throw Error("schema: more than one id column");
      s.id_column = name;
      have_id = true;
      continue;
    }
    if (s.find(name)) throw Error("schema: duplicate column '" + name + "'");
    s.columns.push_back(parse_column(name, kind));
  }
  if (s.columns.empty()) throw Error("schema declares no attribute columns");
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open schema " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Schema::to_text() const {
  std::string out = id_column + " = id\n";
  for (const auto& c : columns) {
    out += c.name + " = " + std::string(to_string(c.kind));
    if (c.min_value) out += ">=" + format_number(*c.min_value);
    if (!c.levels.empty()) {
      out += "(";
      for (std::size_t i = 0; i < c.levels.size(); ++i) out += (i ? "|" : "") + c.levels[i];
      out += ")";
    }
    out += "\n";
  }
  return out;
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == name) return i;
  }
  return std::nullopt;
}

Schema household_schema() {
  return Schema::parse(
      "building_id = id\n"
      "occupants = numeric>=1\n"
      "house_type = categorical\n"
      "construction_year = ordered\n"
      "bedrooms = numeric>=1\n"
      "appliances = numeric>=0\n");
}

const BuildingDescription* DescriptionTable::find(std::string_view id) const {
  for (const auto& r : rows) {
    if (r.building_id == id) return &r;
  }
  return nullptr;
}

std::vector<std::string> DescriptionTable::ids() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.building_id);
  return out;
}

Cell canonical_cell(const ColumnSpec& col, std::string_view raw) {
  if (is_missing_cell(raw)) return std::nullopt;
  std::string t = trim(raw);
  switch (col.kind) {
    case ColumnKind::numeric: {
      auto v = parse_number(t);
      if (!v) return std::nullopt;
      return format_number(*v);
    }
    case ColumnKind::ordered:
      if (!col.levels.empty() && std::find(col.levels.begin(), col.levels.end(), t) == col.levels.end()) {
        return std::nullopt;
      }
      return t;
    case ColumnKind::categorical:
      return t;
  }
  return std::nullopt;
}

bool canonical_less(const ColumnSpec& col, const std::string& a, const std::string& b) {
  if (col.kind == ColumnKind::numeric) {
    auto va = parse_number(a), vb = parse_number(b);
    if (va && vb) return *va < *vb;
  }
  if (col.kind == ColumnKind::ordered && !col.levels.empty()) {
    auto ia = std::find(col.levels.begin(), col.levels.end(), a);
    auto ib = std::find(col.levels.begin(), col.levels.end(), b);
    if (ia != ib) return ia < ib;
    return false;
  }
  return a < b;
}

DescriptionTable make_table(Schema schema, std::vector<BuildingDescription> rows) {
  DescriptionTable t;
  std::set<std::string> seen;
  for (auto& r : rows) {
    if (r.building_id.empty()) throw Error("description with empty building id");
    if (!seen.insert(r.building_id).second) throw Error("duplicate building_id '" + r.building_id + "'");
    if (r.values.size() != schema.width()) {
      throw Error("building '" + r.building_id + "' has " + std::to_string(r.values.size()) +
                  " values, schema has " + std::to_string(schema.width()));
    }
    for (std::size_t c = 0; c < schema.width(); ++c) {
      const auto& col = schema.columns[c];
      auto& cell = r.values[c];
      if (!cell) continue;
      Cell canon = canonical_cell(col, *cell);
      if (!canon) {
        t.warnings.push_back("building '" + r.building_id + "': unparseable " + col.name + " '" + *cell +
                             "' treated as missing");
      } else if (col.min_value && numeric_value(canon) < *col.min_value) {
        throw Error("building '" + r.building_id + "': " + col.name + " = " + *canon + " below minimum " +
                    format_number(*col.min_value));
      }
      cell = std::move(canon);
    }
  }
  t.schema = std::move(schema);
  t.rows = std::move(rows);
  return t;
}

DescriptionTable load_descriptions(const std::filesystem::path& path, const Schema& schema, char delimiter) {
  DelimitedReader reader(path, delimiter);
  const auto& header = reader.header();
  std::size_t id_col = reader.column(schema.id_column);
  std::vector<std::size_t> cols;
  for (const auto& c : schema.columns) cols.push_back(reader.column(c.name));
  if (header.size() != schema.width() + 1) {
    std::vector<std::string> extra;
    for (const auto& h : header) {
      if (h != schema.id_column && !schema.find(h)) extra.push_back(h);
    }
    std::string names;
    for (const auto& e : extra) names += (names.empty() ? "" : ", ") + e;
    throw Error(path.string() + ": header columns not in schema: " + names);
  }

  std::vector<BuildingDescription> rows;
  std::vector<std::string> fields;
  std::vector<std::string> parse_warnings;
  while (reader.next(fields)) {
    if (fields.size() != header.size()) {
      throw Error(path.string() + ":" + std::to_string(reader.line_number()) + ": expected " +
                  std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    }
    BuildingDescription d;
    d.building_id = fields[id_col];
    for (std::size_t c : cols) {
      if (is_missing_cell(fields[c])) {
        d.values.emplace_back(std::nullopt);
      } else {
        d.values.emplace_back(fields[c]);
      }
    }
    rows.push_back(std::move(d));
  }
  if (rows.empty()) throw Error(path.string() + ": no buildings");
  return make_table(schema, std::move(rows));
}

void save_descriptions(const std::filesystem::path& path, const DescriptionTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << table.schema.id_column;
  for (const auto& c : table.schema.columns) out << ',' << c.name;
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.building_id;
    for (const auto& v : r.values) out << ',' << (v ? *v : std::string("NA"));
    out << '\n';
  }
}

BuildingDescription parse_description(const Schema& schema,
                                      const std::vector<std::pair<std::string, std::string>>& pairs,
                                      std::string building_id, bool strict) {
  BuildingDescription d;
  d.building_id = std::move(building_id);
  d.values.assign(schema.width(), std::nullopt);
  std::vector<std::string> unknown;
  for (const auto& [key, value] : pairs) {
    if (key == schema.id_column) continue;
    auto c = schema.find(key);
    if (!c) {
      unknown.push_back(key);
      continue;
    }
    if (is_missing_cell(value)) continue;
    Cell canon = canonical_cell(schema.columns[*c], value);
    if (!canon) throw Error("invalid value '" + value + "' for " + key);
    const auto& col = schema.columns[*c];
    if (col.min_value && numeric_value(canon) < *col.min_value) {
      throw Error(key + " = " + value + " below minimum " + format_number(*col.min_value));
    }
    d.values[*c] = std::move(canon);
  }
  if (strict && !unknown.empty()) {
    std::string names;
    for (const auto& u : unknown) names += (names.empty() ? "" : ", ") + u;
    throw Error("unknown description field(s): " + names);
  }
  return d;
}

std::vector<std::string> column_vocabulary(const DescriptionTable& table, std::size_t c) {
  const auto& col = table.schema.columns.at(c);
  std::vector<std::string> vals;
  for (const auto& r : table.rows) {
    if (r.values[c]) vals.push_back(*r.values[c]);
  }
  auto less = [&](const std::string& a, const std::string& b) { return canonical_less(col, a, b); };
  std::sort(vals.begin(), vals.end(), less);
  vals.erase(std::unique(vals.begin(), vals.end(),
                         [&](const std::string& a, const std::string& b) { return !less(a, b) && !less(b, a); }),
             vals.end());
  return vals;
}

std::optional<std::string> column_mode(const DescriptionTable& table, std::size_t c) {
  const auto& col = table.schema.columns.at(c);
  std::vector<std::pair<std::string, std::size_t>> counts;
  for (const auto& r : table.rows) {
    if (!r.values[c]) continue;
    auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& p) { return p.first == *r.values[c]; });
    if (it == counts.end()) {
      counts.emplace_back(*r.values[c], 1);
    } else {
      ++it->second;
    }
  }
  if (counts.empty()) return std::nullopt;
  const std::pair<std::string, std::size_t>* best = &counts.front();
  for (const auto& p : counts) {
    if (p.second > best->second || (p.second == best->second && canonical_less(col, p.first, best->first))) {
      best = &p;
    }
  }
  return best->first;
}

DescriptionTable impute_most_frequent(const DescriptionTable& table) {
  DescriptionTable out = table;
  for (std::size_t c = 0; c < table.schema.width(); ++c) {
    bool any_missing = std::any_of(table.rows.begin(), table.rows.end(),
                                   [c](const BuildingDescription& r) { return !r.values[c]; });
    if (!any_missing) continue;
    auto mode = column_mode(table, c);
    if (!mode) throw Error("column '" + table.schema.columns[c].name + "' is entirely missing");
    for (auto& r : out.rows) {
      if (!r.values[c]) r.values[c] = *mode;
    }
  }
  return out;
}

std::string_view to_string(Encoding e) { return e == Encoding::label ? "label" : "onehot"; }

Encoding parse_encoding(std::string_view s) {
  if (s == "label") return Encoding::label;
  if (s == "onehot" || s == "one-hot") return Encoding::onehot;
  throw Error("unknown encoding '" + std::string(s) + "' (expected label or onehot)");
}

namespace {

void require_complete(const DescriptionTable& table) {
  for (const auto& r : table.rows) {
    for (std::size_t c = 0; c < r.values.size(); ++c) {
      if (!r.values[c]) {
        throw Error("missing " + table.schema.columns[c].name + " for building '" + r.building_id +
                    "'; run impute_most_frequent first");
      }
    }
  }
}

}  // namespace

EncodedMatrix encode_labels(const DescriptionTable& table) {
  require_complete(table);
  EncodedMatrix m;
  m.row_ids = table.ids();
  for (const auto& c : table.schema.columns) m.columns.push_back(c.name);
  m.values.resize(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(table.schema.width()));
  for (std::size_t c = 0; c < table.schema.width(); ++c) {
    const auto& col = table.schema.columns[c];
    std::vector<std::string> vocab;
    if (col.kind != ColumnKind::numeric) vocab = column_vocabulary(table, c);
    for (std::size_t r = 0; r < table.size(); ++r) {
      const std::string& v = *table.rows[r].values[c];
      double x = 0;
      if (col.kind == ColumnKind::numeric) {
        x = numeric_value(table.rows[r].values[c]);
      } else {
        x = static_cast<double>(std::find(vocab.begin(), vocab.end(), v) - vocab.begin());
      }
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
    }
  }
  return m;
}

EncodedMatrix one_hot_encode(const DescriptionTable& table) {
  require_complete(table);
  EncodedMatrix m;
  m.row_ids = table.ids();
  std::vector<std::vector<std::string>> vocabs(table.schema.width());
  std::size_t width = 0;
  for (std::size_t c = 0; c < table.schema.width(); ++c) {
    const auto& col = table.schema.columns[c];
    if (col.kind == ColumnKind::numeric) {
      m.columns.push_back(col.name);
      ++width;
    } else {
      vocabs[c] = column_vocabulary(table, c);
      for (const auto& v : vocabs[c]) m.columns.push_back(col.name + "=" + v);
      width += vocabs[c].size();
    }
  }
  m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < table.size(); ++r) {
    Eigen::Index offset = 0;
    for (std::size_t c = 0; c < table.schema.width(); ++c) {
      const auto& col = table.schema.columns[c];
      const auto& cell = table.rows[r].values[c];
      if (col.kind == ColumnKind::numeric) {
        m.values(static_cast<Eigen::Index>(r), offset++) = numeric_value(cell);
      } else {
        auto pos = std::find(vocabs[c].begin(), vocabs[c].end(), *cell) - vocabs[c].begin();
        m.values(static_cast<Eigen::Index>(r), offset + pos) = 1.0;
        offset += static_cast<Eigen::Index>(vocabs[c].size());
      }
    }
  }
  return m;
}

EncodedMatrix encode(const DescriptionTable& table, Encoding e) {
  return e == Encoding::label ? encode_labels(table) : one_hot_encode(table);
}

EncodedMatrix minmax_scale_columns(const EncodedMatrix& m) {
  if (m.values.rows() == 0 || m.values.cols() == 0) throw Error("minmax_scale_columns: empty matrix");
  EncodedMatrix out = m;
  for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
    double lo = m.values.col(c).minCoeff();
    double hi = m.values.col(c).maxCoeff();
    if (hi == lo) {
      out.values.col(c).setZero();
    } else {
      out.values.col(c) = (m.values.col(c).array() - lo) / (hi - lo);
    }
  }
  out.scaled = true;
  return out;
}

EncodedMatrix prepare(const DescriptionTable& table, Encoding e, bool scale) {
  EncodedMatrix m = encode(impute_most_frequent(table), e);
  return scale ? minmax_scale_columns(m) : m;
}

}  // namespace crossgrid::metadata
