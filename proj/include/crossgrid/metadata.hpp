#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crossgrid::metadata {

enum class ColumnKind { numeric, categorical, ordered };

std::string_view to_string(ColumnKind k);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
  std::optional<double> min_value;  // numeric only, inclusive
  std::vector<std::string> levels;  // ordered only; empty means lexicographic order
};

/// Column schema for a description table.
///
/// Text form, one column per line, in table order:
///
///     building_id = id
///     occupants   = numeric>=1
///     house_type  = categorical
///     construction_year = ordered(pre-1850|1850-1899|1900-1929)
///
/// `#` starts a comment. The `id` line names the key column
/// (default `building_id`).
struct Schema {
  std::string id_column = "building_id";
  std::vector<ColumnSpec> columns;

  static Schema parse(std::string_view text);
  static Schema load(const std::filesystem::path& path);
  std::string to_text() const;

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t width() const { return columns.size(); }
};

/// Schema used for household descriptions (occupants, house type,
/// construction-year class, bedrooms, appliance count).
Schema household_schema();

using Cell = std::optional<std::string>;

struct BuildingDescription {
  std::string building_id;
  std::vector<Cell> values;  // aligned with Schema::columns
};

struct DescriptionTable {
  Schema schema;
  std::vector<BuildingDescription> rows;
  std::vector<std::string> warnings;

  std::size_t size() const { return rows.size(); }
  const BuildingDescription* find(std::string_view id) const;
  std::vector<std::string> ids() const;
};

/// Validates ids and cell values against the schema. Unparseable cells
/// become missing and add a warning; bound violations and duplicate ids
/// throw.
DescriptionTable make_table(Schema schema, std::vector<BuildingDescription> rows);

DescriptionTable load_descriptions(const std::filesystem::path& path, const Schema& schema,
                                   char delimiter = ',');
void save_descriptions(const std::filesystem::path& path, const DescriptionTable& table);

/// Builds one description from `key=value` pairs. Unknown keys throw with
/// every offending name when `strict`; otherwise they are ignored. Absent
/// columns are missing.
BuildingDescription parse_description(const Schema& schema,
                                      const std::vector<std::pair<std::string, std::string>>& pairs,
                                      std::string building_id, bool strict = true);

/// Normalises one cell against its column; returns nullopt for values that
/// do not parse.
Cell canonical_cell(const ColumnSpec& col, std::string_view raw);

/// Strict weak order of the column: numeric order, level order, else
/// lexicographic.
bool canonical_less(const ColumnSpec& col, const std::string& a, const std::string& b);

/// Sorted distinct non-missing values of column `c`.
std::vector<std::string> column_vocabulary(const DescriptionTable& table, std::size_t c);

/// Most frequent non-missing value; ties go to the smallest canonical value.
std::optional<std::string> column_mode(const DescriptionTable& table, std::size_t c);

DescriptionTable impute_most_frequent(const DescriptionTable& table);

enum class Encoding { label, onehot };
std::string_view to_string(Encoding e);
Encoding parse_encoding(std::string_view s);

struct EncodedMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;
  bool scaled = false;
};

EncodedMatrix encode_labels(const DescriptionTable& table);
EncodedMatrix one_hot_encode(const DescriptionTable& table);
EncodedMatrix encode(const DescriptionTable& table, Encoding e);

/// Per-column (v - min) / (max - min); constant columns become 0.
EncodedMatrix minmax_scale_columns(const EncodedMatrix& m);

/// impute -> encode -> scale, the pipeline used for clustering and selection.
EncodedMatrix prepare(const DescriptionTable& table, Encoding e, bool scale = true);

}  // namespace crossgrid::metadata
