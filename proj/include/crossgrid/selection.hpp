#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossgrid/metadata.hpp"
#include "crossgrid/store.hpp"
#include "crossgrid/timeseries.hpp"

namespace crossgrid::selection {

/// Impute -> encode -> scale, fitted on a source table and applicable to
/// descriptions the table has never seen.
struct FittedPipeline {
  metadata::Schema schema;
  metadata::Encoding encoding = metadata::Encoding::onehot;
  bool scaled = true;
  std::vector<std::optional<std::string>> modes;       // per schema column
  std::vector<std::vector<std::string>> vocabularies;  // per schema column, empty for numeric
  std::vector<std::string> columns;                    // encoded column names
  Eigen::RowVectorXd offset;
  Eigen::RowVectorXd span;

  Eigen::RowVectorXd transform(const metadata::BuildingDescription& d) const;
};

FittedPipeline fit_pipeline(const metadata::DescriptionTable& sources, metadata::Encoding encoding,
                            bool scale = true);

struct SelectionRule {
  enum class Kind { top_k, threshold };
  Kind kind = Kind::top_k;
  std::size_t k = 3;
  double max_distance = 0.0;

  static SelectionRule top(std::size_t k) { return {Kind::top_k, k, 0.0}; }
  static SelectionRule within(double d) { return {Kind::threshold, 0, d}; }
  /// `top-3` or `within-0.5`
  static SelectionRule parse(std::string_view s);
  std::string to_string() const;
  void validate() const;
};

struct RankedSource {
  std::string building_id;
  double distance = 0.0;
};

struct SelectionResult {
  std::vector<RankedSource> sources;
  metadata::Encoding encoding = metadata::Encoding::onehot;
  SelectionRule rule;

  std::vector<std::string> ids() const;
};

/// Ranks every source by Euclidean distance to `target` in the space of the
/// pipeline fitted on `sources`. Ties go to the smaller building id.
SelectionResult select_sources(const metadata::BuildingDescription& target, const metadata::DescriptionTable& sources,
                               const SelectionRule& rule = {},
                               metadata::Encoding encoding = metadata::Encoding::onehot);

/// Copy of `table` without building `id`.
metadata::DescriptionTable without(const metadata::DescriptionTable& table, std::string_view id);

/// Data for one selected building.
struct SourceData {
  timeseries::DailySeries energy;
  timeseries::WeatherSeries weather;
};

/// How window values are normalised when several buildings are combined.
/// `global`: one min-max fit over the union of the kept buildings.
/// `per_building`: each building's windows use its own fit; the dataset
/// stats (used to denormalise forecasts) are still the union fit.
enum class NormFit { global, per_building };
std::string_view to_string(NormFit f);
NormFit parse_norm_fit(std::string_view s);

/// Windows of every selected building with data. Buildings with no data or
/// no window are dropped with a diagnostic naming them.
timeseries::SequenceDataset assemble_training_set(const SelectionResult& selected,
                                                  const std::map<std::string, SourceData>& data,
                                                  const std::optional<DayRange>& range = std::nullopt,
                                                  NormFit fit = NormFit::global);

/// Same, reading series through the store links. Missing entries drop the
/// building; Unavailable propagates.
timeseries::SequenceDataset assemble_training_set(const SelectionResult& selected, const store::Store& store,
                                                  const std::optional<DayRange>& range = std::nullopt,
                                                  NormFit fit = NormFit::global);

}  // namespace crossgrid::selection
