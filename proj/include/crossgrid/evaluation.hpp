#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "crossgrid/model.hpp"
#include "crossgrid/similarity.hpp"
#include "crossgrid/timeseries.hpp"

namespace crossgrid::evaluation {

struct FleetMember {
  std::string id;
  timeseries::DailySeries energy;
  timeseries::WeatherSeries weather;
};

struct MatrixConfig {
  model::ModelConfig model;
  DayRange train;
  DayRange test;
  std::size_t min_train_windows = 30;
  bool scale = true;       // min-max scale the finished matrix
  bool raw_scale = false;  // RMSE in consumption units instead of normalised
  unsigned threads = 0;    // 0: hardware concurrency
};

struct Exclusion {
  std::string id;
  std::string reason;
};

/// Row = training building, column = test building.
struct TransferMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd errors;  // as measured
  Eigen::MatrixXd values;  // errors, min-max scaled when `scaled`
  bool scaled = false;
  std::vector<Exclusion> excluded;
  std::vector<model::TrainHistory> histories;  // per included id

  std::size_t size() const { return ids.size(); }
};

/// One model per includable building, each evaluated on every included
/// building's test windows normalised with the training building's
/// statistics. Buildings with fewer than `min_train_windows` training
/// windows or no test window are excluded.
TransferMatrix cross_building_matrix(const std::vector<FleetMember>& fleet, const MatrixConfig& cfg);

/// Delimited text with the ids as header row and first column; `#` lines
/// carry `comments` and the exclusions.
void write_matrix(const std::filesystem::path& path, const TransferMatrix& m,
                  const std::vector<std::string>& comments = {});

struct ErrorClustering {
  similarity::DistanceMatrix distances;
  similarity::LinkageTree tree;
  similarity::ClusterAssignment clusters;
};

/// symmetrize -> linkage -> cut_at_fraction over `m.values`.
ErrorClustering error_matrix_clusters(const TransferMatrix& m, double fraction = 0.7,
                                      similarity::Linkage method = similarity::Linkage::average);

/// Rand index of two partitions of the same ids.
double clustering_agreement(const similarity::ClusterAssignment& a, const similarity::ClusterAssignment& b);

}  // namespace crossgrid::evaluation
