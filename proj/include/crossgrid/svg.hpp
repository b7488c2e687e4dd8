#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossgrid/common.hpp"
#include "crossgrid/similarity.hpp"

namespace crossgrid::svg {

struct Options {
  std::string title;
  std::vector<std::string> comments;    // embedded as an XML comment
  std::optional<std::string> timestamp;  // omitted when unset
};

/// Leaves left to right in similarity::leaf_order, merge height on the
/// vertical axis. `cut_height` draws a dashed threshold line.
std::string dendrogram(const similarity::LinkageTree& t, const Options& opt = {},
                       std::optional<double> cut_height = std::nullopt);

/// Rows top to bottom, columns left to right, colour from the matrix min
/// (light) to max (dark).
std::string heatmap(const std::vector<std::string>& ids, const Eigen::MatrixXd& values, const Options& opt = {},
                    const std::string& row_axis = "trained on", const std::string& col_axis = "tested on");

void write(const std::filesystem::path& path, const std::string& svg);

}  // namespace crossgrid::svg
