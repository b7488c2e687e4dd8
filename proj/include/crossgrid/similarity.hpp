#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crossgrid/metadata.hpp"

namespace crossgrid::similarity {

/// Symmetric, zero-diagonal, non-negative n x n matrix with row/column ids.
struct DistanceMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd values;

  std::size_t size() const { return ids.size(); }
  double operator()(std::size_t i, std::size_t j) const {
    return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
};

/// Throws unless `d` is square, symmetric, zero-diagonal and non-negative.
void validate(const DistanceMatrix& d);

DistanceMatrix pairwise_euclidean(const metadata::EncodedMatrix& m);

enum class Linkage { single, complete, average };
std::string_view to_string(Linkage l);
Linkage parse_linkage(std::string_view s);

/// One agglomeration step. Leaves are nodes 0..n-1; the k-th merge creates
/// node n+k. `left < right` always.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;
  std::size_t count = 0;
};

struct LinkageTree {
  std::vector<std::string> leaf_ids;
  std::vector<Merge> merges;
  Linkage method = Linkage::average;

  std::size_t leaf_count() const { return leaf_ids.size(); }
  double max_height() const;
};

/// Agglomerative clustering with Lance-Williams distance updates.
/// Equal-distance candidates resolve to the smallest (left, right) node pair.
LinkageTree linkage(const DistanceMatrix& d, Linkage method = Linkage::average);

/// building id -> dense label. Labels are numbered by first occurrence in
/// leaf order.
struct ClusterAssignment {
  std::vector<std::string> ids;
  std::vector<int> labels;

  int cluster_count() const;
  int label_of(std::string_view id) const;
  std::vector<std::vector<std::string>> groups() const;
};

/// Applies every merge whose height is strictly below
/// `fraction * max_height`.
ClusterAssignment cut_at_fraction(const LinkageTree& t, double fraction);

/// out(i,j) = (e(i,j) + e(j,i)) / 2, diagonal 0.
DistanceMatrix symmetrize(const Eigen::MatrixXd& e, std::vector<std::string> ids);

/// Whole-matrix min-max to [0,1]; a constant matrix becomes all zeros.
Eigen::MatrixXd minmax_scale_matrix(const Eigen::MatrixXd& e);

void write_linkage(const std::filesystem::path& path, const LinkageTree& t,
                   const std::vector<std::string>& comments = {});

/// Leaf order from a depth-first walk of the tree (left subtree first), used
/// for dendrogram layout.
std::vector<std::size_t> leaf_order(const LinkageTree& t);

}  // namespace crossgrid::similarity
