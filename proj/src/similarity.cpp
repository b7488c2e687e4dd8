#include "crossgrid/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "crossgrid/common.hpp"

namespace crossgrid::similarity {

void validate(const DistanceMatrix& d) {
  const auto n = static_cast<Eigen::Index>(d.ids.size());
  if (d.values.rows() != n || d.values.cols() != n) throw Error("distance matrix shape does not match id list");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (d.values(i, i) != 0.0) throw Error("distance matrix diagonal must be zero");
    for (Eigen::Index j = 0; j < n; ++j) {
      double v = d.values(i, j);
      if (!std::isfinite(v) || v < 0.0) throw Error("distance matrix entries must be finite and non-negative");
      if (v != d.values(j, i)) throw Error("distance matrix must be symmetric");
    }
  }
}

DistanceMatrix pairwise_euclidean(const metadata::EncodedMatrix& m) {
  const Eigen::Index n = m.values.rows();
  if (n < 2) throw Error("pairwise_euclidean needs at least 2 rows");
  if (!m.values.allFinite()) throw Error("pairwise_euclidean: matrix has non-finite entries");
  DistanceMatrix d;
  d.ids = m.row_ids;
  d.values = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = (m.values.row(i) - m.values.row(j)).norm();
      d.values(i, j) = v;
      d.values(j, i) = v;
    }
  }
  return d;
}

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
    case Linkage::average: return "average";
  }
  return "?";
}

Linkage parse_linkage(std::string_view s) {
  if (s == "single") return Linkage::single;
  if (s == "complete") return Linkage::complete;
  if (s == "average") return Linkage::average;
  throw Error("unknown linkage '" + std::string(s) + "' (expected single, complete or average)");
}

double LinkageTree::max_height() const {
  double h = 0.0;
  for (const auto& m : merges) h = std::max(h, m.height);
  return h;
}

LinkageTree linkage(const DistanceMatrix& d, Linkage method) {
  const std::size_t n = d.size();
  if (n < 2) throw Error("linkage needs at least 2 items");
  validate(d);

  const std::size_t total = 2 * n - 1;
  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
  dist.topLeftCorner(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = d.values;
  std::vector<std::size_t> size(total, 1);
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);

  LinkageTree tree;
  tree.leaf_ids = d.ids;
  tree.method = method;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = 0, best_b = 0;
    double best = std::numeric_limits<double>::infinity();
    // active is kept ascending, so the first minimum found is the
    // lexicographically smallest pair
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = x + 1; y < active.size(); ++y) {
        double v = dist(static_cast<Eigen::Index>(active[x]), static_cast<Eigen::Index>(active[y]));
        if (v < best) {
          best = v;
          best_a = active[x];
          best_b = active[y];
        }
      }
    }
    const std::size_t node = n + step;
    size[node] = size[best_a] + size[best_b];
    tree.merges.push_back({best_a, best_b, best, size[node]});
    std::erase(active, best_a);
    std::erase(active, best_b);
    const double na = static_cast<double>(size[best_a]);
    const double nb = static_cast<double>(size[best_b]);
    for (std::size_t k : active) {
      const auto K = static_cast<Eigen::Index>(k);
      double da = dist(static_cast<Eigen::Index>(best_a), K);
      double db = dist(static_cast<Eigen::Index>(best_b), K);
      double v = 0;
      switch (method) {
        case Linkage::single: v = std::min(da, db); break;
        case Linkage::complete: v = std::max(da, db); break;
        case Linkage::average: v = (na * da + nb * db) / (na + nb); break;
      }
      dist(static_cast<Eigen::Index>(node), K) = v;
      dist(K, static_cast<Eigen::Index>(node)) = v;
    }
    active.push_back(node);  // largest id so far, order preserved
  }
  return tree;
}

int ClusterAssignment::cluster_count() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

int ClusterAssignment::label_of(std::string_view id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return labels[i];
  }
  throw NotFound("id '" + std::string(id) + "' not in cluster assignment");
}

std::vector<std::vector<std::string>> ClusterAssignment::groups() const {
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(cluster_count()));
  for (std::size_t i = 0; i < ids.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(ids[i]);
  return out;
}

ClusterAssignment cut_at_fraction(const LinkageTree& t, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("cut fraction must lie in (0, 1]");
  const std::size_t n = t.leaf_count();
  const double threshold = fraction * t.max_height();

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // any leaf of each node stands in for the whole subtree
  std::vector<std::size_t> representative(2 * n - 1);
  std::iota(representative.begin(), representative.begin() + static_cast<std::ptrdiff_t>(n), 0);
  for (std::size_t k = 0; k < t.merges.size(); ++k) {
    const auto& m = t.merges[k];
    representative[n + k] = representative[m.left];
    if (m.height < threshold) {
      std::size_t a = find(representative[m.left]);
      std::size_t b = find(representative[m.right]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }

  ClusterAssignment out;
  out.ids = t.leaf_ids;
  out.labels.assign(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    out.labels[i] = root_label[r];
  }
  return out;
}

DistanceMatrix symmetrize(const Eigen::MatrixXd& e, std::vector<std::string> ids) {
  if (e.rows() != e.cols()) throw Error("symmetrize needs a square matrix");
  if (static_cast<std::size_t>(e.rows()) != ids.size()) throw Error("symmetrize: id count does not match matrix");
  DistanceMatrix d;
  d.ids = std::move(ids);
  d.values = (e + e.transpose()) / 2.0;
  d.values.diagonal().setZero();
  return d;
}

Eigen::MatrixXd minmax_scale_matrix(const Eigen::MatrixXd& e) {
  if (e.size() == 0) throw Error("minmax_scale_matrix: empty matrix");
  const double lo = e.minCoeff();
  const double hi = e.maxCoeff();
  if (hi == lo) return Eigen::MatrixXd::Zero(e.rows(), e.cols());
  return (e.array() - lo) / (hi - lo);
}

void write_linkage(const std::filesystem::path& path, const LinkageTree& t, const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "# method: " << to_string(t.method) << '\n';
  out << "# leaves:";
  for (const auto& id : t.leaf_ids) out << ' ' << id;
  out << '\n';
  out << "left,right,height,count\n";
  out.precision(17);
  for (const auto& m : t.merges) out << m.left << ',' << m.right << ',' << m.height << ',' << m.count << '\n';
}

std::vector<std::size_t> leaf_order(const LinkageTree& t) {
  const std::size_t n = t.leaf_count();
  std::vector<std::size_t> order;
  if (n == 0) return order;
  if (t.merges.empty()) {
    order.push_back(0);
    return order;
  }
  std::vector<std::size_t> stack{n + t.merges.size() - 1};
  while (!stack.empty()) {
    std::size_t node = stack.back();
    stack.pop_back();
    if (node < n) {
      order.push_back(node);
    } else {
      const auto& m = t.merges[node - n];
      stack.push_back(m.right);
      stack.push_back(m.left);
    }
  }
  return order;
}

}  // namespace crossgrid::similarity
