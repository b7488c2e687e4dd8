#pragma once

// Independent reference computations used to freeze expected values.
// Nothing here calls into the implementation paths it checks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "crossgrid/model.hpp"
#include "crossgrid/similarity.hpp"

namespace crossgrid::oracle {

/// Agglomerative clustering recomputing every cluster-to-cluster distance
/// from the member leaves at each step.
inline std::vector<similarity::Merge> naive_linkage(const Eigen::MatrixXd& d, similarity::Linkage method) {
  const std::size_t n = static_cast<std::size_t>(d.rows());
  struct Cluster {
    std::size_t node;
    std::vector<std::size_t> leaves;
  };
  std::vector<Cluster> active;
  for (std::size_t i = 0; i < n; ++i) active.push_back({i, {i}});
  auto between = [&](const Cluster& a, const Cluster& b) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
    for (std::size_t x : a.leaves) {
      for (std::size_t y : b.leaves) {
        double v = d(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
    }
    switch (method) {
      case similarity::Linkage::single: return lo;
      case similarity::Linkage::complete: return hi;
      case similarity::Linkage::average: return sum / static_cast<double>(a.leaves.size() * b.leaves.size());
    }
    return 0.0;
  };
  std::vector<similarity::Merge> merges;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bx = 0, by = 0;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_key{n * 4, n * 4};
    for (std::size_t x = 0; x < active.size(); ++x) {
      for (std::size_t y = 0; y < active.size(); ++y) {
        if (x == y) continue;
        double v = between(active[x], active[y]);
        std::pair<std::size_t, std::size_t> key{std::min(active[x].node, active[y].node),
                                                std::max(active[x].node, active[y].node)};
        if (v < best || (v == best && key < best_key)) {
          best = v;
          best_key = key;
          bx = x;
          by = y;
        }
      }
    }
    Cluster merged{n + step, active[bx].leaves};
    merged.leaves.insert(merged.leaves.end(), active[by].leaves.begin(), active[by].leaves.end());
    merges.push_back({best_key.first, best_key.second, best, merged.leaves.size()});
    std::size_t hi = std::max(bx, by), lo = std::min(bx, by);
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(hi));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(lo));
    active.push_back(std::move(merged));
  }
  return merges;
}

/// Rand index by explicit pair enumeration.
inline double rand_index_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++total;
      if ((a[i] == a[j]) == (b[i] == b[j])) ++agree;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(total);
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
};

/// Central finite differences of the training-mode loss for every trainable
/// scalar. Relative error uses max(|analytic|, |numeric|, floor) as the
/// denominator so exactly-zero gradients compare on an absolute scale.
/// Central differences resolve about ulp(loss) / (2 eps).
inline GradientCheck finite_difference_check(model::ForecastModel m, const model::Batch& batch,
                                             const model::Parameters& analytic, double eps = 1e-5,
                                             double floor = 1e-6) {
  GradientCheck out;
  auto params = model::tensors(m.params);
  auto grads = model::tensors(const_cast<model::Parameters&>(analytic));
  auto loss = [&] {
    Eigen::MatrixXd y = model::forward(m, batch, model::Mode::training);
    return model::loss_value(m.config, y, batch.targets);
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      double& p = params[k].data[i];
      const double saved = p;
      p = saved + eps;
      double up = loss();
      p = saved - eps;
      double down = loss();
      p = saved;
      double numeric = (up - down) / (2.0 * eps);
      double a = grads[k].data[i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > out.max_relative_error) {
        out.max_relative_error = rel;
        out.worst_tensor = params[k].name;
      }
      ++out.checked;
    }
  }
  return out;
}

}  // namespace crossgrid::oracle
