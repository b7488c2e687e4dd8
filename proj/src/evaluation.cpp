#include "crossgrid/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace crossgrid::evaluation {

using timeseries::count_windows;

TransferMatrix cross_building_matrix(const std::vector<FleetMember>& fleet, const MatrixConfig& cfg) {
  cfg.model.validate();
  TransferMatrix out;
  std::vector<const FleetMember*> included;
  std::vector<const FleetMember*> sorted;
  for (const auto& m : fleet) sorted.push_back(&m);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return id_less(a->id, b->id); });
  for (const FleetMember* m : sorted) {
    const std::size_t train_n = count_windows(m->energy, m->weather, cfg.train);
    if (train_n < cfg.min_train_windows) {
      out.excluded.push_back({m->id, "insufficient training data: " + std::to_string(train_n) + " windows < " +
                                         std::to_string(cfg.min_train_windows)});
      continue;
    }
    if (count_windows(m->energy, m->weather, cfg.test) == 0) {
      out.excluded.push_back({m->id, "no test windows in " + cfg.test.to_string()});
      continue;
    }
    included.push_back(m);
  }
  if (included.size() < 2) throw Error("cross_building_matrix: fewer than 2 buildings with sufficient data");

  const std::size_t n = included.size();
  for (auto* m : included) out.ids.push_back(m->id);
  out.errors = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  out.histories.resize(n);

  auto task = [&](std::size_t i) {
    const FleetMember& src = *included[i];
    auto stats = timeseries::fit_minmax(src.energy, src.weather, cfg.train);
    auto data = timeseries::build_windows(src.energy, src.weather, stats, cfg.train);
    auto trained = model::train(model::init_model(cfg.model), data);
    out.histories[i] = trained.history;
    for (std::size_t j = 0; j < n; ++j) {
      const FleetMember& dst = *included[j];
      auto test = timeseries::build_windows(dst.energy, dst.weather, stats, cfg.test);
      out.errors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          model::evaluate_rmse(trained.model, test.windows, cfg.raw_scale);
    }
  };

  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  out.scaled = cfg.scale;
  out.values = cfg.scale ? similarity::minmax_scale_matrix(out.errors) : out.errors;
  return out;
}

void write_matrix(const std::filesystem::path& path, const TransferMatrix& m, const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << "# scaled: " << (m.scaled ? "yes" : "no") << '\n';
  for (const auto& e : m.excluded) out << "# excluded: " << e.id << " (" << e.reason << ")\n";
  out << "train\\test";
  for (const auto& id : m.ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.ids[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      out << ',' << m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out << '\n';
  }
}

ErrorClustering error_matrix_clusters(const TransferMatrix& m, double fraction, similarity::Linkage method) {
  ErrorClustering c;
  c.distances = similarity::symmetrize(m.values, m.ids);
  c.tree = similarity::linkage(c.distances, method);
  c.clusters = similarity::cut_at_fraction(c.tree, fraction);
  return c;
}

double clustering_agreement(const similarity::ClusterAssignment& a, const similarity::ClusterAssignment& b) {
  if (a.ids.size() != b.ids.size()) throw Error("clustering_agreement: id sets differ");
  std::map<std::string, int> lb;
  for (std::size_t i = 0; i < b.ids.size(); ++i) lb[b.ids[i]] = b.labels[i];
  std::vector<int> mapped;
  for (const auto& id : a.ids) {
    auto it = lb.find(id);
    if (it == lb.end()) throw Error("clustering_agreement: id sets differ ('" + id + "')");
    mapped.push_back(it->second);
  }
  const std::size_t n = a.ids.size();
  if (n < 2) return 1.0;
  std::size_t agree = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ++total;
      agree += (a.labels[i] == a.labels[j]) == (mapped[i] == mapped[j]);
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace crossgrid::evaluation
