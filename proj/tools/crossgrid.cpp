#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "crossgrid/delimited.hpp"
#include "crossgrid/evaluation.hpp"
#include "crossgrid/selection.hpp"
#include "crossgrid/service.hpp"
#include "crossgrid/store.hpp"
#include "crossgrid/svg.hpp"
#include "crossgrid/synthetic.hpp"
#include "crossgrid/workflow.hpp"

namespace fs = std::filesystem;
using namespace crossgrid;

namespace {

struct Common {
  std::string store;
  std::string out = ".";
  std::uint64_t seed = 0;
  bool svg_timestamp = false;
};

struct ModelFlags {
  std::string batch_norm = "on";
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  int max_epochs = 1000;
  int patience = 20;
  int batch_size = 80;
  double init_std = 1.0;
  std::vector<int> lstm{256};
  std::vector<int> fc{128};

  void add(CLI::App* app) {
    app->add_option("--batch-norm", batch_norm, "Batch normalisation on FC layers")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app->add_option("--lr-start", lr_start, "Learning rate at the first epoch")->capture_default_str();
    app->add_option("--lr-end", lr_end, "Learning rate at the last epoch")->capture_default_str();
    app->add_option("--max-epochs", max_epochs)->capture_default_str();
    app->add_option("--patience", patience, "Epochs without improvement before stopping")->capture_default_str();
    app->add_option("--batch-size", batch_size, "Windows per mini-batch")->capture_default_str();
    app->add_option("--init-std", init_std, "Std of the normal weight initialisation")->capture_default_str();
    app->add_option("--lstm", lstm, "LSTM layer sizes")->capture_default_str()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app->add_option("--fc", fc, "Fully-connected layer sizes")->capture_default_str()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  }

  model::ModelConfig config(std::uint64_t seed) const {
    model::ModelConfig c;
    c.batch_norm = batch_norm == "on";
    c.lr_start = lr_start;
    c.lr_end = lr_end;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.batch_size = batch_size;
    c.init_std = init_std;
    c.lstm_sizes = lstm;
    c.fc_sizes = fc;
    c.seed = seed;
    c.validate();
    return c;
  }
};

std::string join(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

std::vector<std::string> model_comments(const model::ModelConfig& c) {
  std::ostringstream o;
  o << "model: lstm=[" << join(c.lstm_sizes) << "] fc=[" << join(c.fc_sizes) << "] batch_norm="
    << (c.batch_norm ? "on" : "off") << " init_std=" << c.init_std << " lr=" << c.lr_start << ".." << c.lr_end
    << " max_epochs=" << c.max_epochs << " patience=" << c.patience << " batch_size=" << c.batch_size
    << " (mini-batches of windows) loss=mse";
  return {o.str()};
}

fs::path store_root(const Common& c) {
  if (!c.store.empty()) return c.store;
  if (const char* env = std::getenv("CROSSGRID_DATA_DIR"); env && *env) return env;
  return "crossgrid-data";
}

/// Digest over every file of a store directory, in path order.
std::string tree_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() != ".tmp") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (auto& f : files) acc += fs::relative(f, root).generic_string() + ":" + sha256_file(f) + "\n";
  return sha256_hex(acc);
}

struct Artifact {
  std::vector<std::string> lines;

  Artifact(const std::string& command, const Common& c) {
    lines.push_back("crossgrid " + command);
    lines.push_back("seed: " + std::to_string(c.seed));
  }
  void add(std::string s) { lines.push_back(std::move(s)); }
  void input(const fs::path& p) { lines.push_back("input: " + p.filename().string() + " sha256=" + sha256_file(p)); }
  void store(const fs::path& root) { lines.push_back("input: store sha256=" + tree_digest(root)); }

  void header(std::ostream& o) const {
    for (const auto& l : lines) o << "# " << l << '\n';
  }
  svg::Options svg(const std::string& title, bool timestamp) const {
    svg::Options opt;
    opt.title = title;
    opt.comments = lines;
    if (timestamp) {
      auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
      char buf[32];
      std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
      opt.timestamp = buf;
    }
    return opt;
  }
};

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream o(dir / name);
  if (!o) throw Error("cannot write " + (dir / name).string());
  o.precision(17);
  return o;
}

metadata::Schema schema_from(const std::string& path) {
  return path.empty() ? metadata::household_schema() : metadata::Schema::load(path);
}

// ---- synth

void cmd_synth(const Common& c, std::size_t per_group, std::size_t days, std::size_t train_days) {
  synthetic::FleetOptions opt;
  opt.seed = c.seed;
  opt.per_group = per_group;
  opt.days = days;
  opt.train_days = train_days;
  auto fleet = synthetic::make_fleet(opt);
  const fs::path root = store_root(c);
  store::FileStore s(root);
  synthetic::populate(s, fleet);
  auto o = open_out(c.out, "synthetic_groups.csv");
  Artifact a("synth", c);
  a.add("train-range: " + fleet.train.to_string());
  a.add("test-range: " + fleet.test.to_string());
  a.header(o);
  o << "building_id,group\n";
  for (std::size_t i = 0; i < fleet.members.size(); ++i) o << fleet.members[i].id << ',' << fleet.groups[i] << '\n';
  std::cout << "wrote " << fleet.members.size() << " buildings to " << root << "\n"
            << "train range " << fleet.train.to_string() << ", test range " << fleet.test.to_string() << "\n";
}

// ---- ingest

struct IngestFlags {
  std::string metadata;
  std::string schema;
  std::vector<std::string> energy;
  std::string weather;
  std::string weather_daily;
  std::string station;
  std::string ts_column = "unix_ts";
  std::string value_column = "value";
  char delimiter = ',';
  double coverage = 0.9;
};

void cmd_ingest(const Common& c, const IngestFlags& f) {
  const fs::path root = store_root(c);
  store::FileStore s(root);
  if (!f.metadata.empty()) {
    auto table = metadata::load_descriptions(f.metadata, schema_from(f.schema));
    for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
    s.put_descriptions(table);
  }
  std::optional<timeseries::WeatherSeries> weather;
  if (!f.weather.empty()) {
    auto raw = timeseries::load_weather_raw(f.weather, f.delimiter);
    weather = timeseries::resample_weather(raw, f.station.empty() ? fs::path(f.weather).stem().string() : f.station,
                                           {0.0, f.coverage});
  } else if (!f.weather_daily.empty()) {
    weather = timeseries::read_weather(f.weather_daily, f.station);
  }
  if (weather) s.put_weather(*weather);

  std::cout << "building_id,days,valid_days,windows\n";
  for (const auto& spec : f.energy) {
    auto eq = spec.find('=');
    std::string id = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    timeseries::LoadReport rep;
    auto raw = timeseries::load_raw(path, {f.ts_column, f.value_column, f.delimiter}, &rep);
    raw.id = id;
    auto daily = timeseries::resample_daily_sum(raw, {0.0, f.coverage});
    daily.id = id;
    s.put_energy(daily);
    std::string station = weather ? weather->station_id : "";
    if (station.empty()) {
      auto links = s.links();
      if (!links.empty()) station = links.front().station_id;
    }
    if (station.empty()) throw Error("no weather station to link building '" + id + "' to (pass --weather)");
    s.put_link({id, id, station});
    std::size_t windows = 0;
    try {
      windows = timeseries::count_windows(daily, s.weather(station));
    } catch (const NotFound&) {
    }
    std::cout << id << ',' << daily.size() << ',' << daily.valid_count() << ',' << windows << "\n";
    if (rep.duplicates) std::cerr << "note: " << id << ": " << rep.duplicates << " duplicate timestamps, last kept\n";
  }
  for (const auto& p : store::check_links(s)) std::cerr << "warning: " << p << "\n";
}

// ---- cluster

void cmd_cluster(const Common& c, const std::string& metadata_path, const std::string& schema_path,
                 const std::string& encoding, const std::string& linkage_name, double fraction) {
  Artifact a("cluster", c);
  metadata::DescriptionTable table;
  if (!metadata_path.empty()) {
    table = metadata::load_descriptions(metadata_path, schema_from(schema_path));
    a.input(metadata_path);
  } else {
    store::FileStore s(store_root(c));
    table = s.descriptions();
    a.store(s.root());
  }
  auto enc = metadata::parse_encoding(encoding);
  auto method = similarity::parse_linkage(linkage_name);
  a.add("encoding: " + encoding + ", then column min-max scaling");
  a.add("linkage: " + linkage_name);
  a.add("cut-fraction: " + std::to_string(fraction));
  auto d = similarity::pairwise_euclidean(metadata::prepare(table, enc));
  auto tree = similarity::linkage(d, method);
  auto clusters = similarity::cut_at_fraction(tree, fraction);

  auto o = open_out(c.out, "clusters.csv");
  a.header(o);
  o << "building_id,cluster\n";
  for (std::size_t i = 0; i < clusters.ids.size(); ++i) o << clusters.ids[i] << ',' << clusters.labels[i] << '\n';
  similarity::write_linkage(fs::path(c.out) / "linkage.csv", tree, a.lines);
  svg::write(fs::path(c.out) / "dendrogram.svg",
             svg::dendrogram(tree, a.svg("Description dendrogram (" + linkage_name + ", " + encoding + ")", c.svg_timestamp),
                             fraction * tree.max_height()));
  for (const auto& g : clusters.groups()) {
    std::string line;
    for (const auto& id : g) line += (line.empty() ? "" : " ") + id;
    std::cout << "cluster: " << line << "\n";
  }
}

// ---- select

selection::SelectionRule rule_from(std::size_t k, std::optional<double> threshold) {
  auto r = threshold ? selection::SelectionRule::within(*threshold) : selection::SelectionRule::top(k);
  r.validate();
  return r;
}

void cmd_select(const Common& c, const std::string& target_text, std::size_t k, std::optional<double> threshold,
                const std::string& encoding, const std::vector<std::string>& exclude) {
  store::FileStore s(store_root(c));
  auto table = s.descriptions();
  for (const auto& id : exclude) table = selection::without(table, id);
  auto target = metadata::parse_description(table.schema, parse_key_values(target_text), "target", true);
  auto rule = rule_from(k, threshold);
  auto result = selection::select_sources(target, table, rule, metadata::parse_encoding(encoding));
  Artifact a("select", c);
  a.store(s.root());
  a.add("target: " + target_text);
  a.add("rule: " + rule.to_string());
  a.add("encoding: " + encoding + ", then column min-max scaling");
  auto o = open_out(c.out, "selection.csv");
  a.header(o);
  o << "rank,building_id,distance\n";
  std::cout << "rank,building_id,distance\n";
  for (std::size_t i = 0; i < result.sources.size(); ++i) {
    o << i + 1 << ',' << result.sources[i].building_id << ',' << result.sources[i].distance << '\n';
    std::cout << i + 1 << ',' << result.sources[i].building_id << ',' << result.sources[i].distance << "\n";
  }
}

// ---- train

void cmd_train(const Common& c, const ModelFlags& mf, const std::vector<std::string>& buildings,
               const std::string& target_text, std::size_t k, const std::string& encoding,
               const std::string& train_range, const std::string& norm_fit) {
  store::FileStore s(store_root(c));
  Artifact a("train", c);
  a.store(s.root());
  selection::SelectionResult sel;
  if (!buildings.empty()) {
    for (const auto& b : buildings) sel.sources.push_back({b, 0.0});
    a.add("buildings: explicit");
  } else if (!target_text.empty()) {
    auto table = s.descriptions();
    auto target = metadata::parse_description(table.schema, parse_key_values(target_text), "target", true);
    sel = selection::select_sources(target, table, rule_from(k, std::nullopt), metadata::parse_encoding(encoding));
    a.add("target: " + target_text);
    a.add("rule: " + sel.rule.to_string() + " encoding: " + encoding + ", then column min-max scaling");
  } else {
    throw Error("train: pass --buildings or --target");
  }
  std::optional<DayRange> range;
  if (!train_range.empty()) range = DayRange::parse(train_range);
  a.add("train-range: " + (range ? range->to_string() : std::string("all")));
  auto cfg = mf.config(c.seed);
  for (auto& l : model_comments(cfg)) a.add(l);

  a.add("norm-fit: " + norm_fit);
  auto data = selection::assemble_training_set(sel, s, range, selection::parse_norm_fit(norm_fit));
  for (const auto& d : data.diagnostics) std::cerr << "warning: " << d << "\n";
  auto result = model::train(model::init_model(cfg), data);
  fs::create_directories(c.out);
  model::save_checkpoint(fs::path(c.out) / "model.json", result.model);

  auto h = open_out(c.out, "history.csv");
  a.header(h);
  h << "# stop: " << model::to_string(result.history.stop_reason) << " best_epoch: " << result.history.best_epoch << '\n';
  h << "epoch,loss,learning_rate\n";
  for (int e = 0; e < result.history.epochs(); ++e) {
    h << e << ',' << result.history.losses[static_cast<std::size_t>(e)] << ','
      << result.history.learning_rates[static_cast<std::size_t>(e)] << '\n';
  }
  auto p = open_out(c.out, "provenance.csv");
  a.header(p);
  p << "building_id,distance,windows\n";
  for (const auto& src : sel.sources) {
    auto n = std::count_if(data.windows.begin(), data.windows.end(),
                           [&](const timeseries::Window& w) { return w.building_id == src.building_id; });
    p << src.building_id << ',' << src.distance << ',' << n << '\n';
  }
  std::cout << "windows: " << data.size() << "\nepochs: " << result.history.epochs()
            << " (" << model::to_string(result.history.stop_reason) << ")\nbest loss: " << result.history.best_loss
            << "\ncheckpoint sha256: " << sha256_file(fs::path(c.out) / "model.json") << "\n";
}

// ---- eval-matrix

struct EvalFlags {
  std::string train_range;
  std::string test_range;
  std::size_t min_windows = 30;
  std::string scale = "on";
  bool raw_scale = false;
  unsigned threads = 0;
  std::string linkage = "average";
  std::string encoding = "onehot";
  double fraction = 0.7;
};

void cmd_eval_matrix(const Common& c, const ModelFlags& mf, const EvalFlags& f) {
  store::FileStore s(store_root(c));
  Artifact a("eval-matrix", c);
  a.store(s.root());
  evaluation::MatrixConfig cfg;
  cfg.model = mf.config(c.seed);
  cfg.train = DayRange::parse(f.train_range);
  cfg.test = DayRange::parse(f.test_range);
  cfg.min_train_windows = f.min_windows;
  cfg.scale = f.scale == "on";
  cfg.raw_scale = f.raw_scale;
  cfg.threads = f.threads;
  a.add("train-range: " + cfg.train.to_string() + " test-range: " + cfg.test.to_string());
  a.add("min-windows: " + std::to_string(f.min_windows) + " scale: " + f.scale +
        " rmse: " + (f.raw_scale ? "raw" : "normalised"));
  a.add("linkage: " + f.linkage + " encoding: " + f.encoding + " (column min-max scaled) cut-fraction: " + std::to_string(f.fraction));
  for (auto& l : model_comments(cfg.model)) a.add(l);

  std::vector<evaluation::FleetMember> fleet;
  for (const auto& l : s.links()) fleet.push_back({l.building_id, s.energy(l.series_id), s.weather(l.station_id)});
  auto m = evaluation::cross_building_matrix(fleet, cfg);
  fs::create_directories(c.out);
  evaluation::write_matrix(fs::path(c.out) / "matrix.csv", m, a.lines);
  auto method = similarity::parse_linkage(f.linkage);
  auto errors = evaluation::error_matrix_clusters(m, f.fraction, method);

  auto table = s.descriptions();
  metadata::DescriptionTable included = table;
  std::erase_if(included.rows, [&](const metadata::BuildingDescription& r) {
    return std::find(m.ids.begin(), m.ids.end(), r.building_id) == m.ids.end();
  });
  auto dtree = similarity::linkage(
      similarity::pairwise_euclidean(metadata::prepare(included, metadata::parse_encoding(f.encoding))), method);
  auto dclusters = similarity::cut_at_fraction(dtree, f.fraction);
  const double agreement = evaluation::clustering_agreement(dclusters, errors.clusters);

  auto o = open_out(c.out, "clusters.csv");
  a.header(o);
  o << "# rand-index: " << agreement << '\n';
  o << "building_id,description_cluster,error_cluster\n";
  for (const auto& id : m.ids) o << id << ',' << dclusters.label_of(id) << ',' << errors.clusters.label_of(id) << '\n';
  svg::write(fs::path(c.out) / "heatmap.svg",
             svg::heatmap(m.ids, m.values, a.svg("Cross-building test error", c.svg_timestamp)));
  svg::write(fs::path(c.out) / "dendrogram_errors.svg",
             svg::dendrogram(errors.tree, a.svg("Clustering of cross-building errors", c.svg_timestamp),
                             f.fraction * errors.tree.max_height()));
  svg::write(fs::path(c.out) / "dendrogram_description.svg",
             svg::dendrogram(dtree, a.svg("Clustering of descriptions", c.svg_timestamp),
                             f.fraction * dtree.max_height()));
  for (const auto& e : m.excluded) std::cout << "excluded " << e.id << ": " << e.reason << "\n";
  std::cout << "buildings: " << m.size() << "\nrand index (description vs error clusters): " << agreement << "\n";
}

// ---- serve

std::atomic<bool> interrupted{false};
extern "C" void on_signal(int) { interrupted = true; }

void cmd_serve(const Common& c, const ModelFlags& mf, const std::string& host, int port, unsigned workers,
               std::size_t k, const std::string& train_range) {
  auto s = std::make_shared<store::FileStore>(store_root(c));
  fs::create_directories(c.out);
  workflow::BusOptions bo;
  bo.workers = workers;
  bo.log_path = fs::path(c.out) / "messages.ndjson";
  workflow::InProcessBus bus(bo);
  workflow::WorkflowConfig wc;
  wc.model = mf.config(c.seed);
  wc.rule = selection::SelectionRule::top(k);
  if (!train_range.empty()) wc.train_range = DayRange::parse(train_range);
  workflow::Engine engine(s, bus, wc);
  service::Service svc(engine);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  bus.start();
  const int bound = svc.start(host, port);
  std::cout << "listening on " << host << ":" << bound << std::endl;
  while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  svc.stop();
  engine.fail_in_flight("shutdown");
  bus.stop();
  std::size_t failed = 0;
  for (const auto& r : engine.requests()) failed += r.failure_reason == "shutdown";
  std::cout << "stopped; " << failed << " in-flight request(s) marked failed (shutdown)" << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossgrid: cross-building energy forecasting from building descriptions"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  Common c;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--store", c.store, "Store directory (default $CROSSGRID_DATA_DIR or ./crossgrid-data)");
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_flag("--svg-timestamp", c.svg_timestamp, "Stamp SVG figures with the generation time");
  };
  ModelFlags mf;

  auto* synth = app.add_subcommand("synth", "Write a seeded two-group synthetic fleet into the store");
  common(synth);
  std::size_t per_group = 3, days = 180, train_days = 140;
  synth->add_option("--per-group", per_group)->capture_default_str();
  synth->add_option("--days", days)->capture_default_str();
  synth->add_option("--train-days", train_days)->capture_default_str();

  auto* ingest = app.add_subcommand("ingest", "Import metadata, raw energy and weather files into the store");
  common(ingest);
  IngestFlags inf;
  ingest->add_option("--metadata", inf.metadata, "Building description table")->check(CLI::ExistingFile);
  ingest->add_option("--schema", inf.schema, "Schema file (default: household schema)")->check(CLI::ExistingFile);
  ingest->add_option("--energy", inf.energy, "Raw energy file, optionally ID=FILE")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ingest->add_option("--weather", inf.weather, "Raw weather file")->check(CLI::ExistingFile);
  ingest->add_option("--weather-daily", inf.weather_daily, "Daily weather file")->check(CLI::ExistingFile);
  ingest->add_option("--station", inf.station, "Weather station id (default: file stem)");
  ingest->add_option("--ts-column", inf.ts_column)->capture_default_str();
  ingest->add_option("--value-column", inf.value_column)->capture_default_str();
  ingest->add_option("--delimiter", inf.delimiter)->capture_default_str();
  ingest->add_option("--coverage", inf.coverage, "Minimum fraction of expected readings per day")->capture_default_str();

  auto* cluster = app.add_subcommand("cluster", "Hierarchical clustering of building descriptions");
  common(cluster);
  std::string metadata_path, schema_path, encoding = "onehot", linkage_name = "average";
  double fraction = 0.7;
  cluster->add_option("--metadata", metadata_path, "Description table (default: the store's)")->check(CLI::ExistingFile);
  cluster->add_option("--schema", schema_path)->check(CLI::ExistingFile);
  cluster->add_option("--encoding", encoding)->check(CLI::IsMember({"label", "onehot"}))->capture_default_str();
  cluster->add_option("--linkage", linkage_name)
      ->check(CLI::IsMember({"single", "complete", "average"}))
      ->capture_default_str();
  cluster->add_option("--cut-fraction", fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();

  auto* select = app.add_subcommand("select", "Rank source buildings for a target description");
  common(select);
  std::string target;
  std::size_t k = 3;
  std::optional<double> threshold;
  std::vector<std::string> exclude;
  select->add_option("--target", target, "key=value description")->required();
  select->add_option("--k", k, "Top-k rule")->capture_default_str();
  select->add_option("--threshold", threshold, "Distance threshold rule (overrides --k)");
  select->add_option("--encoding", encoding)->check(CLI::IsMember({"label", "onehot"}))->capture_default_str();
  select->add_option("--exclude", exclude, "Building ids left out of the sources")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  auto* train = app.add_subcommand("train", "Train a forecasting model on selected or explicit buildings");
  common(train);
  mf.add(train);
  std::vector<std::string> buildings;
  std::string train_range;
  train->add_option("--buildings", buildings, "Explicit source buildings")->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  train->add_option("--target", target, "key=value description; sources chosen by selection");
  train->add_option("--k", k)->capture_default_str();
  train->add_option("--encoding", encoding)->check(CLI::IsMember({"label", "onehot"}))->capture_default_str();
  train->add_option("--train-range", train_range, "A..B (YYYY-MM-DD)");
  std::string norm_fit = "global";
  train->add_option("--norm-fit", norm_fit, "Min-max fit across sources")
      ->check(CLI::IsMember({"global", "per-building"}))
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval-matrix", "Cross-building error matrix and cluster agreement");
  common(eval);
  ModelFlags emf;
  emf.add(eval);
  EvalFlags ef;
  eval->add_option("--train-range", ef.train_range)->required();
  eval->add_option("--test-range", ef.test_range)->required();
  eval->add_option("--min-windows", ef.min_windows)->capture_default_str();
  eval->add_option("--scale", ef.scale)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  eval->add_flag("--raw-scale", ef.raw_scale, "RMSE in consumption units");
  eval->add_option("--threads", ef.threads, "0 = all cores")->capture_default_str();
  eval->add_option("--linkage", ef.linkage)->check(CLI::IsMember({"single", "complete", "average"}))->capture_default_str();
  eval->add_option("--encoding", ef.encoding)->check(CLI::IsMember({"label", "onehot"}))->capture_default_str();
  eval->add_option("--cut-fraction", ef.fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the request workflow behind an HTTP endpoint");
  common(serve);
  ModelFlags smf;
  smf.add(serve);
  std::string host = "127.0.0.1";
  int port = 8080;
  unsigned workers = 2;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--workers", workers)->capture_default_str();
  serve->add_option("--k", k)->capture_default_str();
  serve->add_option("--train-range", train_range);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) cmd_synth(c, per_group, days, train_days);
    if (*ingest) cmd_ingest(c, inf);
    if (*cluster) cmd_cluster(c, metadata_path, schema_path, encoding, linkage_name, fraction);
    if (*select) cmd_select(c, target, k, threshold, encoding, exclude);
    if (*train) cmd_train(c, mf, buildings, target, k, encoding, train_range, norm_fit);
    if (*eval) cmd_eval_matrix(c, emf, ef);
    if (*serve) cmd_serve(c, smf, host, port, workers, k, train_range);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
