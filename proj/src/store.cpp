#include "crossgrid/store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "crossgrid/delimited.hpp"

namespace crossgrid::store {

namespace fs = std::filesystem;

Link Store::link(const std::string& building_id) const {
  for (auto& l : links()) {
    if (l.building_id == building_id) return l;
  }
  throw NotFound("no link for building '" + building_id + "'");
}

// ---- MemoryStore

metadata::DescriptionTable MemoryStore::descriptions() const {
  std::lock_guard lock(mu_);
  if (!descriptions_) throw NotFound("no descriptions stored");
  return *descriptions_;
}

std::vector<Link> MemoryStore::links() const {
  std::lock_guard lock(mu_);
  std::vector<Link> out;
  for (const auto& [id, l] : links_) out.push_back(l);
  std::sort(out.begin(), out.end(), [](const Link& a, const Link& b) { return id_less(a.building_id, b.building_id); });
  return out;
}

timeseries::DailySeries MemoryStore::energy(const std::string& series_id) const {
  std::lock_guard lock(mu_);
  auto it = energy_.find(series_id);
  if (it == energy_.end()) throw NotFound("no energy series '" + series_id + "'");
  return it->second;
}

timeseries::WeatherSeries MemoryStore::weather(const std::string& station_id) const {
  std::lock_guard lock(mu_);
  auto it = weather_.find(station_id);
  if (it == weather_.end()) throw NotFound("no weather station '" + station_id + "'");
  return it->second;
}

void MemoryStore::put_descriptions(const metadata::DescriptionTable& table) {
  std::lock_guard lock(mu_);
  descriptions_ = table;
}

void MemoryStore::put_link(const Link& link) {
  std::lock_guard lock(mu_);
  links_[link.building_id] = link;
}

void MemoryStore::put_energy(const timeseries::DailySeries& s) {
  std::lock_guard lock(mu_);
  energy_[s.id] = s;
}

void MemoryStore::put_weather(const timeseries::WeatherSeries& w) {
  std::lock_guard lock(mu_);
  weather_[w.station_id] = w;
}

// ---- FileStore

namespace {

void check_key(const std::string& key, const char* what) {
  bool ok = !key.empty() && key != "." && key != "..";
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) ok = false;
  }
  if (!ok) throw Error(std::string("invalid ") + what + " '" + key + "'");
}

template <class F>
void atomic_write(const fs::path& target, F&& write) {
  fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  write(tmp);
  fs::rename(tmp, target);
}

}  // namespace

FileStore::FileStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "energy");
  fs::create_directories(root_ / "weather");
}

metadata::DescriptionTable FileStore::descriptions() const {
  std::lock_guard lock(mu_);
  if (!fs::exists(root_ / "schema.txt") || !fs::exists(root_ / "descriptions.csv")) {
    throw NotFound("no descriptions stored under " + root_.string());
  }
  return metadata::load_descriptions(root_ / "descriptions.csv", metadata::Schema::load(root_ / "schema.txt"));
}

std::vector<Link> FileStore::links() const {
  std::lock_guard lock(mu_);
  std::vector<Link> out;
  if (!fs::exists(root_ / "links.csv")) return out;
  DelimitedReader reader(root_ / "links.csv");
  const auto b = reader.column("building_id"), s = reader.column("series_id"), w = reader.column("station_id");
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() < 3) throw Error(reader.path().string() + ":" + std::to_string(reader.line_number()) + ": too few fields");
    out.push_back({f[b], f[s], f[w]});
  }
  return out;
}

timeseries::DailySeries FileStore::energy(const std::string& series_id) const {
  check_key(series_id, "series id");
  std::lock_guard lock(mu_);
  fs::path p = root_ / "energy" / (series_id + ".csv");
  if (!fs::exists(p)) throw NotFound("no energy series '" + series_id + "'");
  return timeseries::read_daily(p, series_id);
}

timeseries::WeatherSeries FileStore::weather(const std::string& station_id) const {
  check_key(station_id, "station id");
  std::lock_guard lock(mu_);
  fs::path p = root_ / "weather" / (station_id + ".csv");
  if (!fs::exists(p)) throw NotFound("no weather station '" + station_id + "'");
  return timeseries::read_weather(p, station_id);
}

void FileStore::put_descriptions(const metadata::DescriptionTable& table) {
  std::lock_guard lock(mu_);
  atomic_write(root_ / "schema.txt", [&](const fs::path& p) {
    std::ofstream out(p);
    out << table.schema.to_text();
  });
  atomic_write(root_ / "descriptions.csv", [&](const fs::path& p) { metadata::save_descriptions(p, table); });
}

void FileStore::put_link(const Link& link) {
  check_key(link.building_id, "building id");
  check_key(link.series_id, "series id");
  check_key(link.station_id, "station id");
  std::vector<Link> all = links();
  std::lock_guard lock(mu_);
  auto it = std::find_if(all.begin(), all.end(), [&](const Link& l) { return l.building_id == link.building_id; });
  if (it != all.end()) {
    *it = link;
  } else {
    all.push_back(link);
  }
  std::sort(all.begin(), all.end(), [](const Link& a, const Link& b) { return id_less(a.building_id, b.building_id); });
  atomic_write(root_ / "links.csv", [&](const fs::path& p) {
    std::ofstream out(p);
    out << "building_id,series_id,station_id\n";
    for (const auto& l : all) out << l.building_id << ',' << l.series_id << ',' << l.station_id << '\n';
  });
}

void FileStore::put_energy(const timeseries::DailySeries& s) {
  check_key(s.id, "series id");
  std::lock_guard lock(mu_);
  atomic_write(root_ / "energy" / (s.id + ".csv"), [&](const fs::path& p) { timeseries::write_daily(p, s); });
}

void FileStore::put_weather(const timeseries::WeatherSeries& w) {
  check_key(w.station_id, "station id");
  std::lock_guard lock(mu_);
  atomic_write(root_ / "weather" / (w.station_id + ".csv"), [&](const fs::path& p) { timeseries::write_weather(p, w); });
}

// ---- FaultInjectingStore

void FaultInjectingStore::fail_next(Op op, int times) {
  std::lock_guard lock(mu_);
  pending_[op] = times;
}

void FaultInjectingStore::maybe_fail(Op op) const {
  std::lock_guard lock(mu_);
  auto it = pending_.find(op);
  if (it != pending_.end() && it->second > 0) {
    --it->second;
    ++raised_;
    throw Unavailable("store unavailable (injected fault)");
  }
}

metadata::DescriptionTable FaultInjectingStore::descriptions() const {
  maybe_fail(Op::descriptions);
  return inner_->descriptions();
}

std::vector<Link> FaultInjectingStore::links() const {
  maybe_fail(Op::links);
  return inner_->links();
}

timeseries::DailySeries FaultInjectingStore::energy(const std::string& series_id) const {
  maybe_fail(Op::energy);
  return inner_->energy(series_id);
}

timeseries::WeatherSeries FaultInjectingStore::weather(const std::string& station_id) const {
  maybe_fail(Op::weather);
  return inner_->weather(station_id);
}

std::vector<std::string> check_links(const Store& s) {
  std::vector<std::string> problems;
  std::set<std::string> ids;
  try {
    for (auto& id : s.descriptions().ids()) ids.insert(id);
  } catch (const NotFound&) {
  }
  for (const auto& l : s.links()) {
    if (!ids.count(l.building_id)) problems.push_back("link to unknown building '" + l.building_id + "'");
    try {
      s.energy(l.series_id);
    } catch (const NotFound&) {
      problems.push_back("building '" + l.building_id + "' links to missing series '" + l.series_id + "'");
    }
    try {
      s.weather(l.station_id);
    } catch (const NotFound&) {
      problems.push_back("building '" + l.building_id + "' links to missing station '" + l.station_id + "'");
    }
  }
  return problems;
}

}  // namespace crossgrid::store
