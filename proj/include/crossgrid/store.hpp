#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crossgrid/metadata.hpp"
#include "crossgrid/timeseries.hpp"

namespace crossgrid::store {

/// Transient store failure; callers may retry.
class Unavailable : public Error {
 public:
  using Error::Error;
};

/// building -> energy series -> weather station
struct Link {
  std::string building_id;
  std::string series_id;
  std::string station_id;

  bool operator==(const Link&) const = default;
};

/// Contextual, time-series and weather stores behind one handle.
/// Lookups of absent keys throw NotFound.
class Store {
 public:
  virtual ~Store() = default;

  virtual metadata::DescriptionTable descriptions() const = 0;
  virtual std::vector<Link> links() const = 0;
  virtual timeseries::DailySeries energy(const std::string& series_id) const = 0;
  virtual timeseries::WeatherSeries weather(const std::string& station_id) const = 0;

  virtual void put_descriptions(const metadata::DescriptionTable& table) = 0;
  virtual void put_link(const Link& link) = 0;
  virtual void put_energy(const timeseries::DailySeries& s) = 0;
  virtual void put_weather(const timeseries::WeatherSeries& w) = 0;

  Link link(const std::string& building_id) const;
};

class MemoryStore : public Store {
 public:
  metadata::DescriptionTable descriptions() const override;
  std::vector<Link> links() const override;
  timeseries::DailySeries energy(const std::string& series_id) const override;
  timeseries::WeatherSeries weather(const std::string& station_id) const override;

  void put_descriptions(const metadata::DescriptionTable& table) override;
  void put_link(const Link& link) override;
  void put_energy(const timeseries::DailySeries& s) override;
  void put_weather(const timeseries::WeatherSeries& w) override;

 private:
  mutable std::mutex mu_;
  std::optional<metadata::DescriptionTable> descriptions_;
  std::map<std::string, Link> links_;
  std::map<std::string, timeseries::DailySeries> energy_;
  std::map<std::string, timeseries::WeatherSeries> weather_;
};

/// Directory layout:
///
///     schema.txt  descriptions.csv  links.csv
///     energy/<series_id>.csv  weather/<station_id>.csv
///
/// Writes go through a temporary file and a rename.
class FileStore : public Store {
 public:
  explicit FileStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  metadata::DescriptionTable descriptions() const override;
  std::vector<Link> links() const override;
  timeseries::DailySeries energy(const std::string& series_id) const override;
  timeseries::WeatherSeries weather(const std::string& station_id) const override;

  void put_descriptions(const metadata::DescriptionTable& table) override;
  void put_link(const Link& link) override;
  void put_energy(const timeseries::DailySeries& s) override;
  void put_weather(const timeseries::WeatherSeries& w) override;

 private:
  std::filesystem::path root_;
  mutable std::mutex mu_;
};

/// Wraps a store and makes the next N reads of one kind throw Unavailable.
class FaultInjectingStore : public Store {
 public:
  enum class Op { descriptions, links, energy, weather };

  explicit FaultInjectingStore(std::shared_ptr<Store> inner) : inner_(std::move(inner)) {}

  void fail_next(Op op, int times);
  int failures_raised() const { return raised_; }

  metadata::DescriptionTable descriptions() const override;
  std::vector<Link> links() const override;
  timeseries::DailySeries energy(const std::string& series_id) const override;
  timeseries::WeatherSeries weather(const std::string& station_id) const override;

  void put_descriptions(const metadata::DescriptionTable& table) override { inner_->put_descriptions(table); }
  void put_link(const Link& link) override { inner_->put_link(link); }
  void put_energy(const timeseries::DailySeries& s) override { inner_->put_energy(s); }
  void put_weather(const timeseries::WeatherSeries& w) override { inner_->put_weather(w); }

 private:
  void maybe_fail(Op op) const;

  std::shared_ptr<Store> inner_;
  mutable std::mutex mu_;
  mutable std::map<Op, int> pending_;
  mutable std::atomic<int> raised_{0};
};

/// Problems with the link structure: links to unknown buildings, series or
/// stations. Empty when consistent.
std::vector<std::string> check_links(const Store& s);

}  // namespace crossgrid::store
