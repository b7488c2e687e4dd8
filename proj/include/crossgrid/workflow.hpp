#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "crossgrid/model.hpp"
#include "crossgrid/selection.hpp"
#include "crossgrid/store.hpp"

namespace crossgrid::workflow {

using json = nlohmann::json;

enum class MessageKind {
  selection_request,
  selection_result,
  series_request,
  series_response,
  weather_request,
  weather_response,
  train_request,
  model_ready,
  forecast_request,
  forecast_response,
  failure,
};
std::string_view to_string(MessageKind k);
MessageKind parse_message_kind(std::string_view s);

struct MessageEnvelope {
  std::string message_id;
  std::string request_id;
  MessageKind kind = MessageKind::failure;
  json payload = json::object();
  int attempt = 1;

  json to_json() const;
  static MessageEnvelope from_json(const json& j);
};

/// Newline-delimited envelopes.
std::vector<MessageEnvelope> read_message_log(const std::filesystem::path& path);

using Handler = std::function<void(const MessageEnvelope&)>;

class MessageBus {
 public:
  virtual ~MessageBus() = default;
  /// Queues `m` for every subscriber of its kind; fills in message_id.
  virtual std::string publish(MessageEnvelope m) = 0;
  virtual void subscribe(MessageKind kind, std::string name, Handler h) = 0;
};

struct BusOptions {
  int max_attempts = 3;
  unsigned workers = 1;
  std::filesystem::path log_path;  // NDJSON delivery log, optional
};

/// At-least-once in-process queue. A handler that throws gets the message
/// again with attempt + 1; after `max_attempts` a Failure is published.
class InProcessBus : public MessageBus {
 public:
  explicit InProcessBus(BusOptions opt = {});
  ~InProcessBus() override;
  InProcessBus(const InProcessBus&) = delete;
  InProcessBus& operator=(const InProcessBus&) = delete;

  std::string publish(MessageEnvelope m) override;
  void subscribe(MessageKind kind, std::string name, Handler h) override;

  /// Background workers; without them use run_until_idle().
  void start();
  void stop();
  /// Dispatches on the calling thread until the queue is empty.
  std::size_t run_until_idle();
  /// Blocks until queue empty and no handler running (workers started).
  bool wait_idle(std::chrono::milliseconds timeout);

  /// Every delivery attempt in dispatch order.
  std::vector<MessageEnvelope> log() const;
  std::size_t redeliveries() const;
  const BusOptions& options() const { return opt_; }

 private:
  struct Subscriber {
    MessageKind kind;
    std::string name;
    Handler handler;
  };
  struct Delivery {
    MessageEnvelope message;
    std::size_t subscriber;
  };

  bool dispatch_one(std::unique_lock<std::mutex>& lock);
  void record(const MessageEnvelope& m);

  BusOptions opt_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Delivery> queue_;
  std::vector<Subscriber> subscribers_;
  std::vector<MessageEnvelope> log_;
  std::ofstream log_file_;
  std::uint64_t next_id_ = 1;
  std::size_t in_flight_ = 0;
  std::size_t redeliveries_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

enum class RequestState { received, selected, data_loaded, trained, completed, failed };
std::string_view to_string(RequestState s);

struct Forecast {
  std::vector<Day> days;
  std::vector<double> values;
};

struct RequestRecord {
  std::string request_id;
  std::vector<std::pair<std::string, std::string>> description;
  selection::SelectionRule rule;
  RequestState state = RequestState::received;
  std::vector<std::pair<RequestState, std::string>> transitions;  // state, UTC time
  std::optional<selection::SelectionResult> selection;
  std::optional<Forecast> forecast;
  std::string model_key;
  std::string failure_reason;

  bool terminal() const { return state == RequestState::completed || state == RequestState::failed; }
  json to_json() const;
};

struct WorkflowConfig {
  selection::SelectionRule rule;
  metadata::Encoding encoding = metadata::Encoding::onehot;
  model::ModelConfig model;
  std::optional<DayRange> train_range;
  bool use_cache = true;
  bool strict_schema = true;
};

/// Rejected submission; `fields` lists offending keys when known.
class InvalidRequest : public Error {
 public:
  explicit InvalidRequest(const std::string& what) : Error(what) {}
};

/// Selection service, building-data and weather-data handlers and the
/// model-learning service wired onto one bus.
class Engine {
 public:
  Engine(std::shared_ptr<store::Store> store, MessageBus& bus, WorkflowConfig cfg);

  /// Parses `description` (key=value pairs) and publishes a
  /// SelectionRequest. Returns immediately.
  std::string submit(std::string_view description, std::optional<selection::SelectionRule> rule = std::nullopt);

  /// Throws NotFound for unknown ids.
  RequestRecord poll(const std::string& request_id) const;
  std::vector<RequestRecord> requests() const;

  /// Marks every non-terminal request failed.
  void fail_in_flight(const std::string& reason);

  /// Re-publishes the first delivery of every SelectionRequest in `log`.
  void replay(const std::vector<MessageEnvelope>& log);

  std::size_t training_runs() const;
  const WorkflowConfig& config() const { return cfg_; }

 private:
  struct Scratch {
    std::map<std::string, selection::SourceData> data;
    std::map<std::string, std::string> station_of;
  };

  void on_selection_request(const MessageEnvelope& m);
  void on_selection_result(const MessageEnvelope& m);
  void on_series_request(const MessageEnvelope& m);
  void on_series_response(const MessageEnvelope& m);
  void on_weather_request(const MessageEnvelope& m);
  void on_weather_response(const MessageEnvelope& m);
  void on_train_request(const MessageEnvelope& m);
  void on_model_ready(const MessageEnvelope& m);
  void on_forecast_request(const MessageEnvelope& m);
  void on_forecast_response(const MessageEnvelope& m);
  void on_failure(const MessageEnvelope& m);

  /// Runs `body` once per (request_id, kind, handler); a throwing body
  /// leaves the key unclaimed so redelivery can retry it.
  void once(const std::string& handler, const MessageEnvelope& m, const std::function<void()>& body);
  void publish(const std::string& request_id, MessageKind kind, json payload);
  bool advance(const std::string& request_id, RequestState from, RequestState to);
  void create_record(RequestRecord r);
  std::string model_key(const RequestRecord& r) const;

  std::shared_ptr<store::Store> store_;
  MessageBus& bus_;
  WorkflowConfig cfg_;

  mutable std::mutex mu_;
  std::map<std::string, RequestRecord> records_;
  std::set<std::string> done_;
  std::set<std::string> running_;
  std::map<std::string, Scratch> scratch_;
  std::map<std::string, std::shared_ptr<const model::ForecastModel>> cache_;
  std::uint64_t next_request_ = 1;
  std::size_t training_runs_ = 0;
};

/// Forecast inputs from source data: the latest day D such that the
/// station has weather for D-6..D+7 and at least one source has
/// consumption for D-6..D. Consumption is averaged over those sources.
struct ForecastInputs {
  std::array<double, 7> last_week{};
  model::WeatherWeek current{};
  model::WeatherWeek next{};
  std::vector<Day> forecast_days;
};
ForecastInputs forecast_inputs(const std::vector<const timeseries::DailySeries*>& sources,
                               const timeseries::WeatherSeries& weather);

json series_to_json(const timeseries::DailySeries& s);
timeseries::DailySeries series_from_json(const json& j);
json weather_to_json(const timeseries::WeatherSeries& w);
timeseries::WeatherSeries weather_from_json(const json& j);

}  // namespace crossgrid::workflow
