#include "crossgrid/workflow.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "crossgrid/delimited.hpp"

namespace crossgrid::workflow {

namespace {

constexpr std::array<std::pair<MessageKind, std::string_view>, 11> kind_names{{
    {MessageKind::selection_request, "SelectionRequest"},
    {MessageKind::selection_result, "SelectionResult"},
    {MessageKind::series_request, "SeriesRequest"},
    {MessageKind::series_response, "SeriesResponse"},
    {MessageKind::weather_request, "WeatherRequest"},
    {MessageKind::weather_response, "WeatherResponse"},
    {MessageKind::train_request, "TrainRequest"},
    {MessageKind::model_ready, "ModelReady"},
    {MessageKind::forecast_request, "ForecastRequest"},
    {MessageKind::forecast_response, "ForecastResponse"},
    {MessageKind::failure, "Failure"},
}};

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::time_point_cast<std::chrono::milliseconds>(now);
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char ms[8];
  std::snprintf(ms, sizeof ms, ".%03dZ", static_cast<int>(secs.time_since_epoch().count() % 1000));
  return std::string(buf) + ms;
}

std::string padded(const char* prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06llu", prefix, static_cast<unsigned long long>(n));
  return buf;
}

}  // namespace

std::string_view to_string(MessageKind k) {
  for (auto& [kind, name] : kind_names) {
    if (kind == k) return name;
  }
  return "?";
}

MessageKind parse_message_kind(std::string_view s) {
  for (auto& [kind, name] : kind_names) {
    if (name == s) return kind;
  }
  throw Error("unknown message kind '" + std::string(s) + "'");
}

json MessageEnvelope::to_json() const {
  return {{"message_id", message_id},
          {"request_id", request_id},
          {"kind", std::string(to_string(kind))},
          {"attempt", attempt},
          {"payload", payload}};
}

MessageEnvelope MessageEnvelope::from_json(const json& j) {
  MessageEnvelope m;
  m.message_id = j.at("message_id").get<std::string>();
  m.request_id = j.at("request_id").get<std::string>();
  m.kind = parse_message_kind(j.at("kind").get<std::string>());
  m.attempt = j.at("attempt").get<int>();
  m.payload = j.at("payload");
  return m;
}

std::vector<MessageEnvelope> read_message_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::vector<MessageEnvelope> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(MessageEnvelope::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---- InProcessBus

InProcessBus::InProcessBus(BusOptions opt) : opt_(std::move(opt)) {
  if (opt_.max_attempts < 1) throw Error("bus: max_attempts must be >= 1");
  if (!opt_.log_path.empty()) {
    log_file_.open(opt_.log_path, std::ios::app);
    if (!log_file_) throw Error("cannot open message log " + opt_.log_path.string());
  }
}

InProcessBus::~InProcessBus() { stop(); }

std::string InProcessBus::publish(MessageEnvelope m) {
  std::lock_guard lock(mu_);
  if (m.message_id.empty()) m.message_id = padded("msg-", next_id_++);
  if (m.attempt < 1) m.attempt = 1;
  for (std::size_t s = 0; s < subscribers_.size(); ++s) {
    if (subscribers_[s].kind == m.kind) queue_.push_back({m, s});
  }
  cv_.notify_one();
  return m.message_id;
}

void InProcessBus::subscribe(MessageKind kind, std::string name, Handler h) {
  std::lock_guard lock(mu_);
  subscribers_.push_back({kind, std::move(name), std::move(h)});
}

void InProcessBus::record(const MessageEnvelope& m) {
  log_.push_back(m);
  if (log_file_.is_open()) {
    log_file_ << m.to_json().dump() << '\n';
    log_file_.flush();
  }
}

bool InProcessBus::dispatch_one(std::unique_lock<std::mutex>& lock) {
  if (queue_.empty()) return false;
  Delivery d = std::move(queue_.front());
  queue_.pop_front();
  ++in_flight_;
  record(d.message);
  Handler handler = subscribers_[d.subscriber].handler;
  const std::string name = subscribers_[d.subscriber].name;
  lock.unlock();
  std::string error;
  try {
    handler(d.message);
  } catch (const std::exception& e) {
    error = e.what();
    if (error.empty()) error = "handler failed";
  } catch (...) {
    error = "handler failed";
  }
  lock.lock();
  if (!error.empty()) {
    if (d.message.attempt < opt_.max_attempts) {
      ++redeliveries_;
      d.message.attempt += 1;
      queue_.push_back(std::move(d));
    } else if (d.message.kind != MessageKind::failure) {
      MessageEnvelope f;
      f.message_id = padded("msg-", next_id_++);
      f.request_id = d.message.request_id;
      f.kind = MessageKind::failure;
      f.payload = {{"reason", error},
                   {"handler", name},
                   {"failed_kind", std::string(to_string(d.message.kind))},
                   {"attempts", d.message.attempt}};
      for (std::size_t s = 0; s < subscribers_.size(); ++s) {
        if (subscribers_[s].kind == MessageKind::failure) queue_.push_back({f, s});
      }
    }
  }
  --in_flight_;
  cv_.notify_all();
  idle_cv_.notify_all();
  return true;
}

std::size_t InProcessBus::run_until_idle() {
  std::unique_lock lock(mu_);
  std::size_t n = 0;
  while (dispatch_one(lock)) ++n;
  return n;
}

void InProcessBus::start() {
  std::lock_guard lock(mu_);
  if (!workers_.empty()) return;
  stopping_ = false;
  for (unsigned w = 0; w < std::max(1u, opt_.workers); ++w) {
    workers_.emplace_back([this] {
      std::unique_lock lock(mu_);
      while (true) {
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        dispatch_one(lock);
      }
    });
  }
}

void InProcessBus::stop() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    cv_.notify_all();
  }
  for (auto& t : workers_) t.join();
  workers_.clear();
}

bool InProcessBus::wait_idle(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  return idle_cv_.wait_for(lock, timeout, [&] { return queue_.empty() && in_flight_ == 0; });
}

std::vector<MessageEnvelope> InProcessBus::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t InProcessBus::redeliveries() const {
  std::lock_guard lock(mu_);
  return redeliveries_;
}

// ---- records

std::string_view to_string(RequestState s) {
  switch (s) {
    case RequestState::received: return "received";
    case RequestState::selected: return "selected";
    case RequestState::data_loaded: return "data-loaded";
    case RequestState::trained: return "trained";
    case RequestState::completed: return "completed";
    case RequestState::failed: return "failed";
  }
  return "?";
}

json RequestRecord::to_json() const {
  json j{{"request_id", request_id}, {"state", std::string(to_string(state))}, {"rule", rule.to_string()}};
  json desc = json::object();
  for (auto& [k, v] : description) desc[k] = v;
  j["description"] = desc;
  json tr = json::array();
  for (auto& [s, t] : transitions) tr.push_back({{"state", std::string(to_string(s))}, {"at", t}});
  j["transitions"] = tr;
  if (selection) {
    json src = json::array();
    for (auto& s : selection->sources) src.push_back({{"building_id", s.building_id}, {"distance", s.distance}});
    j["selection"] = {{"sources", src},
                      {"encoding", std::string(metadata::to_string(selection->encoding))},
                      {"rule", selection->rule.to_string()}};
  }
  if (forecast) {
    json days = json::array();
    for (Day d : forecast->days) days.push_back(format_date(d));
    j["forecast"] = {{"days", days}, {"values", forecast->values}};
  }
  if (!model_key.empty()) j["model_key"] = model_key;
  if (!failure_reason.empty()) j["failure_reason"] = failure_reason;
  return j;
}

// ---- serialisation of series

json series_to_json(const timeseries::DailySeries& s) {
  json days = json::array(), values = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    days.push_back(format_date(s.days[i]));
    values.push_back(s.values[i] ? json(*s.values[i]) : json(nullptr));
  }
  return {{"id", s.id}, {"unit", s.unit}, {"days", days}, {"values", values}};
}

timeseries::DailySeries series_from_json(const json& j) {
  timeseries::DailySeries s;
  s.id = j.at("id").get<std::string>();
  s.unit = j.value("unit", "");
  const auto& days = j.at("days");
  const auto& values = j.at("values");
  if (days.size() != values.size()) throw Error("series '" + s.id + "': days and values differ in length");
  for (std::size_t i = 0; i < days.size(); ++i) {
    s.days.push_back(parse_date(days[i].get<std::string>()));
    s.values.push_back(values[i].is_null() ? std::nullopt : std::optional<double>(values[i].get<double>()));
  }
  return s;
}

json weather_to_json(const timeseries::WeatherSeries& w) {
  json ch = json::array();
  for (const auto& c : w.channels) ch.push_back(series_to_json(c));
  return {{"station_id", w.station_id}, {"channels", ch}};
}

timeseries::WeatherSeries weather_from_json(const json& j) {
  timeseries::WeatherSeries w;
  w.station_id = j.at("station_id").get<std::string>();
  const auto& ch = j.at("channels");
  if (ch.size() != 3) throw Error("weather '" + w.station_id + "': expected 3 channels");
  for (std::size_t c = 0; c < 3; ++c) w.channels[c] = series_from_json(ch[c]);
  return w;
}

ForecastInputs forecast_inputs(const std::vector<const timeseries::DailySeries*>& sources,
                               const timeseries::WeatherSeries& weather) {
  const auto& ref = weather.channels[0];
  if (ref.size() == 0 || sources.empty()) throw Error("forecast: no weather or source data");
  auto weather_ok = [&](Day d) {
    for (const auto& c : weather.channels) {
      if (!c.at(d)) return false;
    }
    return true;
  };
  for (Day d = ref.days.back() - 7; d >= ref.days.front() + 6; --d) {
    bool ok = true;
    for (Day k = d - 6; k <= d + 7 && ok; ++k) ok = weather_ok(k);
    if (!ok) continue;
    std::vector<const timeseries::DailySeries*> usable;
    for (const auto* s : sources) {
      bool full = true;
      for (Day k = d - 6; k <= d && full; ++k) full = s->at(k).has_value();
      if (full) usable.push_back(s);
    }
    if (usable.empty()) continue;
    ForecastInputs in;
    for (std::size_t t = 0; t < 7; ++t) {
      const Day cur = d - 6 + static_cast<Day>(t);
      double sum = 0.0;
      for (const auto* s : usable) sum += *s->at(cur);
      in.last_week[t] = sum / static_cast<double>(usable.size());
      for (std::size_t c = 0; c < 3; ++c) {
        in.current[t][c] = *weather.channels[c].at(cur);
        in.next[t][c] = *weather.channels[c].at(cur + 7);
      }
      in.forecast_days.push_back(cur + 7);
    }
    return in;
  }
  throw Error("forecast: no week with complete consumption and two weeks of weather");
}

// ---- Engine

Engine::Engine(std::shared_ptr<store::Store> store, MessageBus& bus, WorkflowConfig cfg)
    : store_(std::move(store)), bus_(bus), cfg_(std::move(cfg)) {
  cfg_.rule.validate();
  cfg_.model.validate();
  auto bind = [this](MessageKind k, const char* name, void (Engine::*fn)(const MessageEnvelope&)) {
    bus_.subscribe(k, name, [this, fn](const MessageEnvelope& m) { (this->*fn)(m); });
  };
  bind(MessageKind::selection_request, "selection-service", &Engine::on_selection_request);
  bind(MessageKind::selection_result, "model-learning", &Engine::on_selection_result);
  bind(MessageKind::series_request, "building-data", &Engine::on_series_request);
  bind(MessageKind::series_response, "model-learning", &Engine::on_series_response);
  bind(MessageKind::weather_request, "weather-data", &Engine::on_weather_request);
  bind(MessageKind::weather_response, "model-learning", &Engine::on_weather_response);
  bind(MessageKind::train_request, "model-learning", &Engine::on_train_request);
  bind(MessageKind::model_ready, "model-learning", &Engine::on_model_ready);
  bind(MessageKind::forecast_request, "model-learning", &Engine::on_forecast_request);
  bind(MessageKind::forecast_response, "request-tracker", &Engine::on_forecast_response);
  bind(MessageKind::failure, "request-tracker", &Engine::on_failure);
}

void Engine::publish(const std::string& request_id, MessageKind kind, json payload) {
  MessageEnvelope m;
  m.request_id = request_id;
  m.kind = kind;
  m.payload = std::move(payload);
  bus_.publish(std::move(m));
}

void Engine::create_record(RequestRecord r) {
  std::lock_guard lock(mu_);
  r.transitions.push_back({RequestState::received, utc_now()});
  records_[r.request_id] = std::move(r);
}

std::string Engine::submit(std::string_view description, std::optional<selection::SelectionRule> rule) {
  std::vector<std::pair<std::string, std::string>> pairs;
  try {
    pairs = parse_key_values(description);
  } catch (const Error& e) {
    throw InvalidRequest(e.what());
  }
  if (pairs.empty()) throw InvalidRequest("empty description");
  const auto schema = store_->descriptions().schema;
  try {
    metadata::parse_description(schema, pairs, "target", cfg_.strict_schema);
  } catch (const Error& e) {
    throw InvalidRequest(e.what());
  }
  selection::SelectionRule r = rule.value_or(cfg_.rule);
  try {
    r.validate();
  } catch (const Error& e) {
    throw InvalidRequest(e.what());
  }

  RequestRecord rec;
  {
    std::lock_guard lock(mu_);
    rec.request_id = padded("req-", next_request_++);
  }
  rec.description = pairs;
  rec.rule = r;
  const std::string id = rec.request_id;
  create_record(std::move(rec));
  json desc = json::array();
  for (auto& [k, v] : pairs) desc.push_back({k, v});
  publish(id, MessageKind::selection_request,
          {{"description", desc}, {"rule", r.to_string()}, {"encoding", std::string(metadata::to_string(cfg_.encoding))}});
  return id;
}

void Engine::replay(const std::vector<MessageEnvelope>& log) {
  for (const auto& m : log) {
    if (m.kind != MessageKind::selection_request || m.attempt != 1) continue;
    RequestRecord rec;
    rec.request_id = m.request_id;
    for (const auto& kv : m.payload.at("description")) {
      rec.description.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
    rec.rule = selection::SelectionRule::parse(m.payload.at("rule").get<std::string>());
    {
      std::lock_guard lock(mu_);
      if (records_.count(rec.request_id)) continue;
      if (rec.request_id.rfind("req-", 0) == 0) {
        std::uint64_t n = std::strtoull(rec.request_id.c_str() + 4, nullptr, 10);
        next_request_ = std::max(next_request_, n + 1);
      }
    }
    create_record(std::move(rec));
    MessageEnvelope copy = m;
    copy.message_id.clear();
    bus_.publish(std::move(copy));
  }
}

RequestRecord Engine::poll(const std::string& request_id) const {
  std::lock_guard lock(mu_);
  auto it = records_.find(request_id);
  if (it == records_.end()) throw NotFound("unknown request '" + request_id + "'");
  return it->second;
}

std::vector<RequestRecord> Engine::requests() const {
  std::lock_guard lock(mu_);
  std::vector<RequestRecord> out;
  for (auto& [id, r] : records_) out.push_back(r);
  return out;
}

std::size_t Engine::training_runs() const {
  std::lock_guard lock(mu_);
  return training_runs_;
}

void Engine::fail_in_flight(const std::string& reason) {
  std::lock_guard lock(mu_);
  for (auto& [id, r] : records_) {
    if (r.terminal()) continue;
    r.state = RequestState::failed;
    r.failure_reason = reason;
    r.transitions.push_back({RequestState::failed, utc_now()});
  }
}

bool Engine::advance(const std::string& request_id, RequestState from, RequestState to) {
  std::lock_guard lock(mu_);
  auto it = records_.find(request_id);
  if (it == records_.end() || it->second.state != from) return false;
  it->second.state = to;
  it->second.transitions.push_back({to, utc_now()});
  return true;
}

void Engine::once(const std::string& handler, const MessageEnvelope& m, const std::function<void()>& body) {
  const std::string key = m.request_id + "|" + std::string(to_string(m.kind)) + "|" + handler;
  {
    std::lock_guard lock(mu_);
    auto it = records_.find(m.request_id);
    if (it == records_.end()) throw NotFound("message for unknown request '" + m.request_id + "'");
    // a request already failed (e.g. shutdown) gets no further work
    if (it->second.state == RequestState::failed && m.kind != MessageKind::failure) return;
    if (done_.count(key) || running_.count(key)) return;
    running_.insert(key);
  }
  try {
    body();
  } catch (...) {
    std::lock_guard lock(mu_);
    running_.erase(key);
    throw;
  }
  std::lock_guard lock(mu_);
  running_.erase(key);
  done_.insert(key);
}

std::string Engine::model_key(const RequestRecord& r) const {
  auto pairs = r.description;
  std::sort(pairs.begin(), pairs.end());
  json j;
  j["description"] = pairs;
  j["rule"] = r.rule.to_string();
  j["encoding"] = std::string(metadata::to_string(cfg_.encoding));
  const auto& c = cfg_.model;
  j["model"] = {{"lstm", c.lstm_sizes},       {"fc", c.fc_sizes},         {"batch_norm", c.batch_norm},
                {"init_std", c.init_std},     {"lr_start", c.lr_start},   {"lr_end", c.lr_end},
                {"max_epochs", c.max_epochs}, {"patience", c.patience},   {"batch_size", c.batch_size},
                {"seed", c.seed},             {"loss", c.loss == model::LossKind::mse ? "mse" : "rmse"}};
  j["train_range"] = cfg_.train_range ? cfg_.train_range->to_string() : "all";
  return sha256_hex(j.dump());
}

void Engine::on_selection_request(const MessageEnvelope& m) {
  once("selection-service", m, [&] {
    auto table = store_->descriptions();
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& kv : m.payload.at("description")) {
      pairs.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
    auto target = metadata::parse_description(table.schema, pairs, "target", cfg_.strict_schema);
    auto rule = selection::SelectionRule::parse(m.payload.at("rule").get<std::string>());
    auto encoding = metadata::parse_encoding(m.payload.value("encoding", "onehot"));
    auto result = selection::select_sources(target, table, rule, encoding);
    {
      std::lock_guard lock(mu_);
      records_[m.request_id].selection = result;
    }
    advance(m.request_id, RequestState::received, RequestState::selected);
    json src = json::array();
    for (const auto& s : result.sources) src.push_back({{"building_id", s.building_id}, {"distance", s.distance}});
    publish(m.request_id, MessageKind::selection_result,
            {{"sources", src}, {"encoding", std::string(metadata::to_string(encoding))}, {"rule", rule.to_string()}});
  });
}

void Engine::on_selection_result(const MessageEnvelope& m) {
  once("model-learning", m, [&] {
    json ids = json::array();
    for (const auto& s : m.payload.at("sources")) ids.push_back(s.at("building_id"));
    publish(m.request_id, MessageKind::series_request, {{"buildings", ids}});
  });
}

void Engine::on_series_request(const MessageEnvelope& m) {
  once("building-data", m, [&] {
    json series = json::object();
    json missing = json::array();
    for (const auto& idj : m.payload.at("buildings")) {
      const auto id = idj.get<std::string>();
      try {
        auto link = store_->link(id);
        series[id] = {{"station_id", link.station_id}, {"series", series_to_json(store_->energy(link.series_id))}};
      } catch (const NotFound& e) {
        missing.push_back({{"building_id", id}, {"reason", e.what()}});
      }
    }
    publish(m.request_id, MessageKind::series_response, {{"series", series}, {"missing", missing}});
  });
}

void Engine::on_series_response(const MessageEnvelope& m) {
  once("model-learning", m, [&] {
    Scratch s;
    std::set<std::string> stations;
    for (const auto& [id, entry] : m.payload.at("series").items()) {
      s.data[id].energy = series_from_json(entry.at("series"));
      s.station_of[id] = entry.at("station_id").get<std::string>();
      stations.insert(s.station_of[id]);
    }
    {
      std::lock_guard lock(mu_);
      scratch_[m.request_id] = std::move(s);
    }
    publish(m.request_id, MessageKind::weather_request, {{"stations", stations}});
  });
}

void Engine::on_weather_request(const MessageEnvelope& m) {
  once("weather-data", m, [&] {
    json weather = json::object();
    json missing = json::array();
    for (const auto& sj : m.payload.at("stations")) {
      const auto id = sj.get<std::string>();
      try {
        weather[id] = weather_to_json(store_->weather(id));
      } catch (const NotFound& e) {
        missing.push_back({{"station_id", id}, {"reason", e.what()}});
      }
    }
    publish(m.request_id, MessageKind::weather_response, {{"weather", weather}, {"missing", missing}});
  });
}

void Engine::on_weather_response(const MessageEnvelope& m) {
  once("model-learning", m, [&] {
    std::map<std::string, timeseries::WeatherSeries> weather;
    for (const auto& [id, w] : m.payload.at("weather").items()) weather[id] = weather_from_json(w);
    std::string key;
    {
      std::lock_guard lock(mu_);
      auto& s = scratch_.at(m.request_id);
      for (auto it = s.data.begin(); it != s.data.end();) {
        auto w = weather.find(s.station_of[it->first]);
        if (w == weather.end()) {
          it = s.data.erase(it);  // no weather: dropped by assembly
        } else {
          it->second.weather = w->second;
          ++it;
        }
      }
      key = model_key(records_.at(m.request_id));
    }
    advance(m.request_id, RequestState::selected, RequestState::data_loaded);
    publish(m.request_id, MessageKind::train_request, {{"model_key", key}});
  });
}

void Engine::on_train_request(const MessageEnvelope& m) {
  once("model-learning", m, [&] {
    const std::string key = m.payload.at("model_key").get<std::string>();
    std::shared_ptr<const model::ForecastModel> cached;
    selection::SelectionResult sel;
    std::map<std::string, selection::SourceData> data;
    {
      std::lock_guard lock(mu_);
      if (cfg_.use_cache) {
        auto it = cache_.find(key);
        if (it != cache_.end()) cached = it->second;
      }
      sel = *records_.at(m.request_id).selection;
      data = scratch_.at(m.request_id).data;
    }
    json info{{"model_key", key}, {"cached", cached != nullptr}};
    if (!cached) {
      auto dataset = selection::assemble_training_set(sel, data, cfg_.train_range);
      auto result = model::train(model::init_model(cfg_.model), dataset);
      info["training_windows"] = dataset.size();
      info["epochs"] = result.history.epochs();
      info["best_loss"] = result.history.best_loss;
      info["stop_reason"] = std::string(model::to_string(result.history.stop_reason));
      info["diagnostics"] = dataset.diagnostics;
      std::lock_guard lock(mu_);
      cache_[key] = std::make_shared<const model::ForecastModel>(std::move(result.model));
      ++training_runs_;
    }
    {
      std::lock_guard lock(mu_);
      records_.at(m.request_id).model_key = key;
    }
    advance(m.request_id, RequestState::data_loaded, RequestState::trained);
    publish(m.request_id, MessageKind::model_ready, info);
  });
}

void Engine::on_model_ready(const MessageEnvelope& m) {
  once("model-learning", m, [&] { publish(m.request_id, MessageKind::forecast_request, {{"model_key", m.payload.at("model_key")}}); });
}

void Engine::on_forecast_request(const MessageEnvelope& m) {
  once("model-learning", m, [&] {
    const std::string key = m.payload.at("model_key").get<std::string>();
    std::shared_ptr<const model::ForecastModel> model;
    std::map<std::string, selection::SourceData> data;
    selection::SelectionResult sel;
    {
      std::lock_guard lock(mu_);
      model = cache_.at(key);
      data = scratch_.at(m.request_id).data;
      sel = *records_.at(m.request_id).selection;
    }
    std::vector<const timeseries::DailySeries*> sources;
    const timeseries::WeatherSeries* weather = nullptr;
    for (const auto& s : sel.sources) {
      auto it = data.find(s.building_id);
      if (it == data.end()) continue;
      sources.push_back(&it->second.energy);
      if (!weather) weather = &it->second.weather;  // station of the closest source
    }
    if (!weather) throw Error("forecast: no source data");
    auto in = forecast_inputs(sources, *weather);
    auto values = model::predict_week(*model, in.last_week, in.current, in.next);
    json days = json::array();
    for (Day d : in.forecast_days) days.push_back(format_date(d));
    publish(m.request_id, MessageKind::forecast_response,
            {{"days", days}, {"values", std::vector<double>(values.begin(), values.end())}, {"model_key", key}});
  });
}

void Engine::on_forecast_response(const MessageEnvelope& m) {
  once("request-tracker", m, [&] {
    Forecast f;
    for (const auto& d : m.payload.at("days")) f.days.push_back(parse_date(d.get<std::string>()));
    f.values = m.payload.at("values").get<std::vector<double>>();
    {
      std::lock_guard lock(mu_);
      records_.at(m.request_id).forecast = std::move(f);
      scratch_.erase(m.request_id);
    }
    advance(m.request_id, RequestState::trained, RequestState::completed);
  });
}

void Engine::on_failure(const MessageEnvelope& m) {
  std::lock_guard lock(mu_);
  auto it = records_.find(m.request_id);
  if (it == records_.end() || it->second.terminal()) return;
  it->second.state = RequestState::failed;
  it->second.failure_reason = m.payload.value("failed_kind", "") + " handler '" + m.payload.value("handler", "") +
                              "' failed: " + m.payload.value("reason", "");
  it->second.transitions.push_back({RequestState::failed, utc_now()});
  scratch_.erase(m.request_id);
}

}  // namespace crossgrid::workflow
