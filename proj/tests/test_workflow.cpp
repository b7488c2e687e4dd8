#include <doctest.h>

#include <algorithm>

#include "crossgrid/synthetic.hpp"
#include "crossgrid/workflow.hpp"
#include "test_util.hpp"

using namespace crossgrid;
using namespace crossgrid::workflow;
using store::FaultInjectingStore;

namespace {

const char* detached = "occupants=4,house_type=detached,construction_year=1965-1974,bedrooms=4,appliances=40";
const char* flat = "occupants=1, house_type=flat, construction_year=2002-2006, bedrooms=1, appliances=18";

WorkflowConfig small_config() {
  WorkflowConfig c;
  c.model.lstm_sizes = {8};
  c.model.fc_sizes = {4};
  c.model.lr_start = 0.3;
  c.model.lr_end = 0.003;
  c.model.init_std = 0.1;
  c.model.max_epochs = 8;
  c.model.patience = 0;
  c.train_range = synthetic::make_fleet().train;
  return c;
}

struct Setup {
  std::shared_ptr<store::MemoryStore> inner = std::make_shared<store::MemoryStore>();
  std::shared_ptr<FaultInjectingStore> store;
  InProcessBus bus;
  Engine engine;

  explicit Setup(WorkflowConfig cfg = small_config(), BusOptions bo = {})
      : store(make_store(inner)), bus(std::move(bo)), engine(store, bus, std::move(cfg)) {}

  static std::shared_ptr<FaultInjectingStore> make_store(const std::shared_ptr<store::MemoryStore>& inner) {
    synthetic::populate(*inner, synthetic::make_fleet());
    return std::make_shared<FaultInjectingStore>(inner);
  }
};

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<MessageKind> kinds_of(const std::vector<MessageEnvelope>& log, const std::string& request) {
  std::vector<MessageKind> out;
  for (const auto& m : log) {
    if (m.request_id == request) out.push_back(m.kind);
  }
  return out;
}

}  // namespace

TEST_CASE("message envelopes") {
  for (int k = 0; k <= static_cast<int>(MessageKind::failure); ++k) {
    auto kind = static_cast<MessageKind>(k);
    CHECK(parse_message_kind(to_string(kind)) == kind);
  }
  CHECK(to_string(MessageKind::selection_request) == "SelectionRequest");
  CHECK_THROWS_AS(parse_message_kind("Nope"), Error);
  MessageEnvelope m{"msg-000007", "req-000002", MessageKind::model_ready, {{"model_key", "abc"}}, 2};
  auto back = MessageEnvelope::from_json(m.to_json());
  CHECK(back.message_id == m.message_id);
  CHECK(back.request_id == m.request_id);
  CHECK(back.kind == m.kind);
  CHECK(back.payload == m.payload);
  CHECK(back.attempt == 2);
}

TEST_CASE("InProcessBus") {
  InProcessBus bus;
  std::vector<std::string> seen;
  int failures = 0;
  bus.subscribe(MessageKind::model_ready, "a", [&](const MessageEnvelope& m) { seen.push_back("a:" + m.request_id); });
  bus.subscribe(MessageKind::model_ready, "b", [&](const MessageEnvelope& m) {
    if (m.attempt < 3) throw std::runtime_error("flaky");
    seen.push_back("b:" + m.request_id);
  });
  bus.subscribe(MessageKind::forecast_request, "c", [&](const MessageEnvelope&) { throw std::runtime_error("broken"); });
  bus.subscribe(MessageKind::failure, "f", [&](const MessageEnvelope& m) {
    ++failures;
    CHECK(m.payload.at("handler") == "c");
    CHECK(m.payload.at("failed_kind") == "ForecastRequest");
    CHECK(m.payload.at("attempts") == 3);
    CHECK(m.payload.at("reason") == "broken");
  });

  MessageEnvelope m;
  m.request_id = "r";
  m.kind = MessageKind::model_ready;
  CHECK(bus.publish(m) == "msg-000001");
  m.kind = MessageKind::forecast_request;
  CHECK(bus.publish(m) == "msg-000002");
  bus.run_until_idle();
  CHECK(seen == std::vector<std::string>{"a:r", "b:r"});
  CHECK(failures == 1);
  CHECK(bus.redeliveries() == 4);
  // model_ready: a once, b three times; forecast_request: c three times; failure once
  CHECK(bus.log().size() == 8);

  SUBCASE("background workers") {
    InProcessBus w(BusOptions{3, 2, {}});
    std::atomic<int> count{0};
    w.subscribe(MessageKind::model_ready, "x", [&](const MessageEnvelope&) { ++count; });
    w.start();
    for (int i = 0; i < 50; ++i) w.publish(m = MessageEnvelope{{}, "r", MessageKind::model_ready, {}, 1});
    CHECK(w.wait_idle(std::chrono::seconds(10)));
    CHECK(count == 50);
    w.stop();
  }
}

TEST_CASE("workflow end to end") {
  testing::TempDir dir;
  BusOptions bo;
  bo.log_path = dir / "log.ndjson";
  Setup s(small_config(), bo);
  auto id = s.engine.submit(detached);
  CHECK(id == "req-000001");
  CHECK(s.engine.poll(id).state == RequestState::received);
  s.bus.run_until_idle();

  auto r = s.engine.poll(id);
  REQUIRE(r.state == RequestState::completed);
  std::vector<RequestState> states;
  for (auto& [st, when] : r.transitions) states.push_back(st);
  CHECK(states == std::vector<RequestState>{RequestState::received, RequestState::selected, RequestState::data_loaded,
                                            RequestState::trained, RequestState::completed});
  REQUIRE(r.selection);
  CHECK(sorted(r.selection->ids()) == std::vector<std::string>{"1", "3", "5"});
  REQUIRE(r.forecast);
  CHECK(r.forecast->values.size() == 7);
  CHECK(r.forecast->days.size() == 7);
  CHECK(r.forecast->days.back() == synthetic::make_fleet().test.last);
  CHECK(kinds_of(s.bus.log(), id) ==
        std::vector<MessageKind>{MessageKind::selection_request, MessageKind::selection_result,
                                 MessageKind::series_request,    MessageKind::series_response,
                                 MessageKind::weather_request,   MessageKind::weather_response,
                                 MessageKind::train_request,     MessageKind::model_ready,
                                 MessageKind::forecast_request,  MessageKind::forecast_response});
  CHECK(read_message_log(bo.log_path).size() == s.bus.log().size());

  SUBCASE("forecast matches a direct computation") {
    auto cfg = small_config();
    auto data = selection::assemble_training_set(*r.selection, *s.inner, cfg.train_range);
    auto trained = model::train(model::init_model(cfg.model), data);
    std::vector<const timeseries::DailySeries*> sources;
    std::vector<timeseries::DailySeries> keep;
    for (auto& b : r.selection->ids()) keep.push_back(s.inner->energy(b));
    for (auto& k : keep) sources.push_back(&k);
    auto in = forecast_inputs(sources, s.inner->weather("station"));
    auto expected = model::predict_week(trained.model, in.last_week, in.current, in.next);
    for (std::size_t t = 0; t < 7; ++t) CHECK(r.forecast->values[t] == doctest::Approx(expected[t]).epsilon(1e-12));
  }
  SUBCASE("the same description reuses the cached model") {
    auto again = s.engine.submit(detached);
    s.bus.run_until_idle();
    CHECK(s.engine.poll(again).state == RequestState::completed);
    CHECK(s.engine.poll(again).model_key == r.model_key);
    CHECK(s.engine.training_runs() == 1);
    auto other = s.engine.submit(flat);
    s.bus.run_until_idle();
    CHECK(sorted(s.engine.poll(other).selection->ids()) == std::vector<std::string>{"2", "4", "6"});
    CHECK(s.engine.training_runs() == 2);
  }
  SUBCASE("replaying the log reproduces the outcome") {
    s.engine.submit(flat);
    s.bus.run_until_idle();
    auto log = read_message_log(bo.log_path);
    Setup fresh;
    fresh.engine.replay(log);
    fresh.bus.run_until_idle();
    for (const auto& before : s.engine.requests()) {
      auto after = fresh.engine.poll(before.request_id);
      CHECK(after.state == before.state);
      REQUIRE(after.forecast);
      CHECK(after.forecast->values == before.forecast->values);
      CHECK(after.forecast->days == before.forecast->days);
    }
    CHECK(fresh.engine.submit(detached) == "req-000003");
  }
}

TEST_CASE("workflow idempotency and retries") {
  SUBCASE("a duplicated SelectionResult trains once") {
    auto cfg = small_config();
    cfg.use_cache = false;
    Setup s(cfg);
    auto id = s.engine.submit(detached);
    s.bus.run_until_idle();
    REQUIRE(s.engine.poll(id).state == RequestState::completed);
    MessageEnvelope dup;
    for (const auto& m : s.bus.log()) {
      if (m.kind == MessageKind::selection_result) dup = m;
    }
    dup.message_id.clear();
    s.bus.publish(dup);
    s.bus.run_until_idle();
    CHECK(s.engine.training_runs() == 1);
    CHECK(s.engine.poll(id).state == RequestState::completed);
  }
  SUBCASE("transient store failures are retried") {
    Setup s;
    s.store->fail_next(FaultInjectingStore::Op::energy, 2);
    auto id = s.engine.submit(detached);
    s.bus.run_until_idle();
    CHECK(s.engine.poll(id).state == RequestState::completed);
    CHECK(s.store->failures_raised() == 2);
    CHECK(s.bus.redeliveries() == 2);
    CHECK(s.engine.training_runs() == 1);
  }
  SUBCASE("persistent failure fails the request with a reason") {
    Setup s;
    s.store->fail_next(FaultInjectingStore::Op::weather, 3);
    auto id = s.engine.submit(detached);
    s.bus.run_until_idle();
    auto r = s.engine.poll(id);
    CHECK(r.state == RequestState::failed);
    CHECK(r.failure_reason.find("WeatherRequest") != std::string::npos);
    CHECK(r.failure_reason.find("weather-data") != std::string::npos);
    CHECK(s.engine.training_runs() == 0);
  }
}

TEST_CASE("workflow submissions") {
  Setup s;
  SUBCASE("unknown fields are rejected by name") {
    try {
      s.engine.submit("occupants=3,pool_count=1");
      FAIL("expected InvalidRequest");
    } catch (const InvalidRequest& e) {
      CHECK(std::string(e.what()).find("pool_count") != std::string::npos);
    }
    CHECK_THROWS_AS(s.engine.submit(""), InvalidRequest);
    CHECK_THROWS_AS(s.engine.submit("occupants"), InvalidRequest);
    CHECK_THROWS_AS(s.engine.submit("occupants=0"), InvalidRequest);
    CHECK(s.engine.requests().empty());
  }
  SUBCASE("lenient mode ignores unknown fields") {
    auto cfg = small_config();
    cfg.strict_schema = false;
    Setup lenient(cfg);
    CHECK_NOTHROW(lenient.engine.submit("occupants=3,pool_count=1"));
  }
  SUBCASE("ids are distinct and unknown ids are not found") {
    auto a = s.engine.submit(detached);
    auto b = s.engine.submit(detached);
    CHECK(a != b);
    CHECK_THROWS_AS(s.engine.poll("req-999999"), NotFound);
  }
  SUBCASE("per-request rule") {
    auto id = s.engine.submit(detached, selection::SelectionRule::top(1));
    s.bus.run_until_idle();
    CHECK(s.engine.poll(id).selection->ids().size() == 1);
  }
  SUBCASE("shutdown fails in-flight requests and stops their work") {
    auto id = s.engine.submit(detached);
    s.engine.fail_in_flight("shutdown");
    s.bus.run_until_idle();
    auto r = s.engine.poll(id);
    CHECK(r.state == RequestState::failed);
    CHECK(r.failure_reason == "shutdown");
    CHECK(s.engine.training_runs() == 0);
  }
  SUBCASE("records serialise to json") {
    auto id = s.engine.submit(detached);
    s.bus.run_until_idle();
    auto j = s.engine.poll(id).to_json();
    CHECK(j.at("request_id") == id);
    CHECK(j.at("state") == "completed");
    CHECK(j.at("forecast").at("values").size() == 7);
  }
}

TEST_CASE("forecast_inputs") {
  auto f = synthetic::make_fleet();
  std::vector<const timeseries::DailySeries*> one{&f.members[0].energy};
  auto in = forecast_inputs(one, f.weather);
  // weather ends on the last day, so the forecast covers the last seven days
  CHECK(in.forecast_days.front() == f.test.last - 6);
  CHECK(in.last_week[6] == *f.members[0].energy.at(f.test.last - 7));
  CHECK(in.next[6][0] == *f.weather.channels[0].at(f.test.last));

  std::vector<const timeseries::DailySeries*> two{&f.members[0].energy, &f.members[2].energy};
  auto avg = forecast_inputs(two, f.weather);
  CHECK(avg.last_week[0] == doctest::Approx((*f.members[0].energy.at(f.test.last - 13) +
                                             *f.members[2].energy.at(f.test.last - 13)) /
                                            2));
}
