#include <doctest.h>

#include <cmath>
#include <random>

#include "crossgrid/model.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace crossgrid;
using namespace crossgrid::model;
using timeseries::Window;

namespace {

ModelConfig tiny(bool bn) {
  ModelConfig c;
  c.lstm_sizes = {4};
  c.fc_sizes = {3};
  c.batch_norm = bn;
  c.seed = 11;
  c.max_epochs = 50;
  c.patience = 10;
  return c;
}

std::vector<Window> random_windows(std::size_t n, std::uint64_t seed, bool linear_targets = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Window> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Window& w = out[k];
    w.building_id = "b";
    w.start = static_cast<Day>(k);
    for (double& v : w.input) v = u(rng);
    for (std::size_t t = 0; t < timeseries::window_length; ++t) {
      if (linear_targets) {
        double s = 0.0;
        for (std::size_t f = 0; f < timeseries::input_features; ++f) s += w.x(t, f) * static_cast<double>(f + 1) / 28.0;
        w.target[t] = s;
      } else {
        w.target[t] = u(rng);
      }
    }
  }
  return out;
}

timeseries::SequenceDataset dataset(std::vector<Window> w) {
  timeseries::SequenceDataset d;
  d.windows = std::move(w);
  for (auto& r : d.stats.ranges) r = {0.0, 1.0};
  return d;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("init_model") {
  SUBCASE("same seed gives identical parameters") {
    auto a = init_model(tiny(true));
    auto b = init_model(tiny(true));
    CHECK(to_checkpoint(a) == to_checkpoint(b));
    auto cfg = tiny(true);
    cfg.seed = 12;
    CHECK(init_model(cfg).params.lstm[0].w != a.params.lstm[0].w);
  }
  SUBCASE("zero std gives zero weights") {
    auto cfg = tiny(true);
    cfg.init_std = 0.0;
    auto m = init_model(cfg);
    for (auto& t : tensors(m.params)) {
      if (t.name.ends_with("gamma")) continue;
      for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(t.data[i] == 0.0);
    }
  }
  SUBCASE("biases zero, batch-norm scale one") {
    auto m = init_model(tiny(true));
    CHECK(m.params.lstm[0].b.isZero());
    CHECK(m.params.fc[0].gamma.isOnes());
    CHECK(m.params.fc[0].beta.isZero());
  }
  SUBCASE("default parameter count") {
    // LSTM: 4H(in + H + 1); FC: out(in + 1) + 2 out for batch norm; output: in + 1
    const std::size_t in = 7, h = 256, f = 128;
    const std::size_t expected = 4 * h * (in + h + 1) + f * (h + 1) + 2 * f + (f + 1);
    CHECK(expected == 303617);
    CHECK(init_model(ModelConfig{}).parameter_count() == expected);
    ModelConfig off;
    off.batch_norm = false;
    CHECK(init_model(off).parameter_count() == expected - 2 * f);
  }
  SUBCASE("invalid configs") {
    ModelConfig c;
    c.patience = c.max_epochs;
    CHECK_THROWS_AS(init_model(c), Error);
    c = ModelConfig{};
    c.lstm_sizes = {0};
    CHECK_THROWS_AS(init_model(c), Error);
    c = ModelConfig{};
    c.lr_end = 1e-2;
    CHECK_THROWS_AS(init_model(c), Error);
  }
}

TEST_CASE("forward") {
  SUBCASE("zero network predicts zero") {
    auto cfg = tiny(false);
    cfg.init_std = 0.0;
    auto m = init_model(cfg);
    auto y = forward(m, make_batch(random_windows(3, 1)), Mode::training);
    CHECK(y.rows() == 1);
    CHECK(y.cols() == 21);
    CHECK(y.isZero());
  }
  SUBCASE("hand-traced scalar cell") {
    ModelConfig cfg;
    cfg.input_dim = 1;
    cfg.sequence_length = 2;
    cfg.lstm_sizes = {1};
    cfg.fc_sizes = {1};
    cfg.batch_norm = false;
    cfg.max_epochs = 2;
    cfg.patience = 1;
    auto m = init_model(cfg);
    auto& l = m.params.lstm[0];
    l.w << 0.5, -0.3, 0.8, 1.2;   // i, f, o, g
    l.u << 0.1, 0.4, -0.2, 0.7;
    l.b << 0.05, 1.0, -0.1, 0.0;
    m.params.fc[0].w << 2.0;
    m.params.fc[0].b << 0.1;
    m.params.out.w << -1.5;
    m.params.out.b << 0.25;

    const double x[2] = {0.6, -0.4};
    double h = 0.0, c = 0.0, expected[2];
    for (int t = 0; t < 2; ++t) {
      double i = sigmoid(0.5 * x[t] + 0.1 * h + 0.05);
      double f = sigmoid(-0.3 * x[t] + 0.4 * h + 1.0);
      double o = sigmoid(0.8 * x[t] - 0.2 * h - 0.1);
      double g = std::tanh(1.2 * x[t] + 0.7 * h);
      c = f * c + i * g;
      h = o * std::tanh(c);
      double a = std::max(0.0, 2.0 * h + 0.1);
      expected[t] = -1.5 * a + 0.25;
    }
    Batch b;
    b.steps = {Eigen::MatrixXd::Constant(1, 1, x[0]), Eigen::MatrixXd::Constant(1, 1, x[1])};
    b.targets = Eigen::MatrixXd::Zero(1, 2);
    auto y = forward(m, b, Mode::inference);
    CHECK(y(0, 0) == doctest::Approx(expected[0]).epsilon(1e-14));
    CHECK(y(0, 1) == doctest::Approx(expected[1]).epsilon(1e-14));
  }
  SUBCASE("inference is independent of batch order") {
    auto m = init_model(tiny(true));
    m.params.fc[0].running_mean.setConstant(0.3);
    m.params.fc[0].running_var.setConstant(2.0);
    auto w = random_windows(5, 2);
    auto p = predict(m, w);
    std::vector<Window> rev(w.rbegin(), w.rend());
    auto q = predict(m, rev);
    for (Eigen::Index j = 0; j < 5; ++j) CHECK((p.row(j).array() == q.row(4 - j).array()).all());
  }
  SUBCASE("without batch norm the two modes agree") {
    auto m = init_model(tiny(false));
    auto b = make_batch(random_windows(4, 3));
    CHECK(forward(m, b, Mode::training) == forward(m, b, Mode::inference));
  }
  SUBCASE("shape mismatch") {
    auto m = init_model(tiny(false));
    auto b = make_batch(random_windows(2, 3));
    b.steps.pop_back();
    CHECK_THROWS_AS(forward(m, b, Mode::training), Error);
  }
}

TEST_CASE("rmse") {
  std::vector<double> y{0, 3}, yh{4, 0};
  CHECK(rmse(y, yh) == std::sqrt(12.5));
  CHECK(rmse(y, y) == 0.0);
  std::vector<double> y3{0, -9}, yh3{12, 0};
  CHECK(rmse(y3, yh3) == doctest::Approx(3.0 * std::sqrt(12.5)).epsilon(1e-15));
  std::vector<double> one{1};
  CHECK_THROWS_AS(rmse(y, one), Error);
  CHECK_THROWS_AS(rmse({}, {}), Error);
}

TEST_CASE("backward_bptt matches finite differences") {
  for (bool bn : {false, true}) {
    CAPTURE(bn);
    auto m = init_model(tiny(bn));
    auto b = make_batch(random_windows(2, 7));
    ForwardCache cache;
    forward(m, b, Mode::training, &cache);
    auto g = backward_bptt(m, cache, b);
    auto check = oracle::finite_difference_check(m, b, g);
    CAPTURE(check.worst_tensor);
    CHECK(check.checked == m.parameter_count());
    CHECK(check.max_relative_error <= 1e-4);
  }
}

TEST_CASE("backward_bptt with the rmse loss matches finite differences") {
  auto cfg = tiny(true);
  cfg.loss = LossKind::rmse;
  auto m = init_model(cfg);
  auto b = make_batch(random_windows(2, 9));
  ForwardCache cache;
  forward(m, b, Mode::training, &cache);
  CHECK(oracle::finite_difference_check(m, b, backward_bptt(m, cache, b)).max_relative_error <= 1e-4);
}

TEST_CASE("backward_bptt properties") {
  SUBCASE("zero gradient at the loss minimum") {
    auto m = init_model(tiny(true));
    auto b = make_batch(random_windows(3, 4));
    ForwardCache cache;
    b.targets = forward(m, b, Mode::training, &cache);
    auto g = backward_bptt(m, cache, b);
    for (auto& t : tensors(g)) {
      for (Eigen::Index i = 0; i < t.size(); ++i) CHECK(t.data[i] == 0.0);
    }
  }
  SUBCASE("duplicating every sample leaves gradients unchanged") {
    auto m = init_model(tiny(false));
    auto w = random_windows(3, 5);
    auto ww = w;
    ww.insert(ww.end(), w.begin(), w.end());
    ForwardCache c1, c2;
    auto b1 = make_batch(w), b2 = make_batch(ww);
    forward(m, b1, Mode::training, &c1);
    forward(m, b2, Mode::training, &c2);
    auto g1 = backward_bptt(m, c1, b1);
    auto g2 = backward_bptt(m, c2, b2);
    auto t1 = tensors(g1), t2 = tensors(g2);
    for (std::size_t k = 0; k < t1.size(); ++k) {
      for (Eigen::Index i = 0; i < t1[k].size(); ++i) {
        CHECK(t2[k].data[i] == doctest::Approx(t1[k].data[i]).epsilon(1e-12).scale(1e-12));
      }
    }
  }
  SUBCASE("stale or inference caches are rejected") {
    auto m = init_model(tiny(true));
    auto b = make_batch(random_windows(2, 6));
    ForwardCache cache;
    forward(m, b, Mode::inference, &cache);
    CHECK_THROWS_AS(backward_bptt(m, cache, b), Error);
    forward(m, b, Mode::training, &cache);
    ++m.version;
    CHECK_THROWS_AS(backward_bptt(m, cache, b), Error);
  }
}

TEST_CASE("learning rate schedule") {
  ModelConfig cfg;
  CHECK(learning_rate(cfg, 0) == 1e-3);
  CHECK(learning_rate(cfg, cfg.max_epochs - 1) == 1e-5);
  CHECK(learning_rate(cfg, 500) == doctest::Approx(1e-3 * std::pow(1e-2, 500.0 / 999.0)).epsilon(1e-13));
  for (int e = 1; e < cfg.max_epochs; ++e) CHECK(learning_rate(cfg, e) < learning_rate(cfg, e - 1));
}

TEST_CASE("run_epochs stopping rules") {
  SUBCASE("plateau from epoch 10 stops at epoch 30") {
    ModelConfig cfg;
    cfg.patience = 20;
    auto h = run_epochs(cfg, [](int e, double) { return e <= 10 ? 100.0 - e : 90.0; });
    CHECK(h.best_epoch == 10);
    CHECK(h.epochs() == 31);
    CHECK(h.stop_reason == StopReason::early_stop);
    CHECK(to_string(h.stop_reason) == "early-stop");
    for (int e = 11; e <= 30; ++e) CHECK(h.losses[static_cast<std::size_t>(e)] >= h.best_loss);
  }
  SUBCASE("one epoch") {
    ModelConfig cfg;
    cfg.max_epochs = 1;
    cfg.patience = 0;
    auto h = run_epochs(cfg, [](int, double) { return 1.0; });
    CHECK(h.epochs() == 1);
    CHECK(h.stop_reason == StopReason::max_epochs);
  }
  SUBCASE("non-finite loss names the epoch") {
    ModelConfig cfg;
    CHECK_THROWS_WITH(run_epochs(cfg, [](int e, double) { return e == 3 ? std::nan("") : 1.0; }),
                      doctest::Contains("epoch 3"));
  }
}

TEST_CASE("train") {
  SUBCASE("loss strictly decreases over the first five epochs") {
    auto cfg = tiny(true);
    cfg.max_epochs = 5;
    cfg.patience = 4;
    auto r = train(init_model(cfg), dataset(random_windows(40, 21, true)));
    REQUIRE(r.history.epochs() == 5);
    for (std::size_t e = 1; e < 5; ++e) CHECK(r.history.losses[e] < r.history.losses[e - 1]);
    CHECK(r.history.best_loss <= r.history.losses.front());
  }
  SUBCASE("fixed seed reproduces the checkpoint bit for bit") {
    auto cfg = tiny(true);
    cfg.max_epochs = 6;
    cfg.patience = 3;
    cfg.batch_size = 7;
    cfg.lr_start = 0.05;
    cfg.lr_end = 0.01;
    auto data = dataset(random_windows(30, 22, true));
    auto a = train(init_model(cfg), data);
    auto b = train(init_model(cfg), data);
    CHECK(to_checkpoint(a.model) == to_checkpoint(b.model));
    CHECK(a.history.losses == b.history.losses);
  }
  SUBCASE("returns the best epoch's parameters") {
    auto cfg = tiny(false);
    cfg.max_epochs = 8;
    cfg.patience = 3;
    cfg.lr_start = 0.05;
    cfg.lr_end = 0.01;
    auto data = dataset(random_windows(16, 23, true));
    auto r = train(init_model(cfg), data);
    CHECK(r.history.best_epoch >= 0);
    CHECK(r.history.learning_rates.front() == 0.05);
  }
  SUBCASE("empty dataset") { CHECK_THROWS_AS(train(init_model(tiny(true)), dataset({})), Error); }
}

TEST_CASE("predict_week") {
  SUBCASE("zero model returns the consumption minimum") {
    auto cfg = tiny(false);
    cfg.init_std = 0.0;
    auto m = init_model(cfg);
    m.stats.ranges = {timeseries::FeatureRange{5.0, 9.0}, {0, 1}, {0, 1}, {0, 1}};
    std::array<double, 7> last{5, 5, 5, 5, 5, 5, 5};
    WeatherWeek zero{};
    auto out = predict_week(m, last, zero, zero);
    CHECK(out.size() == 7);
    for (double v : out) CHECK(v == 5.0);
  }
  SUBCASE("matches the window prediction with batch norm off") {
    auto m = init_model(tiny(false));
    m.stats.ranges = {timeseries::FeatureRange{100.0, 300.0}, {-5, 25}, {0, 400}, {0, 12}};
    auto w = random_windows(1, 30)[0];
    std::array<double, 7> last{};
    WeatherWeek cur{}, next{};
    for (std::size_t t = 0; t < 7; ++t) {
      last[t] = m.stats.invert(0, w.x(t, 0));
      for (std::size_t c = 0; c < 3; ++c) {
        cur[t][c] = m.stats.invert(1 + c, w.x(t, 1 + c));
        next[t][c] = m.stats.invert(1 + c, w.x(t, 4 + c));
      }
    }
    auto out = predict_week(m, last, cur, next);
    auto y = forward(m, make_batch(std::vector<Window>{w}), Mode::training);
    for (std::size_t t = 0; t < 7; ++t) {
      CHECK(out[t] == doctest::Approx(m.stats.invert(0, y(0, static_cast<Eigen::Index>(t)))).epsilon(1e-10));
    }
  }
  SUBCASE("missing weather is rejected") {
    auto m = init_model(tiny(false));
    std::array<double, 7> last{};
    WeatherWeek cur{}, next{};
    next[3][1] = std::nan("");
    CHECK_THROWS_AS(predict_week(m, last, cur, next), Error);
  }
}

TEST_CASE("checkpoint round trip") {
  crossgrid::testing::TempDir dir;
  auto m = init_model(tiny(true));
  m.params.fc[0].running_mean.setConstant(0.125);
  m.stats.ranges[0] = {1.5, 7.25};
  m.stats.clip = true;
  save_checkpoint(dir / "m.json", m);
  auto back = load_checkpoint(dir / "m.json");
  CHECK(to_checkpoint(back) == to_checkpoint(m));
  auto w = random_windows(3, 31);
  CHECK(predict(back, w, true) == predict(m, w, true));
  CHECK(back.config.seed == m.config.seed);
  CHECK_THROWS_AS(from_checkpoint(R"({"format":"something-else/9"})"), Error);
  CHECK_THROWS_AS(from_checkpoint("not json"), Error);
}
