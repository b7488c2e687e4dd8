#include "crossgrid/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "crossgrid/common.hpp"

namespace crossgrid::model {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using timeseries::Window;

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw Error(std::string("model config: ") + what + " must be >= 1");
  };
  positive(input_dim, "input_dim");
  positive(sequence_length, "sequence_length");
  positive(output_dim, "output_dim");
  positive(max_epochs, "max_epochs");
  positive(batch_size, "batch_size");
  if (lstm_sizes.empty()) throw Error("model config: at least one LSTM layer is required");
  for (int s : lstm_sizes) positive(s, "LSTM layer size");
  for (int s : fc_sizes) positive(s, "fully-connected layer size");
  if (!(lr_end > 0.0)) throw Error("model config: lr_end must be > 0");
  if (lr_start < lr_end) throw Error("model config: lr_start must be >= lr_end");
  if (patience < 0 || patience >= max_epochs) throw Error("model config: patience must lie in [0, max_epochs)");
  if (!(init_std >= 0.0)) throw Error("model config: init_std must be >= 0");
  if (!(bn_epsilon > 0.0)) throw Error("model config: bn_epsilon must be > 0");
}

std::vector<TensorView> tensors(Parameters& p) {
  std::vector<TensorView> out;
  auto add = [&](std::string name, auto& t) {
    out.push_back({std::move(name), t.data(), t.rows(), t.cols()});
  };
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    const std::string pre = "lstm" + std::to_string(l) + ".";
    add(pre + "w", p.lstm[l].w);
    add(pre + "u", p.lstm[l].u);
    add(pre + "b", p.lstm[l].b);
  }
  for (std::size_t l = 0; l < p.fc.size(); ++l) {
    const std::string pre = "fc" + std::to_string(l) + ".";
    add(pre + "w", p.fc[l].w);
    add(pre + "b", p.fc[l].b);
    if (p.fc[l].gamma.size() > 0) {
      add(pre + "gamma", p.fc[l].gamma);
      add(pre + "beta", p.fc[l].beta);
    }
  }
  add("out.w", p.out.w);
  add("out.b", p.out.b);
  return out;
}

std::size_t ForecastModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors(const_cast<Parameters&>(params))) n += static_cast<std::size_t>(t.size());
  return n;
}

ForecastModel init_model(const ModelConfig& cfg) {
  cfg.validate();
  ForecastModel m;
  m.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](MatrixXd& w, Index rows, Index cols) {
    w.resize(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) w(i, j) = cfg.init_std * normal(rng);
    }
  };
  Index in = cfg.input_dim;
  for (int h : cfg.lstm_sizes) {
    LstmLayer layer;
    fill(layer.w, 4 * h, in);
    fill(layer.u, 4 * h, h);
    layer.b = VectorXd::Zero(4 * h);
    m.params.lstm.push_back(std::move(layer));
    in = h;
  }
  for (int f : cfg.fc_sizes) {
    DenseLayer layer;
    fill(layer.w, f, in);
    layer.b = VectorXd::Zero(f);
    if (cfg.batch_norm) {
      layer.gamma = VectorXd::Ones(f);
      layer.beta = VectorXd::Zero(f);
      layer.running_mean = VectorXd::Zero(f);
      layer.running_var = VectorXd::Ones(f);
    }
    m.params.fc.push_back(std::move(layer));
    in = f;
  }
  fill(m.params.out.w, cfg.output_dim, in);
  m.params.out.b = VectorXd::Zero(cfg.output_dim);
  // identity normalisation until a dataset supplies statistics
  for (auto& r : m.stats.ranges) r = {0.0, 1.0};
  return m;
}

Batch make_batch(std::span<const Window* const> windows) {
  using timeseries::input_features;
  using timeseries::window_length;
  Batch b;
  const auto n = static_cast<Index>(windows.size());
  b.steps.assign(window_length, MatrixXd(input_features, n));
  b.targets.resize(1, static_cast<Index>(window_length) * n);
  for (Index j = 0; j < n; ++j) {
    const Window& w = *windows[static_cast<std::size_t>(j)];
    for (std::size_t t = 0; t < window_length; ++t) {
      for (std::size_t f = 0; f < input_features; ++f) b.steps[t](static_cast<Index>(f), j) = w.x(t, f);
      b.targets(0, static_cast<Index>(t) * n + j) = w.target[t];
    }
  }
  return b;
}

Batch make_batch(const std::vector<Window>& windows) {
  std::vector<const Window*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return make_batch(std::span<const Window* const>(ptrs));
}

namespace {

MatrixXd logistic(const MatrixXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

void check_batch(const ForecastModel& m, const Batch& batch) {
  const auto& cfg = m.config;
  if (static_cast<int>(batch.steps.size()) != cfg.sequence_length) {
    throw Error("batch has " + std::to_string(batch.steps.size()) + " steps, model expects " +
                std::to_string(cfg.sequence_length));
  }
  const Index b = batch.batch_size();
  if (b == 0) throw Error("empty batch");
  for (const auto& s : batch.steps) {
    if (s.rows() != cfg.input_dim || s.cols() != b) throw Error("batch step shape does not match model input");
  }
}

/// Dense layer forward over all N = T*B columns.
MatrixXd dense_forward(const DenseLayer& layer, const MatrixXd& input, bool relu, bool bn, Mode mode, double eps,
                       ForwardCache::Dense* cache) {
  MatrixXd z = layer.w * input;
  z.colwise() += layer.b;
  if (bn) {
    VectorXd mean, var;
    if (mode == Mode::training) {
      const double n = static_cast<double>(z.cols());
      mean = z.rowwise().mean();
      var = (z.colwise() - mean).array().square().rowwise().sum().matrix() / n;
    } else {
      mean = layer.running_mean;
      var = layer.running_var;
    }
    VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
    MatrixXd xhat = (z.colwise() - mean).array().colwise() * inv_std.array();
    z = (xhat.array().colwise() * layer.gamma.array()).matrix();
    z.colwise() += layer.beta;
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
      cache->batch_mean = std::move(mean);
      cache->batch_var = std::move(var);
    }
  }
  if (relu) z = z.cwiseMax(0.0);
  if (cache) {
    cache->input = input;
    cache->output = z;
  }
  return z;
}

}  // namespace

MatrixXd forward(const ForecastModel& m, const Batch& batch, Mode mode, ForwardCache* cache) {
  check_batch(m, batch);
  const auto& cfg = m.config;
  const auto& p = m.params;
  const Index B = batch.batch_size();
  const std::size_t T = batch.steps.size();
  if (cache) {
    *cache = ForwardCache{};
    cache->mode = mode;
    cache->parameter_version = m.version;
    cache->inputs = batch.steps;
    cache->lstm.resize(p.lstm.size());
  }

  std::vector<MatrixXd> layer_in = batch.steps;
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    const auto& layer = p.lstm[l];
    const Index H = layer.u.cols();
    MatrixXd h = MatrixXd::Zero(H, B);
    MatrixXd c = MatrixXd::Zero(H, B);
    std::vector<MatrixXd> outputs(T);
    for (std::size_t t = 0; t < T; ++t) {
      MatrixXd z = layer.w * layer_in[t] + layer.u * h;
      z.colwise() += layer.b;
      MatrixXd gates(4 * H, B);
      gates.topRows(3 * H) = logistic(z.topRows(3 * H));
      gates.bottomRows(H) = z.bottomRows(H).array().tanh().matrix();
      c = gates.middleRows(H, H).cwiseProduct(c) + gates.topRows(H).cwiseProduct(gates.bottomRows(H));
      MatrixXd tc = c.array().tanh().matrix();
      h = gates.middleRows(2 * H, H).cwiseProduct(tc);
      outputs[t] = h;
      if (cache) cache->lstm[l].push_back({std::move(gates), c, std::move(tc), h});
    }
    layer_in = std::move(outputs);
  }

  // stack time steps as columns t*B + b
  const Index H = p.lstm.back().u.cols();
  MatrixXd a(H, static_cast<Index>(T) * B);
  for (std::size_t t = 0; t < T; ++t) a.middleCols(static_cast<Index>(t) * B, B) = layer_in[t];

  if (cache) cache->fc.resize(p.fc.size());
  for (std::size_t l = 0; l < p.fc.size(); ++l) {
    a = dense_forward(p.fc[l], a, true, cfg.batch_norm, mode, cfg.bn_epsilon, cache ? &cache->fc[l] : nullptr);
  }
  MatrixXd y = dense_forward(p.out, a, false, false, mode, cfg.bn_epsilon, cache ? &cache->out : nullptr);
  if (cache) cache->predictions = y;
  return y;
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw Error("rmse: length mismatch");
  if (y.empty()) throw Error("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double d = y[i] - y_hat[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(y.size()));
}

double loss_value(const ModelConfig& cfg, const MatrixXd& predictions, const MatrixXd& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw Error("loss: prediction/target shape mismatch");
  }
  double mse = (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
  return cfg.loss == LossKind::mse ? mse : std::sqrt(mse);
}

Parameters zeros_like(const Parameters& p) {
  Parameters g = p;
  for (auto& t : tensors(g)) std::fill(t.data, t.data + t.size(), 0.0);
  for (auto& l : g.fc) {
    l.running_mean.setZero();
    l.running_var.setZero();
  }
  return g;
}

namespace {

/// Backward through one dense layer; returns the gradient w.r.t. its input.
MatrixXd dense_backward(const DenseLayer& layer, const ForwardCache::Dense& c, MatrixXd d_out, bool relu, bool bn,
                        DenseLayer& grad) {
  if (relu) d_out = d_out.cwiseProduct((c.output.array() > 0.0).cast<double>().matrix());
  if (bn) {
    const double n = static_cast<double>(d_out.cols());
    grad.gamma = d_out.cwiseProduct(c.xhat).rowwise().sum();
    grad.beta = d_out.rowwise().sum();
    MatrixXd dxhat = d_out.array().colwise() * layer.gamma.array();
    VectorXd sum_dxhat = dxhat.rowwise().sum();
    VectorXd sum_dxhat_xhat = dxhat.cwiseProduct(c.xhat).rowwise().sum();
    MatrixXd dz = (n * dxhat.array()).matrix();
    dz.colwise() -= sum_dxhat;
    dz -= (c.xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
    d_out = (dz.array().colwise() * (c.inv_std.array() / n)).matrix();
  }
  grad.w = d_out * c.input.transpose();
  grad.b = d_out.rowwise().sum();
  return layer.w.transpose() * d_out;
}

}  // namespace

Parameters backward_bptt(const ForecastModel& m, const ForwardCache& cache, const Batch& batch) {
  if (cache.mode != Mode::training) throw Error("backward_bptt needs a training-mode forward cache");
  if (cache.parameter_version != m.version) throw Error("backward_bptt: stale forward cache");
  if (cache.predictions.cols() != batch.targets.cols() || cache.inputs.size() != batch.steps.size() ||
      cache.inputs.front().cols() != batch.batch_size()) {
    throw Error("backward_bptt: cache does not belong to this batch");
  }
  const auto& cfg = m.config;
  const auto& p = m.params;
  Parameters g = zeros_like(p);
  const Index B = batch.batch_size();
  const std::size_t T = batch.steps.size();

  MatrixXd diff = cache.predictions - batch.targets;
  const double n = static_cast<double>(diff.size());
  MatrixXd d_pred;
  if (cfg.loss == LossKind::mse) {
    d_pred = (2.0 / n) * diff;
  } else {
    double r = std::sqrt(diff.squaredNorm() / n);
    d_pred = r > 0.0 ? MatrixXd(diff / (n * r)) : MatrixXd::Zero(diff.rows(), diff.cols());
  }

  MatrixXd d = dense_backward(p.out, cache.out, d_pred, false, false, g.out);
  for (std::size_t l = p.fc.size(); l-- > 0;) {
    d = dense_backward(p.fc[l], cache.fc[l], std::move(d), true, cfg.batch_norm, g.fc[l]);
  }

  std::vector<MatrixXd> d_hidden(T);
  for (std::size_t t = 0; t < T; ++t) d_hidden[t] = d.middleCols(static_cast<Index>(t) * B, B);

  for (std::size_t l = p.lstm.size(); l-- > 0;) {
    const auto& layer = p.lstm[l];
    auto& gl = g.lstm[l];
    const auto& steps = cache.lstm[l];
    const Index H = layer.u.cols();
    MatrixXd dh_next = MatrixXd::Zero(H, B);
    MatrixXd dc_next = MatrixXd::Zero(H, B);
    std::vector<MatrixXd> d_input(T);
    for (std::size_t t = T; t-- > 0;) {
      const auto& s = steps[t];
      const auto i = s.gates.topRows(H);
      const auto f = s.gates.middleRows(H, H);
      const auto o = s.gates.middleRows(2 * H, H);
      const auto gc = s.gates.bottomRows(H);
      MatrixXd dh = d_hidden[t] + dh_next;
      MatrixXd dc = dh.cwiseProduct(o).cwiseProduct((1.0 - s.tanh_cell.array().square()).matrix()) + dc_next;
      MatrixXd c_prev = t > 0 ? steps[t - 1].cell : MatrixXd::Zero(H, B);
      MatrixXd h_prev = t > 0 ? steps[t - 1].hidden : MatrixXd::Zero(H, B);

      MatrixXd dz(4 * H, B);
      dz.topRows(H) = (dc.cwiseProduct(gc).array() * i.array() * (1.0 - i.array())).matrix();
      dz.middleRows(H, H) = (dc.cwiseProduct(c_prev).array() * f.array() * (1.0 - f.array())).matrix();
      dz.middleRows(2 * H, H) = (dh.cwiseProduct(s.tanh_cell).array() * o.array() * (1.0 - o.array())).matrix();
      dz.bottomRows(H) = (dc.cwiseProduct(i).array() * (1.0 - gc.array().square())).matrix();
      dc_next = dc.cwiseProduct(f);

      const MatrixXd& x = l == 0 ? cache.inputs[t] : cache.lstm[l - 1][t].hidden;
      gl.w.noalias() += dz * x.transpose();
      gl.u.noalias() += dz * h_prev.transpose();
      gl.b += dz.rowwise().sum();
      dh_next.noalias() = layer.u.transpose() * dz;
      if (l > 0) d_input[t] = layer.w.transpose() * dz;
    }
    if (l > 0) d_hidden = std::move(d_input);
  }
  return g;
}

double learning_rate(const ModelConfig& cfg, int epoch) {
  const int last = cfg.max_epochs - 1;
  if (epoch <= 0 || last <= 0) return cfg.lr_start;
  if (epoch >= last) return cfg.lr_end;
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, static_cast<double>(epoch) / static_cast<double>(last));
}

std::string_view to_string(StopReason r) { return r == StopReason::early_stop ? "early-stop" : "max-epochs"; }

TrainHistory run_epochs(const ModelConfig& cfg, const std::function<double(int, double)>& run_epoch,
                        const std::function<void(int)>& on_best) {
  TrainHistory h;
  h.stop_reason = StopReason::max_epochs;
  int since_best = 0;
  for (int e = 0; e < cfg.max_epochs; ++e) {
    const double lr = learning_rate(cfg, e);
    const double loss = run_epoch(e, lr);
    if (!std::isfinite(loss)) throw Error("non-finite training loss at epoch " + std::to_string(e));
    h.losses.push_back(loss);
    h.learning_rates.push_back(lr);
    if (h.best_epoch < 0 || loss < h.best_loss) {
      h.best_epoch = e;
      h.best_loss = loss;
      since_best = 0;
      if (on_best) on_best(e);
    } else if (++since_best >= cfg.patience && cfg.patience > 0) {
      h.stop_reason = StopReason::early_stop;
      break;
    }
  }
  return h;
}

namespace {

void apply_update(Parameters& p, Parameters& g, double lr) {
  auto pt = tensors(p);
  auto gt = tensors(g);
  for (std::size_t k = 0; k < pt.size(); ++k) {
    for (Index i = 0; i < pt[k].size(); ++i) pt[k].data[i] -= lr * gt[k].data[i];
  }
}

void update_running_stats(Parameters& p, const ForwardCache& cache, double momentum) {
  for (std::size_t l = 0; l < p.fc.size(); ++l) {
    auto& layer = p.fc[l];
    if (layer.gamma.size() == 0) continue;
    layer.running_mean = momentum * layer.running_mean + (1.0 - momentum) * cache.fc[l].batch_mean;
    layer.running_var = momentum * layer.running_var + (1.0 - momentum) * cache.fc[l].batch_var;
  }
}

}  // namespace

TrainResult train(ForecastModel m, const timeseries::SequenceDataset& data) {
  if (data.empty()) throw Error("train: empty dataset");
  const auto& cfg = m.config;
  cfg.validate();
  m.stats = data.stats;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  Parameters best = m.params;

  auto epoch = [&](int, double lr) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<const Window*> members;
    ForwardCache cache;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      members.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
        members.push_back(&data.windows[order[k]]);
      }
      Batch batch = make_batch(std::span<const Window* const>(members));
      MatrixXd pred = forward(m, batch, Mode::training, &cache);
      total += loss_value(cfg, pred, batch.targets);
      ++batches;
      Parameters g = backward_bptt(m, cache, batch);
      apply_update(m.params, g, lr);
      update_running_stats(m.params, cache, cfg.bn_momentum);
      ++m.version;
    }
    return total / static_cast<double>(batches);
  };

  TrainHistory history = run_epochs(cfg, epoch, [&](int) { best = m.params; });
  m.params = std::move(best);
  ++m.version;
  return {std::move(m), std::move(history)};
}

MatrixXd predict(const ForecastModel& m, const std::vector<Window>& windows, bool denormalize) {
  using timeseries::window_length;
  if (windows.empty()) return MatrixXd(0, static_cast<Index>(window_length));
  Batch batch = make_batch(windows);
  MatrixXd y = forward(m, batch, Mode::inference);
  const auto n = static_cast<Index>(windows.size());
  MatrixXd out(n, static_cast<Index>(window_length));
  for (Index j = 0; j < n; ++j) {
    for (Index t = 0; t < static_cast<Index>(window_length); ++t) {
      double v = y(0, t * n + j);
      out(j, t) = denormalize ? m.stats.invert(timeseries::consumption, v) : v;
    }
  }
  return out;
}

double evaluate_rmse(const ForecastModel& m, const std::vector<Window>& windows, bool raw_scale) {
  if (windows.empty()) throw Error("evaluate_rmse: no windows");
  MatrixXd pred = predict(m, windows, raw_scale);
  std::vector<double> y, yh;
  for (std::size_t j = 0; j < windows.size(); ++j) {
    for (std::size_t t = 0; t < timeseries::window_length; ++t) {
      double target = windows[j].target[t];
      y.push_back(raw_scale ? m.stats.invert(timeseries::consumption, target) : target);
      yh.push_back(pred(static_cast<Index>(j), static_cast<Index>(t)));
    }
  }
  return rmse(y, yh);
}

std::array<double, timeseries::window_length> predict_week(const ForecastModel& m,
                                                            std::span<const double, timeseries::window_length> last_week,
                                                            const WeatherWeek& current_weather,
                                                            const WeatherWeek& next_weather) {
  using namespace timeseries;
  Window w;
  w.building_id = "query";
  for (std::size_t t = 0; t < window_length; ++t) {
    if (!std::isfinite(last_week[t])) throw Error("predict_week: consumption value missing for day " + std::to_string(t));
    for (std::size_t c = 0; c < 3; ++c) {
      if (!std::isfinite(current_weather[t][c]) || !std::isfinite(next_weather[t][c])) {
        throw Error("predict_week: weather channel " + std::to_string(c) + " missing for day " + std::to_string(t));
      }
    }
    double* row = &w.input[t * input_features];
    row[0] = m.stats.apply(consumption, last_week[t]);
    for (std::size_t c = 0; c < 3; ++c) {
      row[1 + c] = m.stats.apply(1 + c, current_weather[t][c]);
      row[4 + c] = m.stats.apply(1 + c, next_weather[t][c]);
    }
  }
  MatrixXd y = predict(m, {w}, true);
  std::array<double, window_length> out{};
  for (std::size_t t = 0; t < window_length; ++t) out[t] = y(0, static_cast<Index>(t));
  return out;
}

namespace {

using nlohmann::json;

json tensor_json(const MatrixXd& t) {
  // row-major with declared shape
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.rows(); ++i) {
    for (Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
  }
  return json{{"shape", {t.rows(), t.cols()}}, {"data", data}};
}

MatrixXd tensor_from(const json& j) {
  Index rows = j.at("shape").at(0).get<Index>();
  Index cols = j.at("shape").at(1).get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols) throw Error("checkpoint: tensor data does not match shape");
  MatrixXd t(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j2 = 0; j2 < cols; ++j2) t(i, j2) = data[static_cast<std::size_t>(i * cols + j2)].get<double>();
  }
  return t;
}

VectorXd vector_from(const json& j) {
  MatrixXd t = tensor_from(j);
  if (t.cols() != 1) throw Error("checkpoint: expected a column vector");
  return t.col(0);
}

json dense_json(const DenseLayer& l) {
  json j{{"w", tensor_json(l.w)}, {"b", tensor_json(l.b)}};
  if (l.gamma.size() > 0) {
    j["gamma"] = tensor_json(l.gamma);
    j["beta"] = tensor_json(l.beta);
    j["running_mean"] = tensor_json(l.running_mean);
    j["running_var"] = tensor_json(l.running_var);
  }
  return j;
}

DenseLayer dense_from(const json& j) {
  DenseLayer l;
  l.w = tensor_from(j.at("w"));
  l.b = vector_from(j.at("b"));
  if (j.contains("gamma")) {
    l.gamma = vector_from(j.at("gamma"));
    l.beta = vector_from(j.at("beta"));
    l.running_mean = vector_from(j.at("running_mean"));
    l.running_var = vector_from(j.at("running_var"));
  }
  return l;
}

json config_json(const ModelConfig& c) {
  return json{{"input_dim", c.input_dim},
              {"sequence_length", c.sequence_length},
              {"lstm_sizes", c.lstm_sizes},
              {"fc_sizes", c.fc_sizes},
              {"output_dim", c.output_dim},
              {"batch_norm", c.batch_norm},
              {"bn_epsilon", c.bn_epsilon},
              {"bn_momentum", c.bn_momentum},
              {"init_std", c.init_std},
              {"lr_start", c.lr_start},
              {"lr_end", c.lr_end},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"batch_size", c.batch_size},
              {"shuffle", c.shuffle},
              {"loss", c.loss == LossKind::mse ? "mse" : "rmse"},
              {"seed", c.seed}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim");
  c.sequence_length = j.at("sequence_length");
  c.lstm_sizes = j.at("lstm_sizes").get<std::vector<int>>();
  c.fc_sizes = j.at("fc_sizes").get<std::vector<int>>();
  c.output_dim = j.at("output_dim");
  c.batch_norm = j.at("batch_norm");
  c.bn_epsilon = j.at("bn_epsilon");
  c.bn_momentum = j.at("bn_momentum");
  c.init_std = j.at("init_std");
  c.lr_start = j.at("lr_start");
  c.lr_end = j.at("lr_end");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  c.batch_size = j.at("batch_size");
  c.shuffle = j.at("shuffle");
  c.loss = j.at("loss").get<std::string>() == "rmse" ? LossKind::rmse : LossKind::mse;
  c.seed = j.at("seed");
  return c;
}

}  // namespace

std::string to_checkpoint(const ForecastModel& m) {
  json j;
  j["format"] = checkpoint_format;
  j["config"] = config_json(m.config);
  j["seed"] = m.config.seed;
  j["parameter_count"] = m.parameter_count();
  json lstm = json::array();
  for (const auto& l : m.params.lstm) lstm.push_back({{"w", tensor_json(l.w)}, {"u", tensor_json(l.u)}, {"b", tensor_json(l.b)}});
  j["lstm"] = lstm;
  json fc = json::array();
  for (const auto& l : m.params.fc) fc.push_back(dense_json(l));
  j["fc"] = fc;
  j["out"] = dense_json(m.params.out);
  json stats = json::array();
  for (const auto& r : m.stats.ranges) stats.push_back({r.min, r.max});
  j["normalization"] = {{"channels", {"consumption", "air_temp", "solar_irradiance", "wind_speed"}},
                        {"ranges", stats},
                        {"clip", m.stats.clip}};
  return j.dump(1);
}

ForecastModel from_checkpoint(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != checkpoint_format) throw Error("checkpoint: unsupported format tag");
  try {
    ForecastModel m;
    m.config = config_from(j.at("config"));
    m.config.validate();
    for (const auto& l : j.at("lstm")) {
      m.params.lstm.push_back({tensor_from(l.at("w")), tensor_from(l.at("u")), vector_from(l.at("b"))});
    }
    for (const auto& l : j.at("fc")) m.params.fc.push_back(dense_from(l));
    m.params.out = dense_from(j.at("out"));
    const auto& ranges = j.at("normalization").at("ranges");
    if (ranges.size() != timeseries::channel_count) throw Error("checkpoint: expected 4 normalisation ranges");
    for (std::size_t c = 0; c < timeseries::channel_count; ++c) {
      m.stats.ranges[c] = {ranges[c].at(0).get<double>(), ranges[c].at(1).get<double>()};
    }
    m.stats.clip = j.at("normalization").at("clip");
    ForecastModel shape = init_model([&] {
      ModelConfig c = m.config;
      c.init_std = 0.0;
      return c;
    }());
    auto want = tensors(shape.params);
    auto got = tensors(m.params);
    if (want.size() != got.size()) throw Error("checkpoint: tensor count does not match config");
    for (std::size_t k = 0; k < want.size(); ++k) {
      if (want[k].rows != got[k].rows || want[k].cols != got[k].cols) {
        throw Error("checkpoint: tensor " + want[k].name + " has wrong shape");
      }
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ForecastModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_checkpoint(m) << '\n';
}

ForecastModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_checkpoint(ss.str());
}

}  // namespace crossgrid::model
