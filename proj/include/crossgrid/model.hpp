#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossgrid/timeseries.hpp"

namespace crossgrid::model {

enum class LossKind { mse, rmse };

struct ModelConfig {
  int input_dim = 7;
  int sequence_length = 7;
  std::vector<int> lstm_sizes{256};
  std::vector<int> fc_sizes{128};
  int output_dim = 1;
  bool batch_norm = true;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double init_std = 1.0;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  int max_epochs = 1000;
  int patience = 20;
  int batch_size = 80;
  bool shuffle = true;
  LossKind loss = LossKind::mse;
  std::uint64_t seed = 0;

  /// Throws on sizes < 1, lr_start < lr_end, lr_end <= 0 or
  /// patience >= max_epochs.
  void validate() const;
};

struct LstmLayer {
  Eigen::MatrixXd w;  // 4H x in, gate blocks ordered input, forget, output, candidate
  Eigen::MatrixXd u;  // 4H x H
  Eigen::VectorXd b;  // 4H
};

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  // batch normalisation of the pre-activation; empty when disabled
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct Parameters {
  std::vector<LstmLayer> lstm;
  std::vector<DenseLayer> fc;
  DenseLayer out;
};

/// Named view over one trainable tensor, row-major order is not implied;
/// `data` walks Eigen's storage.
struct TensorView {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

/// Trainable tensors in a fixed order. Running statistics are not
/// trainable and are excluded.
std::vector<TensorView> tensors(Parameters& p);

struct ForecastModel {
  ModelConfig config;
  Parameters params;
  timeseries::NormStats stats;
  /// Bumped on every parameter update; caches from older versions are stale.
  std::uint64_t version = 0;

  /// Number of trainable weights W.
  std::size_t parameter_count() const;
};

ForecastModel init_model(const ModelConfig& cfg);

/// Column-major batch: step t holds an input_dim x B matrix. Targets are
/// output_dim x (T*B) with column index t*B + b.
struct Batch {
  std::vector<Eigen::MatrixXd> steps;
  Eigen::MatrixXd targets;
  Eigen::Index batch_size() const { return steps.empty() ? 0 : steps.front().cols(); }
};

Batch make_batch(std::span<const timeseries::Window* const> windows);
Batch make_batch(const std::vector<timeseries::Window>& windows);

enum class Mode { training, inference };

/// Intermediate values kept for backward_bptt.
struct ForwardCache {
  struct LstmStep {
    Eigen::MatrixXd gates;   // 4H x B, post-activation
    Eigen::MatrixXd cell;    // H x B
    Eigen::MatrixXd tanh_cell;
    Eigen::MatrixXd hidden;  // H x B
  };
  struct Dense {
    Eigen::MatrixXd input;   // in x N
    Eigen::MatrixXd xhat;    // normalised pre-activation (batch norm only)
    Eigen::VectorXd inv_std;
    Eigen::VectorXd batch_mean;
    Eigen::VectorXd batch_var;
    Eigen::MatrixXd output;  // post-activation
  };
  std::vector<Eigen::MatrixXd> inputs;          // per step, network input
  std::vector<std::vector<LstmStep>> lstm;      // [layer][t]
  std::vector<Dense> fc;
  Dense out;
  Eigen::MatrixXd predictions;                  // output_dim x (T*B)
  Mode mode = Mode::training;
  std::uint64_t parameter_version = 0;
};

/// Runs the network. Training mode normalises with batch statistics,
/// inference mode with the running statistics.
Eigen::MatrixXd forward(const ForecastModel& m, const Batch& batch, Mode mode, ForwardCache* cache = nullptr);

double rmse(std::span<const double> y, std::span<const double> y_hat);

/// Loss of `predictions` against `targets` for the configured loss kind.
double loss_value(const ModelConfig& cfg, const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets);

/// Exact gradients of the configured loss for every trainable tensor,
/// accumulated across all unrolled steps. `cache` must come from a
/// training-mode forward on `batch` with the current parameters.
Parameters backward_bptt(const ForecastModel& m, const ForwardCache& cache, const Batch& batch);

/// Zero-filled tensors with the same shapes as `p`.
Parameters zeros_like(const Parameters& p);

double learning_rate(const ModelConfig& cfg, int epoch);

enum class StopReason { early_stop, max_epochs };
std::string_view to_string(StopReason r);

struct TrainHistory {
  std::vector<double> losses;
  std::vector<double> learning_rates;
  int best_epoch = -1;
  double best_loss = 0.0;
  StopReason stop_reason = StopReason::max_epochs;

  int epochs() const { return static_cast<int>(losses.size()); }
};

/// Epoch driver shared by train(): calls `run_epoch(epoch, lr)` until
/// `max_epochs` or until the best loss has not improved for `patience`
/// consecutive epochs. `on_best` fires after each new best epoch.
TrainHistory run_epochs(const ModelConfig& cfg, const std::function<double(int, double)>& run_epoch,
                        const std::function<void(int)>& on_best = {});

struct TrainResult {
  ForecastModel model;
  TrainHistory history;
};

/// Mini-batch gradient descent with exponentially decaying learning rate.
/// Returns the parameters of the best-loss epoch.
TrainResult train(ForecastModel m, const timeseries::SequenceDataset& data);

/// Inference-mode predictions, one row per window, denormalised when
/// `denormalize` is set.
Eigen::MatrixXd predict(const ForecastModel& m, const std::vector<timeseries::Window>& windows,
                        bool denormalize = false);

/// RMSE over every target step of `windows` in inference mode.
double evaluate_rmse(const ForecastModel& m, const std::vector<timeseries::Window>& windows, bool raw_scale = false);

using WeatherWeek = std::array<std::array<double, 3>, timeseries::window_length>;

/// Forecasts the next seven daily consumptions from raw (unnormalised)
/// inputs. Weather rows are (air temperature, solar irradiance, wind speed).
std::array<double, timeseries::window_length> predict_week(const ForecastModel& m,
                                                            std::span<const double, timeseries::window_length> last_week,
                                                            const WeatherWeek& current_weather,
                                                            const WeatherWeek& next_weather);

inline constexpr const char* checkpoint_format = "crossgrid-forecast-model/1";

std::string to_checkpoint(const ForecastModel& m);
ForecastModel from_checkpoint(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const ForecastModel& m);
ForecastModel load_checkpoint(const std::filesystem::path& path);

}  // namespace crossgrid::model
