// SPDX-License-Identifier: Apache-2.0
// Adam, the training loop with early stopping, and MSE/MAE evaluation.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "npmixer/config.hpp"
#include "npmixer/data.hpp"
#include "npmixer/model.hpp"

namespace npmixer {

/// Bias-corrected Adam over the trainable entries of a ParamStore.
template <typename T>
class Adam {
 public:
  struct Slot {
    std::string name;
    Tensor<T> param;
    std::vector<T> m, v;
  };

  Adam(ParamStore<T>& store, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update and zeroes the gradients. Throws ContractError naming
  /// the first trainable parameter that received no gradient.
  void step();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Slot> slots_;
};

/// Scales every trainable gradient so the global L2 norm is at most
/// `max_norm`. Returns the norm before scaling.
template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t count = 0;  // scalar errors averaged
};

/// Accumulates squared and absolute errors element by element in call order.
class MetricAccumulator {
 public:
  template <typename T>
  void add(std::span<const T> prediction, std::span<const T> target);
  Metrics result() const;

 private:
  double sq_ = 0.0, abs_ = 0.0;
  std::size_t n_ = 0;
};

/// Inference-mode MSE/MAE over every window of the split, on standardized
/// values, accumulated in window order. Throws ConfigError on an empty split.
template <typename T>
Metrics evaluate(NPMixer<T>& model, const SplitSeries& split, std::size_t batch = 256);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  bool early_stopped = false;
};

/// Shuffled mini-batch training with validation after each epoch. The best
/// validation parameters are restored into `model` before returning. Throws
/// NumericalError naming the epoch and batch when the loss is not finite.
template <typename T>
TrainResult train_run(NPMixer<T>& model, Adam<T>& optimizer, const DataSplits& data, const TrainConfig& cfg,
                      const std::function<void(const EpochLog&)>& on_epoch = {});

/// Writes the training log as CSV with a header row.
void write_train_log(const std::string& path, const std::vector<EpochLog>& log);
/// Appends one (dataset, horizon, seed, mse, mae) row, writing the header
/// when the file is new.
void append_metrics_row(const std::string& path, const std::string& dataset, std::size_t horizon,
                        std::uint64_t seed, const Metrics& m);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace npmixer
