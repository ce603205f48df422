// SPDX-License-Identifier: Apache-2.0
#include "npmixer/train.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace npmixer {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
Adam<T>::Adam(ParamStore<T>& store, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.all()) {
    if (!p.trainable) continue;
    slots_.push_back({p.name, p.tensor, std::vector<T>(p.tensor.numel(), T(0)), std::vector<T>(p.tensor.numel(), T(0))});
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& s : slots_) {
    if (!s.param.grad_touched()) throw ContractError("parameter '" + s.name + "' has no gradient for this step");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& s : slots_) {
    auto p = s.param.mutable_data();
    auto g = s.param.mutable_grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      s.m[i] = static_cast<T>(beta1_ * s.m[i] + (1.0 - beta1_) * gi);
      s.v[i] = static_cast<T>(beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi);
      const double m_hat = s.m[i] / c1;
      const double v_hat = s.v[i] / c2;
      p[i] = static_cast<T>(p[i] - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
    }
    s.param.zero_grad();
  }
}

template <typename T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
  double sq = 0.0;
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto p : store.all()) {
      if (!p.trainable) continue;
      for (T& g : p.tensor.mutable_grad()) g = static_cast<T>(g * scale);
    }
  }
  return norm;
}

template <typename T>
void MetricAccumulator::add(std::span<const T> prediction, std::span<const T> target) {
  if (prediction.size() != target.size()) throw DimensionError("prediction and target sizes differ");
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
    sq_ += e * e;
    abs_ += std::abs(e);
  }
  n_ += prediction.size();
}

Metrics MetricAccumulator::result() const {
  if (n_ == 0) return {};
  return {sq_ / static_cast<double>(n_), abs_ / static_cast<double>(n_), n_};
}

template <typename T>
Metrics evaluate(NPMixer<T>& model, const SplitSeries& split, std::size_t batch) {
  const auto& mc = model.config();
  if (window_count(split.steps, mc.lookback, mc.horizon) == 0) {
    throw ConfigError("evaluation split of " + std::to_string(split.steps) + " steps has no window for L=" +
                      std::to_string(mc.lookback) + ", H=" + std::to_string(mc.horizon));
  }
  if (split.channels != mc.channels) {
    throw ConfigError("data has " + std::to_string(split.channels) + " channels, model expects " +
                      std::to_string(mc.channels));
  }
  Rng unused(0);
  const auto starts = window_starts(split.steps, mc.lookback, mc.horizon, false, unused);
  MetricAccumulator acc;
  Tensor<T> x, y;
  for (std::size_t b = 0; b < starts.size(); b += batch) {
    const std::size_t n = std::min(batch, starts.size() - b);
    fill_batch<T>(split, std::span<const std::size_t>(starts.data() + b, n), mc.lookback, mc.horizon, x, y);
    const Tensor<T> pred = model.forward(x, false);
    acc.add<T>(pred.data(), y.data());
  }
  return acc.result();
}

namespace {

template <typename T>
std::vector<std::vector<T>> snapshot(const ParamStore<T>& store) {
  std::vector<std::vector<T>> out;
  for (const auto& p : store.all()) out.push_back(p.tensor.to_vector());
  return out;
}

template <typename T>
void restore(ParamStore<T>& store, const std::vector<std::vector<T>>& saved) {
  for (std::size_t i = 0; i < saved.size(); ++i) {
    auto d = store.all()[i].tensor;
    std::copy(saved[i].begin(), saved[i].end(), d.mutable_data().begin());
  }
}

}  // namespace

template <typename T>
TrainResult train_run(NPMixer<T>& model, Adam<T>& optimizer, const DataSplits& data, const TrainConfig& cfg,
                      const std::function<void(const EpochLog&)>& on_epoch) {
  if (!(cfg.lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (cfg.batch < 1 || cfg.epochs < 1 || cfg.patience < 1) throw ConfigError("batch, epochs and patience must be >= 1");
  const auto& mc = model.config();
  if (window_count(data.val.steps, mc.lookback, mc.horizon) == 0) {
    throw ConfigError("validation split of " + std::to_string(data.val.steps) + " steps has no window for L+H = " +
                      std::to_string(mc.lookback + mc.horizon));
  }
  optimizer.set_lr(cfg.lr);
  Rng order_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  TrainResult result;
  std::vector<std::vector<T>> best;
  std::size_t stale = 0;
  Tensor<T> x, y;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto starts = window_starts(data.train.steps, mc.lookback, mc.horizon, true, order_rng);
    std::size_t n_batches = (starts.size() + cfg.batch - 1) / cfg.batch;
    if (cfg.max_train_batches > 0) n_batches = std::min(n_batches, cfg.max_train_batches);

    double loss_sum = 0.0;
    std::size_t loss_windows = 0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t off = b * cfg.batch;
      const std::size_t n = std::min(cfg.batch, starts.size() - off);
      fill_batch<T>(data.train, std::span<const std::size_t>(starts.data() + off, n), mc.lookback, mc.horizon, x, y);
      Tape<T> tape;
      Tensor<T> loss;
      {
        GradRecorder<T> rec(tape);
        const Tensor<T> pred = model.forward(x, true);
        const Tensor<T> diff = sub(pred, y);
        loss = mean(mul(diff, diff));
      }
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) {
        throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b + 1));
      }
      tape.backward(loss);
      if (cfg.clip_norm > 0.0) clip_grad_norm(model.params(), cfg.clip_norm);
      optimizer.step();
      loss_sum += lv * static_cast<double>(n);
      loss_windows += n;
    }

    const Metrics val = evaluate(model, data.val);
    if (!std::isfinite(val.mse)) {
      throw NumericalError("validation MSE is not finite after epoch " + std::to_string(epoch));
    }
    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(loss_windows);
    row.val_mse = val.mse;
    row.val_mae = val.mae;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (result.best_epoch == 0 || val.mse < result.best_val_mse) {
      result.best_epoch = epoch;
      result.best_val_mse = val.mse;
      best = snapshot(model.params());
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.early_stopped = epoch < cfg.epochs;
      break;
    }
  }
  restore(model.params(), best);
  return result;
}

void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write training log '" + path + "'");
  out << "epoch,train_loss,val_mse,val_mae,seconds\n";
  for (const auto& r : log) {
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.val_mse) << ','
        << format_double(r.val_mae) << ',' << format_double(r.seconds) << '\n';
  }
}

void append_metrics_row(const std::string& path, const std::string& dataset, std::size_t horizon,
                        std::uint64_t seed, const Metrics& m) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot write metrics file '" + path + "'");
  if (fresh) out << "dataset,horizon,seed,mse,mae\n";
  out << dataset << ',' << horizon << ',' << seed << ',' << format_double(m.mse) << ',' << format_double(m.mae) << '\n';
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm<float>(ParamStore<float>&, double);
template double clip_grad_norm<double>(ParamStore<double>&, double);
template void MetricAccumulator::add<float>(std::span<const float>, std::span<const float>);
template void MetricAccumulator::add<double>(std::span<const double>, std::span<const double>);
template Metrics evaluate<float>(NPMixer<float>&, const SplitSeries&, std::size_t);
template Metrics evaluate<double>(NPMixer<double>&, const SplitSeries&, std::size_t);
template TrainResult train_run<float>(NPMixer<float>&, Adam<float>&, const DataSplits&, const TrainConfig&,
                                      const std::function<void(const EpochLog&)>&);
template TrainResult train_run<double>(NPMixer<double>&, Adam<double>&, const DataSplits&, const TrainConfig&,
                                       const std::function<void(const EpochLog&)>&);

}  // namespace npmixer
