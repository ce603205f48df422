// SPDX-License-Identifier: Apache-2.0
// Full forecaster: RevIN -> wavelet decomposition -> per-band encoder and
// patch mixer -> reconstruction -> final projection -> RevIN inverse.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "npmixer/encoder.hpp"
#include "npmixer/mixer.hpp"
#include "npmixer/wavelet.hpp"

namespace npmixer {

struct AblationFlags {
  bool no_swt = false;
  bool fixed_swt = false;
  bool no_neighboring_mixer = false;
  bool no_channel_encoder = false;
};

struct ModelConfig {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t channels = 7;
  std::size_t patch = 24;
  std::size_t levels = 1;  // J
  std::string wavelet = "db2";
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t e_layers = 1;
  std::size_t n_heads = 0;  // 0 picks default_heads(d_model)
  double dropout = 0.1;
  std::size_t mp_depth = 2;
  AblationFlags ablation;
  int precision = 64;
  std::uint64_t seed = 1;

  /// Throws ConfigError on any invalid field or flag combination.
  void validate() const;
  std::size_t heads() const { return n_heads ? n_heads : default_heads(d_model); }
  std::size_t sp_hidden() const { return std::min(d_ff, 4 * patch); }
  EncoderConfig encoder_config() const;
  MixerConfig mixer_config() const;
};

/// Variant names accepted by apply_variant.
const std::vector<std::string>& variant_names();
/// Sets the ablation flag for "full", "no_swt", "fixed_swt",
/// "no_neighboring_mixer" or "no_channel_encoder". Throws ConfigError otherwise.
ModelConfig apply_variant(ModelConfig cfg, const std::string& variant);

/// Per-window instance normalization with a learnable per-channel affine.
template <typename T>
class RevIN {
 public:
  RevIN(ParamStore<T>& store, const std::string& prefix, std::size_t channels, T eps = T(1e-5));

  /// x [..., C, L]; stores detached per-(window, channel) mean and std.
  Tensor<T> norm(const Tensor<T>& x);
  /// y [..., C, H]; throws StateError when norm has not run.
  Tensor<T> denorm(const Tensor<T>& y) const;

  bool has_stats() const { return mean_.has_value(); }
  void reset() {
    mean_.reset();
    std_.reset();
  }
  const Tensor<T>& mean() const { return *mean_; }
  const Tensor<T>& stdev() const { return *std_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  T eps() const { return eps_; }

 private:
  Tensor<T> weight_, bias_;
  std::optional<Tensor<T>> mean_, std_;
  T eps_;
};

/// Y = (x + GELU(x W_g + b_g)) W_out + b_out with weights shared across channels.
template <typename T>
struct FinalProjection {
  Linear<T> gate;
  Linear<T> out;

  FinalProjection() = default;
  FinalProjection(ParamStore<T>& store, const std::string& prefix, std::size_t lookback, std::size_t horizon,
                  Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x_hat) const;
};

template <typename T>
class NPMixer {
 public:
  explicit NPMixer(const ModelConfig& cfg);

  /// x [B, C, L] or [C, L] -> [B, C, H] or [C, H].
  Tensor<T> forward(const Tensor<T>& x, bool training);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  std::size_t param_count() const { return store_.trainable_count(); }
  Rng& dropout_rng() { return dropout_rng_; }

  bool has_wavelet() const { return bank_.has_value(); }
  WaveletFilterBank<T>& bank() { return bank_.value(); }
  RevIN<T>& revin() { return *revin_; }
  /// Encoder of detail band m (1-based). Absent under no_channel_encoder / no_swt.
  ChannelEncoder<T>& encoder(std::size_t m) { return encoders_.at(m - 1); }
  std::size_t num_encoders() const { return encoders_.size(); }
  /// Branch 0 is the approximation band (or the time-domain branch under
  /// no_swt); branch m >= 1 is detail band m.
  PatchMixer<T>& mixer(std::size_t branch) { return mixers_.at(branch); }
  std::size_t num_branches() const { return mixers_.size(); }
  FinalProjection<T>& projection() { return projection_; }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  Rng dropout_rng_;
  std::optional<WaveletFilterBank<T>> bank_;
  std::unique_ptr<RevIN<T>> revin_;
  std::vector<ChannelEncoder<T>> encoders_;
  std::vector<PatchMixer<T>> mixers_;
  FinalProjection<T> projection_;
};

/// Validates the flag combination and builds the model.
template <typename T>
NPMixer<T> build_variant(const ModelConfig& cfg) {
  cfg.validate();
  return NPMixer<T>(cfg);
}

struct ModelStats {
  std::size_t param_count = 0;
  std::uint64_t flops = 0;  // 2 x multiply-accumulates of one forward pass
};

/// Closed-form parameter and FLOP count from the configuration alone.
ModelStats count_params_flops(const ModelConfig& cfg, std::size_t batch);

/// Runs one inference forward on a zero batch and counts executed MACs.
template <typename T>
std::uint64_t measure_forward_macs(NPMixer<T>& model, std::size_t batch);

}  // namespace npmixer
