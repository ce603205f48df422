// SPDX-License-Identifier: Apache-2.0
// Inverted-attention encoder: each variate's series is one token and
// self-attention runs across the channel axis.
#pragma once

#include <string>
#include <vector>

#include "npmixer/nn.hpp"

namespace npmixer {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t e_layers = 1;
  std::size_t n_heads = 8;
  double dropout = 0.0;

  void validate() const;
};

/// Largest divisor of d_model that is <= 8.
std::size_t default_heads(std::size_t d_model);

template <typename T>
struct EncoderLayerWeights {
  Linear<T> query, key, value, out;
  Linear<T> ff1, ff2;
  Tensor<T> norm1_gamma, norm1_beta, norm2_gamma, norm2_beta;
};

template <typename T>
class ChannelEncoder {
 public:
  ChannelEncoder(ParamStore<T>& store, const std::string& prefix, const EncoderConfig& cfg, std::size_t seq_len,
                 Rng& init_rng);

  /// [..., C, L] -> [..., C, d_model]
  Tensor<T> embed_variate(const Tensor<T>& band) const;
  /// Post-norm attention and feed-forward sub-blocks. When `attention` is
  /// non-null it receives the softmax weights [..., heads, C, C] before dropout.
  Tensor<T> encoder_layer(const Tensor<T>& h, std::size_t layer, bool training, Rng& rng,
                          Tensor<T>* attention = nullptr) const;
  /// band + Project(layers(Embed(band)))
  Tensor<T> encode_band(const Tensor<T>& band, bool training, Rng& rng) const;

  const EncoderConfig& config() const { return cfg_; }
  std::size_t seq_len() const { return seq_len_; }
  Linear<T>& embed() { return embed_; }
  Linear<T>& project() { return project_; }
  EncoderLayerWeights<T>& layer(std::size_t i) { return layers_.at(i); }

 private:
  EncoderConfig cfg_;
  std::size_t seq_len_;
  Linear<T> embed_;
  std::vector<EncoderLayerWeights<T>> layers_;
  Linear<T> project_;
};

}  // namespace npmixer
