// SPDX-License-Identifier: Apache-2.0
#include "npmixer/encoder.hpp"

#include <cmath>

namespace npmixer {

void EncoderConfig::validate() const {
  if (d_model < 1 || d_ff < 1) throw ConfigError("d_model and d_ff must be >= 1");
  if (e_layers < 1) throw ConfigError("e_layers must be >= 1");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

std::size_t default_heads(std::size_t d_model) {
  for (std::size_t h = 8; h > 1; --h)
    if (d_model % h == 0) return h;
  return 1;
}

template <typename T>
ChannelEncoder<T>::ChannelEncoder(ParamStore<T>& store, const std::string& prefix, const EncoderConfig& cfg,
                                  std::size_t seq_len, Rng& init_rng)
    : cfg_(cfg), seq_len_(seq_len) {
  cfg_.validate();
  const std::size_t d = cfg.d_model;
  embed_ = Linear<T>(store, prefix + ".embed", seq_len, d, init_rng);
  for (std::size_t l = 0; l < cfg.e_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    EncoderLayerWeights<T> w;
    w.query = Linear<T>(store, p + ".query", d, d, init_rng);
    w.key = Linear<T>(store, p + ".key", d, d, init_rng);
    w.value = Linear<T>(store, p + ".value", d, d, init_rng);
    w.out = Linear<T>(store, p + ".out", d, d, init_rng);
    w.ff1 = Linear<T>(store, p + ".ff1", d, cfg.d_ff, init_rng);
    w.ff2 = Linear<T>(store, p + ".ff2", cfg.d_ff, d, init_rng);
    w.norm1_gamma = store.add(p + ".norm1.gamma", {d}, std::vector<T>(d, T(1)));
    w.norm1_beta = store.add(p + ".norm1.beta", {d}, std::vector<T>(d, T(0)));
    w.norm2_gamma = store.add(p + ".norm2.gamma", {d}, std::vector<T>(d, T(1)));
    w.norm2_beta = store.add(p + ".norm2.beta", {d}, std::vector<T>(d, T(0)));
    layers_.push_back(std::move(w));
  }
  project_ = Linear<T>(store, prefix + ".project", d, seq_len, init_rng);
}

template <typename T>
Tensor<T> ChannelEncoder<T>::embed_variate(const Tensor<T>& band) const {
  if (band.rank() < 2 || band.dim(-1) != seq_len_) {
    throw DimensionError("encoder expects [..., C, " + std::to_string(seq_len_) + "], got " +
                         shape_str(band.shape()));
  }
  return embed_(band);
}

template <typename T>
Tensor<T> ChannelEncoder<T>::encoder_layer(const Tensor<T>& h, std::size_t layer, bool training, Rng& rng,
                                           Tensor<T>* attention) const {
  const auto& w = layers_.at(layer);
  const std::size_t d = cfg_.d_model;
  const std::size_t heads = cfg_.n_heads;
  const std::size_t dk = d / heads;
  if (h.rank() < 2 || h.dim(-1) != d) throw DimensionError("encoder layer input " + shape_str(h.shape()));

  // [..., C, d] -> [..., heads, C, dk]
  auto split_heads = [&](const Tensor<T>& x) {
    Shape s(x.shape().begin(), x.shape().end() - 1);
    s.push_back(heads);
    s.push_back(dk);
    return transpose(reshape(x, s), -3, -2);
  };
  Tensor<T> q = split_heads(w.query(h));
  Tensor<T> k = split_heads(w.key(h));
  Tensor<T> v = split_heads(w.value(h));
  Tensor<T> scores = mul_scalar(matmul(q, transpose(k, -1, -2)), T(1) / std::sqrt(static_cast<T>(dk)));
  Tensor<T> probs = softmax_lastdim(scores);
  if (attention != nullptr) *attention = probs;
  probs = dropout(probs, cfg_.dropout, training, rng);
  Tensor<T> ctx = transpose(matmul(probs, v), -3, -2);
  ctx = reshape(ctx, h.shape());
  Tensor<T> attn_out = dropout(w.out(ctx), cfg_.dropout, training, rng);
  Tensor<T> x = layer_norm(add(h, attn_out), w.norm1_gamma, w.norm1_beta);

  Tensor<T> ff = dropout(gelu(w.ff1(x)), cfg_.dropout, training, rng);
  ff = dropout(w.ff2(ff), cfg_.dropout, training, rng);
  return layer_norm(add(x, ff), w.norm2_gamma, w.norm2_beta);
}

template <typename T>
Tensor<T> ChannelEncoder<T>::encode_band(const Tensor<T>& band, bool training, Rng& rng) const {
  Tensor<T> h = embed_variate(band);
  for (std::size_t l = 0; l < layers_.size(); ++l) h = encoder_layer(h, l, training, rng);
  return add(band, project_(h));
}

template class ChannelEncoder<float>;
template class ChannelEncoder<double>;

}  // namespace npmixer
