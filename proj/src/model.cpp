// SPDX-License-Identifier: Apache-2.0
#include "npmixer/model.hpp"

#include <algorithm>
#include <cmath>

namespace npmixer {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(lookback, "lookback");
  positive(horizon, "horizon");
  positive(channels, "channels");
  positive(patch, "patch");
  positive(levels, "J (wavelet levels)");
  positive(mp_depth, "mp_depth");
  if (ablation.fixed_swt && ablation.no_swt) throw ConfigError("fixed_swt and no_swt cannot both be set");
  if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
  if (!ablation.no_swt) reference_filters(wavelet);
  encoder_config().validate();
  if (levels > 30) throw ConfigError("J (wavelet levels) is unreasonably large");
}

EncoderConfig ModelConfig::encoder_config() const {
  return {d_model, d_ff, e_layers, heads(), dropout};
}

MixerConfig ModelConfig::mixer_config() const {
  return {lookback, patch, sp_hidden(), mp_depth, dropout, !ablation.no_neighboring_mixer};
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"full", "no_swt", "fixed_swt", "no_neighboring_mixer",
                                                 "no_channel_encoder"};
  return names;
}

ModelConfig apply_variant(ModelConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "no_swt") {
    cfg.ablation.no_swt = true;
  } else if (variant == "fixed_swt") {
    cfg.ablation.fixed_swt = true;
  } else if (variant == "no_neighboring_mixer") {
    cfg.ablation.no_neighboring_mixer = true;
  } else if (variant == "no_channel_encoder") {
    cfg.ablation.no_channel_encoder = true;
  } else {
    std::string list;
    for (const auto& n : variant_names()) list += (list.empty() ? "" : ", ") + n;
    throw ConfigError("unknown variant '" + variant + "'; expected one of: " + list);
  }
  return cfg;
}

// --- RevIN -------------------------------------------------------------------

template <typename T>
RevIN<T>::RevIN(ParamStore<T>& store, const std::string& prefix, std::size_t channels, T eps) : eps_(eps) {
  weight_ = store.add(prefix + ".weight", {channels}, std::vector<T>(channels, T(1)));
  bias_ = store.add(prefix + ".bias", {channels}, std::vector<T>(channels, T(0)));
}

template <typename T>
Tensor<T> RevIN<T>::norm(const Tensor<T>& x) {
  const std::size_t c = weight_.numel();
  if (x.rank() < 2 || x.dim(-2) != c) {
    throw DimensionError("RevIN expects [..., " + std::to_string(c) + ", L], got " + shape_str(x.shape()));
  }
  const std::size_t len = x.dim(-1);
  const std::size_t rows = x.numel() / len;
  std::vector<T> mu(rows), sd(rows);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T m = T(0);
    for (std::size_t t = 0; t < len; ++t) m += v[r * len + t];
    m /= static_cast<T>(len);
    T var = T(0);
    for (std::size_t t = 0; t < len; ++t) var += (v[r * len + t] - m) * (v[r * len + t] - m);
    var /= static_cast<T>(len);
    mu[r] = m;
    sd[r] = std::sqrt(var + eps_);
  }
  Shape s(x.shape().begin(), x.shape().end() - 1);
  s.push_back(1);
  mean_ = Tensor<T>(s, std::move(mu));
  std_ = Tensor<T>(s, std::move(sd));
  Tensor<T> z = div(sub(x, *mean_), *std_);
  return add(mul(z, reshape(weight_, {c, 1})), reshape(bias_, {c, 1}));
}

template <typename T>
Tensor<T> RevIN<T>::denorm(const Tensor<T>& y) const {
  if (!mean_) throw StateError("RevIN denorm called before norm");
  const std::size_t c = weight_.numel();
  Shape expect(mean_->shape().begin(), mean_->shape().end() - 1);
  Shape got(y.shape().begin(), y.shape().end() - 1);
  if (expect != got) {
    throw DimensionError("RevIN denorm input " + shape_str(y.shape()) + " does not match normalized batch " +
                         shape_str(mean_->shape()));
  }
  Tensor<T> z = div(sub(y, reshape(bias_, {c, 1})), reshape(weight_, {c, 1}));
  return add(mul(z, *std_), *mean_);
}

// --- final projection ------------------------------------------------------------

template <typename T>
FinalProjection<T>::FinalProjection(ParamStore<T>& store, const std::string& prefix, std::size_t lookback,
                                    std::size_t horizon, Rng& rng)
    : gate(store, prefix + ".gate", lookback, lookback, rng), out(store, prefix + ".out", lookback, horizon, rng) {}

template <typename T>
Tensor<T> FinalProjection<T>::operator()(const Tensor<T>& x_hat) const {
  return out(add(x_hat, gelu(gate(x_hat))));
}

// --- NPMixer -------------------------------------------------------------------------

template <typename T>
NPMixer<T>::NPMixer(const ModelConfig& cfg) : cfg_(cfg), dropout_rng_(cfg.seed ^ 0x9E3779B97F4A7C15ULL) {
  cfg_.validate();
  Rng init_rng(cfg.seed);
  const auto& ab = cfg_.ablation;
  if (!ab.no_swt) {
    const bool learnable = !ab.fixed_swt;
    bank_ = init_filters<T>(cfg_.wavelet, learnable);
    store_.adopt("wavelet.h0", bank_->h0, learnable);
    store_.adopt("wavelet.h1", bank_->h1, learnable);
    store_.adopt("wavelet.g0", bank_->g0, learnable);
    store_.adopt("wavelet.g1", bank_->g1, learnable);
  }
  revin_ = std::make_unique<RevIN<T>>(store_, "revin", cfg_.channels);
  if (!ab.no_swt && !ab.no_channel_encoder) {
    for (std::size_t m = 1; m <= cfg_.levels; ++m)
      encoders_.emplace_back(store_, "encoder.detail" + std::to_string(m), cfg_.encoder_config(), cfg_.lookback,
                             init_rng);
  }
  const MixerConfig mc = cfg_.mixer_config();
  if (ab.no_swt) {
    mixers_.emplace_back(store_, "mixer.time", mc, init_rng);
  } else {
    mixers_.emplace_back(store_, "mixer.approx", mc, init_rng);
    for (std::size_t m = 1; m <= cfg_.levels; ++m)
      mixers_.emplace_back(store_, "mixer.detail" + std::to_string(m), mc, init_rng);
  }
  projection_ = FinalProjection<T>(store_, "projection", cfg_.lookback, cfg_.horizon, init_rng);
}

template <typename T>
Tensor<T> NPMixer<T>::forward(const Tensor<T>& x, bool training) {
  const bool unbatched = x.rank() == 2;
  if ((x.rank() != 2 && x.rank() != 3) || x.dim(-2) != cfg_.channels || x.dim(-1) != cfg_.lookback) {
    throw DimensionError("model expects [B, " + std::to_string(cfg_.channels) + ", " +
                         std::to_string(cfg_.lookback) + "] input, got " + shape_str(x.shape()));
  }
  Tensor<T> xb = unbatched ? reshape(x, {1, cfg_.channels, cfg_.lookback}) : x;
  Tensor<T> xn = revin_->norm(xb);
  Tensor<T> x_hat;
  if (cfg_.ablation.no_swt) {
    x_hat = mixers_[0].forward(xn, training, dropout_rng_);
  } else {
    WaveletCoefficients<T> coeffs = swt_decompose(xn, *bank_, cfg_.levels);
    for (std::size_t m = 1; m <= cfg_.levels; ++m) {
      Tensor<T> band = coeffs.details[m - 1];
      if (!encoders_.empty()) band = encoders_[m - 1].encode_band(band, training, dropout_rng_);
      coeffs.details[m - 1] = mixers_[m].forward(band, training, dropout_rng_);
    }
    coeffs.approx = mixers_[0].forward(coeffs.approx, training, dropout_rng_);
    x_hat = iswt_reconstruct(coeffs, *bank_, cfg_.levels);
  }
  Tensor<T> y = revin_->denorm(projection_(x_hat));
  return unbatched ? reshape(y, {cfg_.channels, cfg_.horizon}) : y;
}

// --- accounting ------------------------------------------------------------------------

ModelStats count_params_flops(const ModelConfig& cfg, std::size_t batch) {
  cfg.validate();
  using u64 = std::uint64_t;
  const u64 B = batch, C = cfg.channels, L = cfg.lookback, H = cfg.horizon, M = cfg.levels;
  const u64 d = cfg.d_model, dff = cfg.d_ff, e = cfg.e_layers, P = cfg.patch, h = cfg.sp_hidden();
  const u64 n = cfg.mp_depth;
  const auto& ab = cfg.ablation;
  u64 params = 0, macs = 0;

  if (!ab.no_swt) {
    const u64 F = reference_filters(cfg.wavelet).h0.size();
    if (!ab.fixed_swt) params += 4 * F;
    macs += 4 * M * B * C * L * F;
  }
  params += 2 * C;

  if (!ab.no_swt && !ab.no_channel_encoder) {
    const u64 layer = 4 * (d * d + d) + (d * dff + dff) + (dff * d + d) + 4 * d;
    params += M * ((L * d + d) + e * layer + (d * L + L));
    const u64 layer_macs = 4 * B * C * d * d + 2 * B * C * C * d + 2 * B * C * d * dff;
    macs += M * (B * C * L * d + e * layer_macs + B * C * d * L);
  }

  const u64 branches = ab.no_swt ? 1 : M + 1;
  const u64 N = (L + P - 1) / P;
  u64 mixer_params = (P * h + h) + (h * P + P);
  u64 mixer_macs = B * C * N * 2 * P * h;
  if (!ab.no_neighboring_mixer) {
    for (const auto& lv : plan_hierarchy(N, P)) {
      const u64 S = lv.block_size;
      mixer_params += (2 * S * S + S) + (n - 1) * (S * S + S) + 1;
      mixer_macs += B * C * lv.pairs * (2 * S * S + (n - 1) * S * S);
    }
  }
  params += branches * mixer_params;
  macs += branches * mixer_macs;

  params += (L * L + L) + (L * H + H);
  macs += B * C * (L * L + L * H);
  return {static_cast<std::size_t>(params), 2 * macs};
}

template <typename T>
std::uint64_t measure_forward_macs(NPMixer<T>& model, std::size_t batch) {
  const auto& cfg = model.config();
  Tensor<T> x({batch, cfg.channels, cfg.lookback}, T(0));
  MacCounter counter;
  model.forward(x, false);
  model.revin().reset();
  return counter.count();
}

template class RevIN<float>;
template class RevIN<double>;
template struct FinalProjection<float>;
template struct FinalProjection<double>;
template class NPMixer<float>;
template class NPMixer<double>;
template std::uint64_t measure_forward_macs(NPMixer<float>&, std::size_t);
template std::uint64_t measure_forward_macs(NPMixer<double>&, std::size_t);

}  // namespace npmixer
