// SPDX-License-Identifier: Apache-2.0
// Parameter registry and the dense layer shared by every block.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "npmixer/tensor.hpp"

namespace npmixer {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

/// Ordered list of every parameter tensor of a model. Order is registration
/// order, which is also the checkpoint order.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> data, bool trainable = true) {
    for (const auto& p : params_) {
      if (p.name == name) throw ContractError("duplicate parameter name '" + name + "'");
    }
    Tensor<T> t = Tensor<T>::parameter(std::move(shape), std::move(data));
    t.set_requires_grad(trainable);
    params_.push_back({name, t, trainable});
    return t;
  }

  /// Registers an existing tensor (the wavelet filters are built elsewhere).
  void adopt(const std::string& name, Tensor<T> t, bool trainable) {
    if (!t.has_grad()) t.mutable_grad();
    t.set_requires_grad(trainable);
    params_.push_back({name, t, trainable});
  }

  const std::vector<NamedParam<T>>& all() const { return params_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParam<T>> params_;
};

/// Uniform draw in [lo, hi) from 53 random bits; independent of the standard
/// library's distribution implementation.
inline double uniform_draw(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

template <typename T>
std::vector<T> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(uniform_draw(rng, -bound, bound));
  return v;
}

/// y = x W + b with W stored [in, out].
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = store.add(name + ".weight", {in, out}, uniform_values<T>(in * out, bound, rng));
    bias = store.add(name + ".bias", {out}, uniform_values<T>(out, bound, rng));
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.dim(-1) != in_features()) {
      throw DimensionError("linear layer expects last dimension " + std::to_string(in_features()) + ", got " +
                           shape_str(x.shape()));
    }
    if (x.rank() == 1) return reshape(add(matmul(reshape(x, {1, x.numel()}), weight), bias), {out_features()});
    return add(matmul(x, weight), bias);
  }

  /// Sets weight and bias to zero (used by tests to disable residual updates).
  void zero() {
    for (auto& v : weight.mutable_data()) v = T(0);
    for (auto& v : bias.mutable_data()) v = T(0);
  }
};

}  // namespace npmixer
