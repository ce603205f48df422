// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tensor is a shared handle to a node holding data, an optional gradient
// buffer and a requires_grad flag. Operations are recorded on the Tape that is
// active on the current thread (see GradRecorder) whenever at least one input
// requires a gradient. Without an active tape every op is a plain forward
// computation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "npmixer/errors.hpp"

namespace npmixer {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  // Set when backward has written into grad since the last zero_grad().
  bool grad_touched = false;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T value);
  /// Leaf tensor with an allocated gradient buffer.
  static Tensor parameter(Shape shape, std::vector<T> data);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Extent of an axis; negative values count from the back.
  std::size_t dim(int axis) const;

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  std::vector<T> to_vector() const { return node_->data; }

  /// Gradient buffer; empty when the tensor never received one.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  bool has_grad() const { return !node_->grad.empty(); }
  bool grad_touched() const { return node_->grad_touched; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value);
  void zero_grad();

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  /// Deep copy without autodiff history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode<T>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Appends a backward closure. Called by ops only.
  void record(std::function<void()> backward_fn);

  /// Propagates d(loss)/d(leaf) to every leaf reachable through the tape.
  /// Throws ContractError for a non-scalar loss or an empty tape and
  /// StateError when the tape was already consumed.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  /// Drops every recorded op so the tape can be reused.
  void clear();

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

template <typename T>
Tape<T>* active_tape();

/// Makes a tape the recording target for the current thread for its lifetime.
template <typename T>
class GradRecorder {
 public:
  explicit GradRecorder(Tape<T>& tape);
  ~GradRecorder();
  GradRecorder(const GradRecorder&) = delete;
  GradRecorder& operator=(const GradRecorder&) = delete;

 private:
  Tape<T>* previous_;
};

/// Counts multiply-accumulates executed by matmul and convolution on this thread.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t count() const { return count_; }
  static void add(std::uint64_t macs);

 private:
  std::uint64_t count_ = 0;
  MacCounter* previous_;
};

// --- elementwise arithmetic (numpy broadcasting) ---------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

// --- linear algebra and signal ops -----------------------------------------
/// a[..., n, k] x b[..., k, m] with broadcast leading dimensions.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

enum class ConvDirection { kCausal, kAntiCausal };

/// y[r, t] = sum_k h[k] * x[r, (t -/+ k*dilation) mod L] over the last axis.
template <typename T>
Tensor<T> conv1d_dilated_circular(const Tensor<T>& x, const Tensor<T>& h, std::size_t dilation,
                                  ConvDirection direction = ConvDirection::kCausal);

// --- activations and normalization -----------------------------------------
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> softmax_lastdim(const Tensor<T>& x);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));
/// Inverted dropout. Identity when !training or p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng);

// --- reductions -------------------------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// --- shape manipulation -----------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
/// Half-open range [begin, end) along an axis.
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end);

/// Elementwise GELU, tanh approximation, on a plain value.
double gelu_value(double x);

}  // namespace npmixer
