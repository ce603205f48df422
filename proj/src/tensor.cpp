// SPDX-License-Identifier: Apache-2.0
#include "npmixer/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace npmixer {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor() : Tensor(Shape{}, T(0)) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<TensorNode<T>>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<TensorNode<T>>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> data) {
  Tensor t(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  t.node_->grad.assign(t.numel(), T(0));
  return t;
}

template <typename T>
std::size_t Tensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), T(0));
  return node_->grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
  if (value && node_->grad.empty()) node_->grad.assign(numel(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  node_->grad_touched = false;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch for shape " + shape_str(shape()));
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= node_->shape[axis]) throw DimensionError("index out of range for shape " + shape_str(shape()));
    offset = offset * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[offset];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data);
}

// --- tape --------------------------------------------------------------------

template <typename T>
Tape<T>*& active_tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
Tape<T>* active_tape() {
  return active_tape_slot<T>();
}

template <typename T>
void Tape<T>::record(std::function<void()> backward_fn) {
  if (consumed_) throw StateError("recording on a tape that already ran backward; call clear() first");
  entries_.push_back(std::move(backward_fn));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (consumed_) throw StateError("backward called twice on the same tape without re-recording");
  if (entries_.empty()) throw ContractError("backward on an empty tape");
  if (!loss.requires_grad()) throw ContractError("loss was not produced by a recorded operation");
  auto& node = *loss.node();
  if (node.grad.empty()) node.grad.assign(1, T(0));
  node.grad[0] += T(1);
  node.grad_touched = true;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  consumed_ = true;
}

template <typename T>
void Tape<T>::clear() {
  entries_.clear();
  consumed_ = false;
}

template <typename T>
GradRecorder<T>::GradRecorder(Tape<T>& tape) : previous_(active_tape_slot<T>()) {
  active_tape_slot<T>() = &tape;
}

template <typename T>
GradRecorder<T>::~GradRecorder() {
  active_tape_slot<T>() = previous_;
}

namespace {
MacCounter*& mac_slot() {
  thread_local MacCounter* slot = nullptr;
  return slot;
}
}  // namespace

MacCounter::MacCounter() : previous_(mac_slot()) { mac_slot() = this; }
MacCounter::~MacCounter() { mac_slot() = previous_; }

void MacCounter::add(std::uint64_t macs) {
  for (MacCounter* c = mac_slot(); c != nullptr; c = c->previous_) c->count_ += macs;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class GradRecorder<float>;
template class GradRecorder<double>;
template Tape<float>* active_tape<float>();
template Tape<double>* active_tape<double>();

}  // namespace npmixer
