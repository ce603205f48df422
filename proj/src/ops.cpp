// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "npmixer/tensor.hpp"

namespace npmixer {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

template <typename T>
Tensor<T> make_tensor(Shape shape, std::vector<T> data) {
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
bool should_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>* t) { return t->requires_grad(); });
}

template <typename T>
bool should_record(const std::vector<Tensor<T>>& inputs) {
  if (active_tape<T>() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
}

// Marks `out` as differentiable and appends its backward closure to the tape.
template <typename T, typename F>
void record(Tensor<T>& out, F&& fn) {
  out.node()->requires_grad = true;
  active_tape<T>()->record(std::forward<F>(fn));
}

template <typename T>
std::vector<T>& grad_of(TensorNode<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), T(0));
  node.grad_touched = true;
  return node.grad;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// --- broadcasting --------------------------------------------------------------

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out.assign(r, 1);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ia = i + a.size();
    const std::size_t ib = i + b.size();
    const std::size_t ea = ia >= r ? a[ia - r] : 1;
    const std::size_t eb = ib >= r ? b[ib - r] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    }
    p.out[i] = std::max(ea, eb);
    if (ia >= r && ea != 1) p.stride_a[i] = sa[ia - r];
    if (ib >= r && eb != 1) p.stride_b[i] = sb[ib - r];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::size_t r = p.out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const std::size_t inner = p.out[r - 1];
  const std::size_t total = shape_numel(p.out);
  if (inner == 0 || total == 0) return;
  const std::size_t sa_in = p.stride_a[r - 1];
  const std::size_t sb_in = p.stride_b[r - 1];
  std::vector<std::size_t> idx(r - 1, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, oa + j * sa_in, ob + j * sb_in);
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += p.stride_a[d];
      ob += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.stride_a[d] * p.out[d];
      ob -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryOp { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op) {
  auto plan = plan_broadcast(a.shape(), b.shape());
  std::vector<T> out(shape_numel(plan.out));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  switch (op) {
    case BinaryOp::kAdd:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] + pb[j]; });
      break;
    case BinaryOp::kSub:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] - pb[j]; });
      break;
    case BinaryOp::kMul:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] * pb[j]; });
      break;
    case BinaryOp::kDiv:
      for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] / pb[j]; });
      break;
  }
  Tensor<T> result = make_tensor(plan.out, std::move(out));
  if (should_record<T>({&a, &b})) {
    NodePtr<T> na = a.node(), nb = b.node(), no = result.node();
    record(result, [na, nb, no, plan = std::move(plan), op]() {
      if (no->grad.empty()) return;
      const T* g = no->grad.data();
      const T* va = na->data.data();
      const T* vb = nb->data.data();
      if (na->requires_grad) {
        T* ga = grad_of(*na).data();
        switch (op) {
          case BinaryOp::kAdd:
          case BinaryOp::kSub:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
            break;
          case BinaryOp::kMul:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * vb[j]; });
            break;
          case BinaryOp::kDiv:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] / vb[j]; });
            break;
        }
      }
      if (nb->requires_grad) {
        T* gb = grad_of(*nb).data();
        switch (op) {
          case BinaryOp::kAdd:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
            break;
          case BinaryOp::kSub:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; });
            break;
          case BinaryOp::kMul:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * va[i]; });
            break;
          case BinaryOp::kDiv:
            for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
              gb[j] -= g[o] * va[i] / (vb[j] * vb[j]);
            });
            break;
        }
      }
    });
  }
  return result;
}

// Applies an elementwise map whose derivative is a function of (input, output).
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no, deriv]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += no->grad[i] * deriv(nx->data[i], no->data[i]);
    });
  }
  return result;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// c = a[n,k] b[k,m], row-major. Every output element accumulates over k in
// ascending order no matter which row it sits in, so results do not depend on
// row position (channel or batch permutations commute bit-exactly).
template <typename T>
void row_gemm(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    T* c0 = c + i * m;
    T* c1 = c0 + m;
    T* c2 = c1 + m;
    T* c3 = c2 + m;
    std::fill(c0, c0 + 4 * m, T(0));
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* br = b + p * m;
      const T w0 = a0[p], w1 = a0[k + p], w2 = a0[2 * k + p], w3 = a0[3 * k + p];
      for (std::size_t j = 0; j < m; ++j) {
        const T bv = br[j];
        c0[j] += w0 * bv;
        c1[j] += w1 * bv;
        c2[j] += w2 * bv;
        c3[j] += w3 * bv;
      }
    }
  }
  for (; i < n; ++i) {
    T* c0 = c + i * m;
    std::fill(c0, c0 + m, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T* br = b + p * m;
      const T w0 = a[i * k + p];
      for (std::size_t j = 0; j < m; ++j) c0[j] += w0 * br[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kAdd);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kSub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kMul);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryOp::kDiv);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return unary(a, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

// --- matmul ------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t n = a.dim(-2), k = a.dim(-1);
  const std::size_t kb = b.dim(-2), m = b.dim(-1);
  if (k != kb) {
    throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const auto plan = plan_broadcast(batch_a, batch_b);
  Shape out_shape = plan.out;
  out_shape.push_back(n);
  out_shape.push_back(m);
  std::vector<T> out(shape_numel(out_shape), T(0));
  const std::size_t batches = shape_numel(plan.out);
  const bool flat_b = batch_b.empty();

  if (flat_b) {
    const std::size_t rows = shape_numel(batch_a) * n;
    row_gemm(a.data().data(), b.data().data(), out.data(), rows, k, m);
  } else {
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      row_gemm(a.data().data() + ia * n * k, b.data().data() + ib * k * m, out.data() + o * n * m, n, k, m);
    });
  }
  MacCounter::add(static_cast<std::uint64_t>(batches) * n * k * m);

  Tensor<T> result = make_tensor(out_shape, std::move(out));
  if (should_record<T>({&a, &b})) {
    NodePtr<T> na = a.node(), nb = b.node(), no = result.node();
    record(result, [na, nb, no, plan, n, k, m, flat_b, batch_a]() {
      if (no->grad.empty()) return;
      const T* g = no->grad.data();
      if (flat_b) {
        const std::size_t rows = shape_numel(batch_a) * n;
        CMapMat<T> gm(g, rows, m);
        if (na->requires_grad) {
          MapMat<T>(grad_of(*na).data(), rows, k).noalias() += gm * CMapMat<T>(nb->data.data(), k, m).transpose();
        }
        if (nb->requires_grad) {
          MapMat<T>(grad_of(*nb).data(), k, m).noalias() += CMapMat<T>(na->data.data(), rows, k).transpose() * gm;
        }
        return;
      }
      T* ga = na->requires_grad ? grad_of(*na).data() : nullptr;
      T* gb = nb->requires_grad ? grad_of(*nb).data() : nullptr;
      for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        CMapMat<T> gm(g + o * n * m, n, m);
        if (ga) {
          MapMat<T>(ga + ia * n * k, n, k).noalias() += gm * CMapMat<T>(nb->data.data() + ib * k * m, k, m).transpose();
        }
        if (gb) {
          MapMat<T>(gb + ib * k * m, k, m).noalias() += CMapMat<T>(na->data.data() + ia * n * k, n, k).transpose() * gm;
        }
      });
    });
  }
  return result;
}

// --- circular dilated convolution --------------------------------------------------

template <typename T>
Tensor<T> conv1d_dilated_circular(const Tensor<T>& x, const Tensor<T>& h, std::size_t dilation,
                                  ConvDirection direction) {
  if (x.rank() < 1 || h.rank() != 1) {
    throw DimensionError("conv1d expects x[..., L] and h[F], got " + shape_str(x.shape()) + " and " +
                         shape_str(h.shape()));
  }
  if (dilation < 1) throw ParameterError("conv1d dilation must be >= 1");
  const std::size_t len = x.dim(-1);
  const std::size_t taps = h.numel();
  if (len < 1 || taps < 1) throw DimensionError("conv1d needs L >= 1 and F >= 1");
  const std::size_t rows = x.numel() / len;

  // shift[k] is the source offset s such that y[t] reads x[(t + s) mod L].
  std::vector<std::size_t> shift(taps);
  for (std::size_t k = 0; k < taps; ++k) {
    const std::size_t s = (k * dilation) % len;
    shift[k] = direction == ConvDirection::kCausal ? (len - s) % len : s;
  }

  std::vector<T> out(x.numel(), T(0));
  const T* px = x.data().data();
  const T* ph = h.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * len;
    T* yr = out.data() + r * len;
    for (std::size_t k = 0; k < taps; ++k) {
      const T w = ph[k];
      const std::size_t s = shift[k];
      const std::size_t head = len - s;  // t in [0, head) reads xr[t + s]
      for (std::size_t t = 0; t < head; ++t) yr[t] += w * xr[t + s];
      for (std::size_t t = head; t < len; ++t) yr[t] += w * xr[t + s - len];
    }
  }
  MacCounter::add(static_cast<std::uint64_t>(rows) * len * taps);

  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  if (should_record<T>({&x, &h})) {
    NodePtr<T> nx = x.node(), nh = h.node(), no = result.node();
    record(result, [nx, nh, no, shift, rows, len, taps]() {
      if (no->grad.empty()) return;
      const T* g = no->grad.data();
      T* gx = nx->requires_grad ? grad_of(*nx).data() : nullptr;
      T* gh = nh->requires_grad ? grad_of(*nh).data() : nullptr;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g + r * len;
        const T* xr = nx->data.data() + r * len;
        for (std::size_t k = 0; k < taps; ++k) {
          const std::size_t s = shift[k];
          const std::size_t head = len - s;
          if (gx) {
            T* gxr = gx + r * len;
            const T w = nh->data[k];
            for (std::size_t t = 0; t < head; ++t) gxr[t + s] += w * gr[t];
            for (std::size_t t = head; t < len; ++t) gxr[t + s - len] += w * gr[t];
          }
          if (gh) {
            T acc = T(0);
            for (std::size_t t = 0; t < head; ++t) acc += gr[t] * xr[t + s];
            for (std::size_t t = head; t < len; ++t) acc += gr[t] * xr[t + s - len];
            gh[k] += acc;
          }
        }
      }
    });
  }
  return result;
}

// --- activations -------------------------------------------------------------------

double gelu_value(double x) {
  return gelu(Tensor<double>::scalar(x)).item();
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  // 0.5 * (1 + tanh(u)) == sigmoid(2u); the sigmoid form keeps the far negative tail nonzero.
  constexpr T kC = T(0.7978845608028654);
  constexpr T kA = T(0.044715);
  auto gate = [](T v) {
    const T z = T(2) * kC * (v + kA * v * v * v);
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
  };
  return unary(
      x, [gate](T v) { return v * gate(v); },
      [gate](T v, T) {
        const T s = gate(v);
        return s + v * s * (T(1) - s) * T(2) * kC * (T(1) + T(3) * kA * v * v);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  if (x.rank() < 1) throw DimensionError("softmax needs rank >= 1");
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  const T* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T* yr = out.data() + r * d;
    const T mx = *std::max_element(xr, xr + d);
    T total = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < d; ++j) yr[j] /= total;
  }
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no, rows, d]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = no->data.data() + r * d;
        const T* g = no->grad.data() + r * d;
        T dot = T(0);
        for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (g[j] - dot);
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm affine shapes " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match last dimension of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * inv;
      out[r * d + j] = xhat[r * d + j] * pg[j] + pb[j];
    }
  }
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  if (should_record<T>({&x, &gamma, &beta})) {
    NodePtr<T> nx = x.node(), ng = gamma.node(), nb = beta.node(), no = result.node();
    record(result, [nx, ng, nb, no, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() {
      if (no->grad.empty()) return;
      const T* g = no->grad.data();
      if (ng->requires_grad) {
        auto& gg = grad_of(*ng);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
      }
      if (nb->requires_grad) {
        auto& gb = grad_of(*nb);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
      }
      if (nx->requires_grad) {
        auto& gx = grad_of(*nx);
        const T inv_d = T(1) / static_cast<T>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_dxhat = T(0);
          T sum_dxhat_xhat = T(0);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * ng->data[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat[r * d + j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            const T dxhat = g[r * d + j] * ng->data[j];
            gx[r * d + j] += inv_std[r] * inv_d *
                             (static_cast<T>(d) * dxhat - sum_dxhat - xhat[r * d + j] * sum_dxhat_xhat);
          }
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u >= p ? scale : T(0);
  }
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  Tensor<T> result = make_tensor(x.shape(), std::move(out));
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no, mask = std::move(mask)]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += no->grad[i] * mask[i];
    });
  }
  return result;
}

// --- reductions ----------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  Tensor<T> result = Tensor<T>::scalar(total);
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (auto& g : gx) g += no->grad[0];
    });
  }
  return result;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

// --- shape manipulation ------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor<T> result = make_tensor(std::move(shape), x.to_vector());
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += no->grad[i];
    });
  }
  return result;
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw DimensionError("permute axis count does not match rank of " + shape_str(x.shape()));
  std::vector<bool> seen(r, false);
  for (std::size_t a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute axes are not a permutation");
    seen[a] = true;
  }
  const auto in_strides = contiguous_strides(x.shape());
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = x.shape()[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // Reuse the broadcast walker: "a" stream walks the source with permuted strides.
  BroadcastPlan plan{out_shape, src_strides, std::vector<std::size_t>(r, 0)};
  std::vector<std::size_t> src(x.numel());
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t) { src[o] = i; });
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = in[src[o]];
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no, src = std::move(src)]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (std::size_t o = 0; o < src.size(); ++o) gx[src[o]] += no->grad[o];
    });
  }
  return result;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
  const std::size_t a0 = normalize_axis(axis0, x.rank());
  const std::size_t a1 = normalize_axis(axis1, x.rank());
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a0], axes[a1]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const std::size_t r = parts.front().rank();
  const std::size_t ax = normalize_axis(axis, r);
  Shape out_shape = parts.front().shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < r; ++i) {
      if (i != ax && p.shape()[i] != parts.front().shape()[i]) {
        throw DimensionError("concat shape mismatch: " + shape_str(p.shape()) + " vs " +
                             shape_str(parts.front().shape()));
      }
    }
    out_shape[ax] += p.shape()[ax];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= out_shape[i];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < r; ++i) inner *= out_shape[i];
  const std::size_t out_row = out_shape[ax] * inner;

  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[ax] * inner;
    const T* src = p.data().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * chunk, chunk, out.data() + o * out_row + offset);
    offset += chunk;
  }
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));
  if (should_record<T>(parts)) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    NodePtr<T> no = result.node();
    record(result, [nodes = std::move(nodes), offsets = std::move(offsets), no, outer, out_row]() {
      if (no->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        auto& g = grad_of(*nodes[i]);
        const std::size_t chunk = g.size() / outer;
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = no->grad.data() + o * out_row + offsets[i];
          T* dst = g.data() + o * chunk;
          for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return result;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const std::size_t extent = x.shape()[ax];
  if (begin > end || end > extent) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for axis " +
                         std::to_string(ax) + " of " + shape_str(x.shape()));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.shape()[i];
  std::size_t inner = 1;
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  const std::size_t chunk = (end - begin) * inner;
  const std::size_t in_row = extent * inner;
  const std::size_t start = begin * inner;
  std::vector<T> out(shape_numel(out_shape));
  const T* src = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * in_row + start, chunk, out.data() + o * chunk);
  Tensor<T> result = make_tensor(std::move(out_shape), std::move(out));
  if (should_record<T>({&x})) {
    NodePtr<T> nx = x.node(), no = result.node();
    record(result, [nx, no, outer, chunk, in_row, start]() {
      if (no->grad.empty()) return;
      auto& gx = grad_of(*nx);
      for (std::size_t o = 0; o < outer; ++o) {
        const T* g = no->grad.data() + o * chunk;
        T* dst = gx.data() + o * in_row + start;
        for (std::size_t j = 0; j < chunk; ++j) dst[j] += g[j];
      }
    });
  }
  return result;
}

#define NPMIXER_INSTANTIATE_OPS(T)                                                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> conv1d_dilated_circular(const Tensor<T>&, const Tensor<T>&, std::size_t, ConvDirection); \
  template Tensor<T> gelu(const Tensor<T>&);                                                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                            \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                                    \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                  \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                                        \
  template Tensor<T> sum(const Tensor<T>&);                                                                \
  template Tensor<T> mean(const Tensor<T>&);                                                               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                     \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                           \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                                \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                           \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);

NPMIXER_INSTANTIATE_OPS(float)
NPMIXER_INSTANTIATE_OPS(double)

#undef NPMIXER_INSTANTIATE_OPS

}  // namespace npmixer
