// SPDX-License-Identifier: Apache-2.0
#include "npmixer/mixer.hpp"

namespace npmixer {

template <typename T>
PatchGrid<T> patchify(const Tensor<T>& x, std::size_t patch_len) {
  if (patch_len < 1) throw ParameterError("patch length must be >= 1");
  if (x.rank() < 1) throw DimensionError("patchify needs a time axis");
  const std::size_t len = x.dim(-1);
  const std::size_t pad = (patch_len - len % patch_len) % patch_len;
  Tensor<T> padded = x;
  if (pad > 0) {
    Shape zs = x.shape();
    zs.back() = pad;
    padded = concat<T>({x, Tensor<T>(zs, T(0))}, -1);
  }
  Shape s(x.shape().begin(), x.shape().end() - 1);
  s.push_back((len + pad) / patch_len);
  s.push_back(patch_len);
  return {reshape(padded, s), pad, len};
}

template <typename T>
Tensor<T> unpatchify(const PatchGrid<T>& grid) {
  const Tensor<T>& d = grid.data;
  if (d.rank() < 2) throw DimensionError("patch grid needs [..., N, P]");
  Shape s(d.shape().begin(), d.shape().end() - 2);
  s.push_back(grid.num_patches() * grid.patch_len());
  Tensor<T> flat = reshape(d, s);
  if (grid.orig_len == s.back()) return flat;
  return slice(flat, -1, 0, grid.orig_len);
}

std::vector<LevelPlan> plan_hierarchy(std::size_t num_patches, std::size_t patch_len) {
  std::vector<LevelPlan> out;
  const std::size_t total = num_patches * patch_len;
  std::size_t k = 1;
  for (std::size_t size = patch_len; 2 * size <= total; size *= 2, ++k) {
    const std::size_t blocks = total / size;
    out.push_back({k, size, blocks, blocks - 1, total - blocks * size});
  }
  return out;
}

template <typename T>
PatchMixer<T>::PatchMixer(ParamStore<T>& store, const std::string& prefix, const MixerConfig& cfg, Rng& init_rng)
    : cfg_(cfg) {
  if (cfg.patch_len < 1) throw ParameterError("patch length must be >= 1");
  if (cfg.seq_len < 1) throw ParameterError("sequence length must be >= 1");
  if (cfg.mp_depth < 1) throw ConfigError("mp_depth must be >= 1");
  if (cfg.sp_hidden < 1) throw ConfigError("sp hidden width must be >= 1");
  num_patches_ = (cfg.seq_len + cfg.patch_len - 1) / cfg.patch_len;
  const std::size_t p = cfg.patch_len;
  sp1_ = Linear<T>(store, prefix + ".sp.fc1", p, cfg.sp_hidden, init_rng);
  sp2_ = Linear<T>(store, prefix + ".sp.fc2", cfg.sp_hidden, p, init_rng);
  if (!cfg.hierarchy) return;
  plan_ = plan_hierarchy(num_patches_, p);
  for (const auto& lv : plan_) {
    const std::string lp = prefix + ".level" + std::to_string(lv.level);
    std::vector<Linear<T>> layers;
    layers.emplace_back(store, lp + ".mp0", 2 * lv.block_size, lv.block_size, init_rng);
    for (std::size_t i = 1; i < cfg.mp_depth; ++i)
      layers.emplace_back(store, lp + ".mp" + std::to_string(i), lv.block_size, lv.block_size, init_rng);
    mp_.push_back(std::move(layers));
    gates_.push_back(store.add(lp + ".gate", {1}, {T(0)}));
  }
}

template <typename T>
PatchGrid<T> PatchMixer<T>::sp_mlp(const PatchGrid<T>& grid, bool training, Rng& rng) const {
  if (grid.patch_len() != cfg_.patch_len) {
    throw DimensionError("grid patch length " + std::to_string(grid.patch_len()) + " does not match mixer " +
                         std::to_string(cfg_.patch_len));
  }
  Tensor<T> h = dropout(gelu(sp1_(grid.data)), cfg_.dropout, training, rng);
  return {add(grid.data, sp2_(h)), grid.pad_len, grid.orig_len};
}

template <typename T>
Tensor<T> PatchMixer<T>::mp_mlp_pair(const Tensor<T>& q_i, const Tensor<T>& q_next, std::size_t level,
                                     bool training, Rng& rng) const {
  const auto& layers = mp_.at(level - 1);
  const std::size_t s = plan_.at(level - 1).block_size;
  if (q_i.shape() != q_next.shape() || q_i.dim(-1) != s) {
    throw DimensionError("pair blocks " + shape_str(q_i.shape()) + " and " + shape_str(q_next.shape()) +
                         " do not match block size " + std::to_string(s));
  }
  Tensor<T> h = concat<T>({q_i, q_next}, -1);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = dropout(gelu(h), cfg_.dropout, training, rng);
  }
  return h;
}

template <typename T>
Tensor<T> PatchMixer<T>::level_mix(const Tensor<T>& blocks, const Tensor<T>& relations, const Tensor<T>& alpha) {
  if (blocks.rank() < 2 || relations.rank() != blocks.rank()) {
    throw DimensionError("level_mix expects [..., B, S] blocks and relations");
  }
  const std::size_t b = blocks.dim(-2);
  if (b < 2 || relations.dim(-2) != b - 1 || relations.dim(-1) != blocks.dim(-1)) {
    throw ContractError("level_mix needs B >= 2 blocks and B - 1 relations, got " + shape_str(blocks.shape()) +
                        " and " + shape_str(relations.shape()));
  }
  Tensor<T> first = mul(slice(relations, -2, 0, 1), alpha);
  Tensor<T> rest = mul(relations, add_scalar(mul_scalar(alpha, T(-1)), T(1)));
  return add(blocks, concat<T>({first, rest}, -2));
}

template <typename T>
PatchGrid<T> PatchMixer<T>::hierarchy_forward(const PatchGrid<T>& grid, bool training, Rng& rng,
                                              std::size_t max_levels) const {
  if (grid.patch_len() != cfg_.patch_len || grid.num_patches() != num_patches_) {
    throw DimensionError("grid " + shape_str(grid.data.shape()) + " does not match the mixer layout");
  }
  if (!cfg_.hierarchy || plan_.empty() || max_levels == 0) return grid;
  const Shape lead(grid.data.shape().begin(), grid.data.shape().end() - 2);
  const std::size_t total = num_patches_ * cfg_.patch_len;
  Shape flat_shape = lead;
  flat_shape.push_back(total);
  Tensor<T> flat = reshape(grid.data, flat_shape);

  for (const auto& lv : plan_) {
    if (lv.level > max_levels) break;
    const std::size_t used = lv.blocks * lv.block_size;
    Shape bs = lead;
    bs.push_back(lv.blocks);
    bs.push_back(lv.block_size);
    Tensor<T> tail = lv.remainder ? slice(flat, -1, used, total) : Tensor<T>();
    Tensor<T> blocks = reshape(lv.remainder ? slice(flat, -1, 0, used) : flat, bs);
    Tensor<T> left = slice(blocks, -2, 0, lv.blocks - 1);
    Tensor<T> right = slice(blocks, -2, 1, lv.blocks);
    Tensor<T> rel = mp_mlp_pair(left, right, lv.level, training, rng);
    Tensor<T> mixed = level_mix(blocks, rel, sigmoid(gates_[lv.level - 1]));
    Shape us = lead;
    us.push_back(used);
    flat = reshape(mixed, us);
    if (lv.remainder) flat = concat<T>({flat, tail}, -1);
  }
  return {reshape(flat, grid.data.shape()), grid.pad_len, grid.orig_len};
}

template <typename T>
Tensor<T> PatchMixer<T>::forward(const Tensor<T>& x, bool training, Rng& rng) const {
  if (x.dim(-1) != cfg_.seq_len) {
    throw DimensionError("mixer expects length " + std::to_string(cfg_.seq_len) + ", got " + shape_str(x.shape()));
  }
  PatchGrid<T> grid = sp_mlp(patchify(x, cfg_.patch_len), training, rng);
  return unpatchify(hierarchy_forward(grid, training, rng));
}

template PatchGrid<float> patchify(const Tensor<float>&, std::size_t);
template PatchGrid<double> patchify(const Tensor<double>&, std::size_t);
template Tensor<float> unpatchify(const PatchGrid<float>&);
template Tensor<double> unpatchify(const PatchGrid<double>&);
template class PatchMixer<float>;
template class PatchMixer<double>;

}  // namespace npmixer
