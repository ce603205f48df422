// SPDX-License-Identifier: Apache-2.0
// Non-overlapping patching and the hierarchical neighboring patch mixer.
#pragma once

#include <limits>
#include <string>
#include <vector>

#include "npmixer/nn.hpp"

namespace npmixer {

/// [..., C, N, P] view of a band with the tail zero-padded to a multiple of P.
template <typename T>
struct PatchGrid {
  Tensor<T> data;
  std::size_t pad_len = 0;
  std::size_t orig_len = 0;

  std::size_t num_patches() const { return data.dim(-2); }
  std::size_t patch_len() const { return data.dim(-1); }
};

template <typename T>
PatchGrid<T> patchify(const Tensor<T>& x, std::size_t patch_len);

/// Flattens the grid and drops the padded tail.
template <typename T>
Tensor<T> unpatchify(const PatchGrid<T>& grid);

struct LevelPlan {
  std::size_t level;       // 1-based
  std::size_t block_size;  // S_k = 2^(k-1) P
  std::size_t blocks;      // B_k = floor(N P / S_k)
  std::size_t pairs;       // B_k - 1
  std::size_t remainder;   // steps carried through untouched
};

/// floor(log2 N) levels; empty when N == 1.
std::vector<LevelPlan> plan_hierarchy(std::size_t num_patches, std::size_t patch_len);

struct MixerConfig {
  std::size_t seq_len = 0;
  std::size_t patch_len = 1;
  std::size_t sp_hidden = 1;
  std::size_t mp_depth = 2;
  double dropout = 0.0;
  bool hierarchy = true;
};

template <typename T>
class PatchMixer {
 public:
  PatchMixer(ParamStore<T>& store, const std::string& prefix, const MixerConfig& cfg, Rng& init_rng);

  /// Per-patch residual MLP, weights shared across patches and channels.
  PatchGrid<T> sp_mlp(const PatchGrid<T>& grid, bool training, Rng& rng) const;
  /// R = MP-MLP([q_i || q_next]) for blocks of length S_k at `level` (1-based).
  Tensor<T> mp_mlp_pair(const Tensor<T>& q_i, const Tensor<T>& q_next, std::size_t level, bool training,
                        Rng& rng) const;
  /// blocks [..., B, S], relations [..., B-1, S], alpha scalar tensor.
  static Tensor<T> level_mix(const Tensor<T>& blocks, const Tensor<T>& relations, const Tensor<T>& alpha);
  /// Runs at most `max_levels` levels of group-mix-dissolve.
  PatchGrid<T> hierarchy_forward(const PatchGrid<T>& grid, bool training, Rng& rng,
                                 std::size_t max_levels = std::numeric_limits<std::size_t>::max()) const;
  /// patchify -> sp_mlp -> hierarchy_forward -> unpatchify on [..., C, L].
  Tensor<T> forward(const Tensor<T>& x, bool training, Rng& rng) const;

  const MixerConfig& config() const { return cfg_; }
  const std::vector<LevelPlan>& plan() const { return plan_; }
  std::size_t num_patches() const { return num_patches_; }
  Tensor<T>& gate(std::size_t level) { return gates_.at(level - 1); }
  Linear<T>& sp_layer(std::size_t i) { return i == 0 ? sp1_ : sp2_; }
  std::vector<Linear<T>>& mp_layers(std::size_t level) { return mp_.at(level - 1); }

 private:
  MixerConfig cfg_;
  std::size_t num_patches_;
  std::vector<LevelPlan> plan_;
  Linear<T> sp1_, sp2_;
  std::vector<std::vector<Linear<T>>> mp_;
  std::vector<Tensor<T>> gates_;
};

}  // namespace npmixer
