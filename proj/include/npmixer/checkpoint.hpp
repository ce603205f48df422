// SPDX-License-Identifier: Apache-2.0
// Binary checkpoint: run configuration, named tensors, optimizer state and
// the standardization statistics needed to forecast in original units.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "npmixer/data.hpp"
#include "npmixer/train.hpp"

namespace npmixer {

inline constexpr char kCheckpointMagic[8] = {'N', 'P', 'M', 'X', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::uint8_t dtype = 2;  // 1 = f32, 2 = f64
  Shape shape;
  std::vector<double> values;  // widened on read; f32 payloads round-trip exactly
};

struct Checkpoint {
  std::string config_ini;                   // to_ini of the run configuration
  std::map<std::string, std::string> meta;  // free-form key/value text
  std::vector<std::string> order;           // entry names in file order
  std::map<std::string, CheckpointEntry> entries;

  const CheckpointEntry& entry(const std::string& name) const;
  bool has(const std::string& name) const { return entries.count(name) > 0; }
};

/// Parameters are stored as "param/<name>", Adam moments as "adam.m/<name>"
/// and "adam.v/<name>", statistics as "data.mean" and "data.stdev".
template <typename T>
void save_checkpoint(const std::string& path, const NPMixer<T>& model, const std::string& config_ini,
                     const Standardizer& stats, const std::vector<std::string>& channels, const Adam<T>* optimizer,
                     const std::map<std::string, std::string>& extra_meta = {});

/// Throws IngestionError on a bad magic, unknown version or truncated file.
Checkpoint read_checkpoint(const std::string& path);

/// Copies parameters into `model`. Throws ConfigError when a name is missing
/// or a shape differs from the model built from the current configuration.
template <typename T>
void load_parameters(const Checkpoint& ckpt, NPMixer<T>& model);

/// Restores moment buffers and the step counter when present.
template <typename T>
void load_optimizer(const Checkpoint& ckpt, Adam<T>& optimizer);

Standardizer checkpoint_stats(const Checkpoint& ckpt);
std::vector<std::string> checkpoint_channels(const Checkpoint& ckpt);

}  // namespace npmixer
