// SPDX-License-Identifier: Apache-2.0
// Sectioned key = value configuration files.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "npmixer/model.hpp"

namespace npmixer {

/// Parsed INI text. Keys are kept with the line they came from so later
/// validation errors can point at the offending line.
class IniDocument {
 public:
  struct Entry {
    std::string value;
    int line = 0;  // 0 for values injected by overrides
  };

  /// Throws ConfigError("<source>:<line>: ...") on malformed lines.
  static IniDocument parse(const std::string& text, const std::string& source = "<config>");
  static IniDocument load(const std::string& path);

  /// Applies "section.key=value". Throws ConfigError on bad syntax.
  void set_override(const std::string& assignment);
  void set(const std::string& section, const std::string& key, const std::string& value, int line = 0);

  bool has(const std::string& section, const std::string& key) const;
  const Entry* find(const std::string& section, const std::string& key) const;
  std::vector<std::string> sections() const;
  const std::map<std::string, Entry>& section(const std::string& name) const;
  const std::string& source() const { return source_; }

  /// "source:line: message" for a key, or "override section.key: message".
  std::string where(const std::string& section, const std::string& key) const;

 private:
  std::string source_;
  std::vector<std::string> order_;
  std::map<std::string, std::map<std::string, Entry>> data_;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // 0 disables clipping
  std::size_t max_train_batches = 0;  // 0 means every batch of the epoch

  void validate() const;
};

struct DataConfig {
  std::string name;                   // dataset label used in reports
  std::string path;                   // CSV path; relative paths resolve against root
  std::string root;                   // defaults to $NPMIXER_DATA_DIR, else "."
  std::string date_column = "date";
  std::vector<std::string> channels;  // empty means every non-date column
  std::size_t train = 0, val = 0, test = 0;

  /// Full path after root resolution.
  std::string resolved_path() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string out_dir = "out";
};

/// Builds a RunConfig from a document, rejecting unknown sections and keys.
/// A [data] `dataset = NAME` entry pulls defaults from the registry file named
/// by `registry` (resolved next to the config file).
RunConfig run_config_from(const IniDocument& doc);

/// Loads a config file, applies overrides, and converts it.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Canonical text of the full run configuration (stable key order).
std::string to_ini(const RunConfig& cfg);
/// Canonical text of the [model] and [ablation] sections only.
std::string model_to_ini(const ModelConfig& cfg);
/// Inverse of model_to_ini.
ModelConfig model_from_ini(const std::string& text);

/// Named dataset entries from a registry file.
std::map<std::string, DataConfig> load_registry(const std::string& path);

}  // namespace npmixer
