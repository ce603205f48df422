// SPDX-License-Identifier: Apache-2.0
// CSV ingestion, chronological splits, standardization and window sampling.
#pragma once

#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "npmixer/errors.hpp"
#include "npmixer/tensor.hpp"

namespace npmixer {

/// Raw multivariate series, channel-major: values[c * steps + t].
struct Series {
  std::vector<std::string> channels;
  std::vector<std::string> dates;  // empty when the file has no date column
  std::size_t steps = 0;
  std::vector<double> values;

  std::size_t num_channels() const { return channels.size(); }
  double at(std::size_t c, std::size_t t) const { return values[c * steps + t]; }
};

/// Reads a header-row CSV. `channels` empty selects every column except the
/// date column, in file order. Rows are numbered from 1 for the first data
/// row; errors name that row. A present date column must increase strictly
/// (compared as ISO-8601 text).
Series parse_csv(std::istream& in, const std::string& source, const std::string& date_column,
                 const std::vector<std::string>& channels = {});
Series load_csv(const std::string& path, const std::string& date_column,
                const std::vector<std::string>& channels = {});

/// One standardized split, channel-major like Series.
struct SplitSeries {
  std::size_t channels = 0;
  std::size_t steps = 0;
  std::vector<double> values;

  double at(std::size_t c, std::size_t t) const { return values[c * steps + t]; }
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stdev;  // population std, floored at 1e-8

  double apply(std::size_t c, double v) const { return (v - mean[c]) / stdev[c]; }
  double invert(std::size_t c, double z) const { return z * stdev[c] + mean[c]; }
};

struct DataSplits {
  SplitSeries train, val, test;
  Standardizer stats;
};

/// First `train` steps, then `val`, then `test`; any remainder is dropped.
/// Statistics come from the train split only. Throws ConfigError on overflow
/// or an empty train split.
DataSplits split_and_standardize(const Series& series, std::size_t train, std::size_t val, std::size_t test);
/// Same cut, standardized with previously computed statistics.
DataSplits split_with_stats(const Series& series, std::size_t train, std::size_t val, std::size_t test,
                            const Standardizer& stats);

/// Number of (L, H) windows in a split of `len` steps; 0 when too short.
std::size_t window_count(std::size_t len, std::size_t lookback, std::size_t horizon);

/// Every valid start index, ascending, or permuted by `rng` when shuffling.
/// Throws ConfigError when the split holds no window.
std::vector<std::size_t> window_starts(std::size_t len, std::size_t lookback, std::size_t horizon, bool shuffle,
                                       Rng& rng);

template <typename T>
struct WindowSample {
  Tensor<T> input;   // [C, L]
  Tensor<T> target;  // [C, H]
  std::size_t start = 0;
};

/// Pull-style iterator over the windows of one split.
template <typename T>
class WindowIter {
 public:
  WindowIter(const SplitSeries& split, std::size_t lookback, std::size_t horizon, bool shuffle, std::uint64_t seed);

  bool done() const { return pos_ >= starts_.size(); }
  WindowSample<T> next();
  std::size_t size() const { return starts_.size(); }
  const std::vector<std::size_t>& starts() const { return starts_; }

 private:
  const SplitSeries* split_;
  std::size_t lookback_, horizon_;
  std::vector<std::size_t> starts_;
  std::size_t pos_ = 0;
};

/// Copies the windows at `starts` into [B, C, L] inputs and [B, C, H] targets.
template <typename T>
void fill_batch(const SplitSeries& split, std::span<const std::size_t> starts, std::size_t lookback,
                std::size_t horizon, Tensor<T>& input, Tensor<T>& target);

/// Noiseless sum of sinusoids with per-channel periods, phases and amplitudes.
Series synthetic_sinusoids(std::size_t channels, std::size_t steps, std::uint64_t seed);

}  // namespace npmixer
