// SPDX-License-Identifier: Apache-2.0
#include "npmixer/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace npmixer {
namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const auto comma = line.find(',', begin);
    std::string cell = line.substr(begin, comma == std::string::npos ? std::string::npos : comma - begin);
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  return out;
}

std::string row_tag(const std::string& source, std::size_t row) {
  return source + ": row " + std::to_string(row) + " (line " + std::to_string(row + 1) + ")";
}

}  // namespace

Series parse_csv(std::istream& in, const std::string& source, const std::string& date_column,
                 const std::vector<std::string>& channels) {
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(source + ": empty file, expected a header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split_row(line);

  auto column_of = [&](const std::string& name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t date_idx = date_column.empty() ? -1 : column_of(date_column);

  Series s;
  std::vector<std::size_t> cols;
  if (channels.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (static_cast<std::ptrdiff_t>(i) == date_idx) continue;
      cols.push_back(i);
      s.channels.push_back(header[i]);
    }
  } else {
    for (const auto& name : channels) {
      const auto idx = column_of(name);
      if (idx < 0) throw IngestionError(source + ": missing column '" + name + "' in header");
      cols.push_back(static_cast<std::size_t>(idx));
      s.channels.push_back(name);
    }
  }
  if (cols.empty()) throw IngestionError(source + ": no channel columns");

  std::vector<std::vector<double>> by_channel(cols.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw IngestionError(row_tag(source, row) + ": expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string& cell = cells[cols[c]];
      double v = 0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw IngestionError(row_tag(source, row) + ": non-numeric value '" + cell + "' in column '" +
                             s.channels[c] + "'");
      }
      by_channel[c].push_back(v);
    }
    if (date_idx >= 0) {
      const std::string& d = cells[static_cast<std::size_t>(date_idx)];
      if (!s.dates.empty() && !(s.dates.back() < d)) {
        throw IngestionError(row_tag(source, row) + ": date '" + d + "' does not follow '" + s.dates.back() + "'");
      }
      s.dates.push_back(d);
    }
  }
  s.steps = row;
  s.values.reserve(cols.size() * row);
  for (auto& ch : by_channel) s.values.insert(s.values.end(), ch.begin(), ch.end());
  return s;
}

Series load_csv(const std::string& path, const std::string& date_column, const std::vector<std::string>& channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open data file '" + path + "'");
  return parse_csv(in, path, date_column, channels);
}

namespace {

void check_split(const Series& series, std::size_t train, std::size_t val, std::size_t test) {
  if (train + val + test > series.steps) {
    throw ConfigError("split " + std::to_string(train) + "+" + std::to_string(val) + "+" + std::to_string(test) +
                      " exceeds the " + std::to_string(series.steps) + " available steps");
  }
  if (train == 0) throw ConfigError("train split is empty");
}

}  // namespace

DataSplits split_and_standardize(const Series& series, std::size_t train, std::size_t val, std::size_t test) {
  check_split(series, train, val, test);
  const std::size_t C = series.num_channels();
  Standardizer stats;
  stats.mean.resize(C);
  stats.stdev.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0;
    for (std::size_t t = 0; t < train; ++t) sum += series.at(c, t);
    const double mean = sum / static_cast<double>(train);
    double ss = 0;
    for (std::size_t t = 0; t < train; ++t) ss += (series.at(c, t) - mean) * (series.at(c, t) - mean);
    stats.mean[c] = mean;
    stats.stdev[c] = std::max(std::sqrt(ss / static_cast<double>(train)), 1e-8);
  }
  return split_with_stats(series, train, val, test, stats);
}

DataSplits split_with_stats(const Series& series, std::size_t train, std::size_t val, std::size_t test,
                            const Standardizer& stats) {
  check_split(series, train, val, test);
  const std::size_t C = series.num_channels();
  if (stats.mean.size() != C || stats.stdev.size() != C) {
    throw ConfigError("standardization statistics cover " + std::to_string(stats.mean.size()) + " channels, data has " +
                      std::to_string(C));
  }
  DataSplits out;
  out.stats = stats;
  auto cut = [&](std::size_t begin, std::size_t len) {
    SplitSeries s;
    s.channels = C;
    s.steps = len;
    s.values.resize(C * len);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t t = 0; t < len; ++t) s.values[c * len + t] = out.stats.apply(c, series.at(c, begin + t));
    }
    return s;
  };
  out.train = cut(0, train);
  out.val = cut(train, val);
  out.test = cut(train + val, test);
  return out;
}

std::size_t window_count(std::size_t len, std::size_t lookback, std::size_t horizon) {
  return len >= lookback + horizon ? len - lookback - horizon + 1 : 0;
}

std::vector<std::size_t> window_starts(std::size_t len, std::size_t lookback, std::size_t horizon, bool shuffle,
                                       Rng& rng) {
  const std::size_t n = window_count(len, lookback, horizon);
  if (n == 0) {
    throw ConfigError("split of " + std::to_string(len) + " steps is shorter than lookback+horizon = " +
                      std::to_string(lookback + horizon));
  }
  std::vector<std::size_t> starts(n);
  for (std::size_t i = 0; i < n; ++i) starts[i] = i;
  if (shuffle) std::shuffle(starts.begin(), starts.end(), rng);
  return starts;
}

template <typename T>
WindowIter<T>::WindowIter(const SplitSeries& split, std::size_t lookback, std::size_t horizon, bool shuffle,
                          std::uint64_t seed)
    : split_(&split), lookback_(lookback), horizon_(horizon) {
  Rng rng(seed);
  starts_ = window_starts(split.steps, lookback, horizon, shuffle, rng);
}

template <typename T>
WindowSample<T> WindowIter<T>::next() {
  if (done()) throw StateError("window iterator exhausted");
  const std::size_t s = starts_[pos_++];
  WindowSample<T> w;
  fill_batch<T>(*split_, std::span<const std::size_t>(&s, 1), lookback_, horizon_, w.input, w.target);
  w.input = reshape(w.input, {split_->channels, lookback_});
  w.target = reshape(w.target, {split_->channels, horizon_});
  w.start = s;
  return w;
}

template <typename T>
void fill_batch(const SplitSeries& split, std::span<const std::size_t> starts, std::size_t lookback,
                std::size_t horizon, Tensor<T>& input, Tensor<T>& target) {
  const std::size_t B = starts.size();
  const std::size_t C = split.channels;
  std::vector<T> x(B * C * lookback);
  std::vector<T> y(B * C * horizon);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t s = starts[b];
    if (s + lookback + horizon > split.steps) throw DimensionError("window start " + std::to_string(s) + " out of range");
    for (std::size_t c = 0; c < C; ++c) {
      const double* row = split.values.data() + c * split.steps + s;
      std::transform(row, row + lookback, x.begin() + (b * C + c) * lookback, [](double v) { return T(v); });
      std::transform(row + lookback, row + lookback + horizon, y.begin() + (b * C + c) * horizon,
                     [](double v) { return T(v); });
    }
  }
  input = Tensor<T>({B, C, lookback}, std::move(x));
  target = Tensor<T>({B, C, horizon}, std::move(y));
}

Series synthetic_sinusoids(std::size_t channels, std::size_t steps, std::uint64_t seed) {
  static const double periods[] = {24.0, 12.0, 48.0, 8.0, 96.0, 16.0, 32.0};
  Rng rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  Series s;
  s.steps = steps;
  s.values.resize(channels * steps);
  for (std::size_t c = 0; c < channels; ++c) {
    s.channels.push_back("s" + std::to_string(c));
    // Two components per channel with different periods.
    const double p1 = periods[c % 7], p2 = periods[(c + 3) % 7];
    const double a1 = amp(rng), a2 = amp(rng) * 0.5, f1 = phase(rng), f2 = phase(rng);
    for (std::size_t t = 0; t < steps; ++t) {
      const double tt = static_cast<double>(t);
      s.values[c * steps + t] = a1 * std::sin(2.0 * std::numbers::pi * tt / p1 + f1) +
                                a2 * std::sin(2.0 * std::numbers::pi * tt / p2 + f2);
    }
  }
  return s;
}

template class WindowIter<float>;
template class WindowIter<double>;
template void fill_batch<float>(const SplitSeries&, std::span<const std::size_t>, std::size_t, std::size_t,
                                Tensor<float>&, Tensor<float>&);
template void fill_batch<double>(const SplitSeries&, std::span<const std::size_t>, std::size_t, std::size_t,
                                 Tensor<double>&, Tensor<double>&);

}  // namespace npmixer
