// SPDX-License-Identifier: Apache-2.0
// npmixer command-line entry point: train, eval, forecast, ablate, inspect.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "npmixer/checkpoint.hpp"
#include "npmixer/config.hpp"
#include "npmixer/svg.hpp"

namespace fs = std::filesystem;
using namespace npmixer;

namespace {

constexpr int kExitUser = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool svg = false;
  std::size_t batch = 1;
  std::string checkpoint;
  std::string input;
  std::string split = "test";
  std::string variants = "full,no_swt,fixed_swt,no_neighboring_mixer,no_channel_encoder";
  std::string seeds = "1,2,3";
};

struct Loaded {
  RunConfig run;
  bool channels_explicit = false;
};

Loaded load_config(const Options& o) {
  IniDocument doc = IniDocument::load(o.config);
  for (const auto& s : o.overrides) doc.set_override(s);
  Loaded l{run_config_from(doc), doc.has("model", "channels")};
  if (o.seed_set) {
    l.run.train.seed = o.seed;
    l.run.model.seed = o.seed;
  }
  if (!o.out.empty()) l.run.out_dir = o.out;
  return l;
}

Series load_series(const RunConfig& run) {
  return load_csv(run.data.resolved_path(), run.data.date_column, run.data.channels);
}

void bind_channels(Loaded& l, const Series& s) {
  if (l.channels_explicit && l.run.model.channels != s.num_channels()) {
    throw ConfigError("model.channels = " + std::to_string(l.run.model.channels) + " but the data has " +
                      std::to_string(s.num_channels()) + " channels");
  }
  l.run.model.channels = s.num_channels();
  l.run.model.validate();
}

void require_split(const RunConfig& run) {
  if (run.data.train == 0) throw ConfigError("[data] split = train,val,test is required");
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string item; std::getline(is, item, ',');) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string metrics_line(const RunConfig& run, const Metrics& m) {
  return run.data.name + "," + std::to_string(run.model.horizon) + "," + std::to_string(run.train.seed) + "," +
         format_double(m.mse) + "," + format_double(m.mae);
}

struct TrainOutcome {
  Metrics test;
  TrainResult result;
};

template <typename T>
TrainOutcome train_and_test(const RunConfig& run, const DataSplits& data, const std::vector<std::string>& channels,
                            const std::string& out_dir, bool verbose) {
  NPMixer<T> model = build_variant<T>(run.model);
  Adam<T> adam(model.params(), run.train.lr);
  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
  write_train_log(log_path, {});
  TrainOutcome o;
  o.result = train_run(model, adam, data, run.train, [&](const EpochLog& e) {
    std::ofstream(log_path, std::ios::app) << e.epoch << ',' << format_double(e.train_loss) << ','
                                           << format_double(e.val_mse) << ',' << format_double(e.val_mae) << ','
                                           << format_double(e.seconds) << '\n';
    if (verbose) {
      std::fprintf(stderr, "epoch %zu  train_loss %.6f  val_mse %.6f  val_mae %.6f  (%.1fs)\n", e.epoch, e.train_loss,
                   e.val_mse, e.val_mae, e.seconds);
    }
  });
  save_checkpoint((fs::path(out_dir) / "checkpoint.npmx").string(), model, to_ini(run), data.stats, channels, &adam,
                  {{"best_epoch", std::to_string(o.result.best_epoch)}});
  o.test = evaluate(model, data.test);
  return o;
}

TrainOutcome dispatch_train(const RunConfig& run, const DataSplits& data, const std::vector<std::string>& channels,
                            const std::string& out_dir, bool verbose) {
  return run.model.precision == 32 ? train_and_test<float>(run, data, channels, out_dir, verbose)
                                   : train_and_test<double>(run, data, channels, out_dir, verbose);
}

int cmd_train(const Options& o) {
  Loaded l = load_config(o);
  require_split(l.run);
  const Series series = load_series(l.run);
  bind_channels(l, series);
  const DataSplits data = split_and_standardize(series, l.run.data.train, l.run.data.val, l.run.data.test);
  fs::create_directories(l.run.out_dir);
  std::ofstream(fs::path(l.run.out_dir) / "effective_config.ini") << to_ini(l.run);
  const TrainOutcome out = dispatch_train(l.run, data, series.channels, l.run.out_dir, true);
  const std::string metrics = (fs::path(l.run.out_dir) / "metrics.csv").string();
  append_metrics_row(metrics, l.run.data.name, l.run.model.horizon, l.run.train.seed, out.test);
  std::cout << "dataset,horizon,seed,mse,mae\n" << metrics_line(l.run, out.test) << "\n";
  return 0;
}

RunConfig checkpoint_run(const Options& o, const Checkpoint& ck, bool& channels_explicit) {
  if (!o.config.empty()) {
    Loaded l = load_config(o);
    channels_explicit = l.channels_explicit;
    return l.run;
  }
  IniDocument doc = IniDocument::parse(ck.config_ini, o.checkpoint + " (embedded config)");
  for (const auto& s : o.overrides) doc.set_override(s);
  RunConfig run = run_config_from(doc);
  if (o.seed_set) run.train.seed = o.seed;
  channels_explicit = true;
  return run;
}

template <typename T>
Metrics eval_with(const RunConfig& run, const Checkpoint& ck, const DataSplits& data, const std::string& split,
                  std::size_t batch) {
  NPMixer<T> model = build_variant<T>(run.model);
  load_parameters(ck, model);
  const SplitSeries& s = split == "train" ? data.train : split == "val" ? data.val : data.test;
  return evaluate(model, s, batch);
}

int cmd_eval(const Options& o) {
  const Checkpoint ck = read_checkpoint(o.checkpoint);
  bool explicit_channels = false;
  RunConfig run = checkpoint_run(o, ck, explicit_channels);
  require_split(run);
  const Series series = load_series(run);
  Loaded l{run, explicit_channels};
  bind_channels(l, series);
  run = l.run;
  if (checkpoint_channels(ck) != series.channels) {
    throw ConfigError("data channels do not match the channels the checkpoint was trained on");
  }
  const DataSplits data = split_with_stats(series, run.data.train, run.data.val, run.data.test, checkpoint_stats(ck));
  const std::size_t batch = o.batch > 1 ? o.batch : 256;
  const Metrics m = run.model.precision == 32 ? eval_with<float>(run, ck, data, o.split, batch)
                                              : eval_with<double>(run, ck, data, o.split, batch);
  const fs::path out_dir = o.out.empty() ? fs::path(o.checkpoint).parent_path() : fs::path(o.out);
  if (!out_dir.empty()) fs::create_directories(out_dir);
  append_metrics_row((out_dir / ("eval_" + o.split + ".csv")).string(), run.data.name, run.model.horizon,
                     run.train.seed, m);
  std::cout << "dataset,horizon,seed,mse,mae\n" << metrics_line(run, m) << "\n";
  return 0;
}

template <typename T>
std::vector<std::vector<double>> forecast_with(const RunConfig& run, const Checkpoint& ck,
                                               const std::vector<std::vector<double>>& window) {
  NPMixer<T> model = build_variant<T>(run.model);
  load_parameters(ck, model);
  const std::size_t C = window.size(), L = run.model.lookback, H = run.model.horizon;
  std::vector<T> x(C * L);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < L; ++t) x[c * L + t] = static_cast<T>(window[c][t]);
  const Tensor<T> y = model.forward(Tensor<T>({C, L}, std::move(x)), false);
  std::vector<std::vector<double>> out(C, std::vector<double>(H));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t h = 0; h < H; ++h) out[c][h] = static_cast<double>(y.data()[c * H + h]);
  return out;
}

int cmd_forecast(const Options& o) {
  const Checkpoint ck = read_checkpoint(o.checkpoint);
  bool explicit_channels = false;
  const RunConfig run = checkpoint_run(o, ck, explicit_channels);
  const auto channels = checkpoint_channels(ck);
  const Standardizer stats = checkpoint_stats(ck);
  const Series in = load_csv(o.input, run.data.date_column, channels);
  if (in.steps != run.model.lookback) {
    throw ConfigError(o.input + ": forecast input needs exactly L = " + std::to_string(run.model.lookback) +
                      " rows, got " + std::to_string(in.steps));
  }
  std::vector<std::vector<double>> raw(channels.size()), z(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c) {
    for (std::size_t t = 0; t < in.steps; ++t) {
      raw[c].push_back(in.at(c, t));
      z[c].push_back(stats.apply(c, in.at(c, t)));
    }
  }
  auto pred = run.model.precision == 32 ? forecast_with<float>(run, ck, z) : forecast_with<double>(run, ck, z);
  for (std::size_t c = 0; c < pred.size(); ++c)
    for (double& v : pred[c]) v = stats.invert(c, v);

  const std::string out_path = o.out.empty() ? "forecast.csv" : o.out;
  if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot write forecast '" + out_path + "'");
  out << "step";
  for (const auto& c : channels) out << ',' << c;
  out << '\n';
  for (std::size_t h = 0; h < run.model.horizon; ++h) {
    out << h + 1;
    for (std::size_t c = 0; c < channels.size(); ++c) out << ',' << format_double(pred[c][h]);
    out << '\n';
  }
  if (o.svg) {
    const std::string svg_path = fs::path(out_path).replace_extension(".svg").string();
    std::ofstream(svg_path) << forecast_svg(channels, raw, pred);
  }
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_ablate(const Options& o) {
  const std::vector<std::string> variants = parse_list(o.variants);
  std::set<std::string> seen;
  for (const auto& v : variants) {
    if (!seen.insert(v).second) throw ConfigError("variant '" + v + "' listed twice");
    apply_variant(ModelConfig{}, v);
  }
  std::vector<std::uint64_t> seeds;
  for (const auto& s : parse_list(o.seeds)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("seed '" + s + "' is not a non-negative integer");
    }
  }
  if (variants.empty() || seeds.empty()) throw ConfigError("ablate needs at least one variant and one seed");

  Loaded base = load_config(o);
  require_split(base.run);
  const Series series = load_series(base.run);
  bind_channels(base, series);
  const DataSplits data = split_and_standardize(series, base.run.data.train, base.run.data.val, base.run.data.test);
  const fs::path out_dir = base.run.out_dir;
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "effective_config.ini") << to_ini(base.run);

  std::ofstream runs(out_dir / "ablation_runs.csv");
  runs << "variant,dataset,horizon,seed,mse,mae\n";
  std::ostringstream table;
  table << "variant,dataset,horizon,runs,mse,mae\n";
  for (const auto& v : variants) {
    double mse = 0, mae = 0;
    for (std::uint64_t seed : seeds) {
      RunConfig run = base.run;
      run.model = apply_variant(run.model, v);
      run.model.seed = seed;
      run.train.seed = seed;
      const auto dir = (out_dir / "runs" / (v + "_seed" + std::to_string(seed))).string();
      std::fprintf(stderr, "[%s seed %llu]\n", v.c_str(), static_cast<unsigned long long>(seed));
      const TrainOutcome r = dispatch_train(run, data, series.channels, dir, true);
      runs << v << ',' << run.data.name << ',' << run.model.horizon << ',' << seed << ',' << format_double(r.test.mse)
           << ',' << format_double(r.test.mae) << '\n';
      runs.flush();
      mse += r.test.mse;
      mae += r.test.mae;
    }
    const double n = static_cast<double>(seeds.size());
    table << v << ',' << base.run.data.name << ',' << base.run.model.horizon << ',' << seeds.size() << ','
          << format_double(mse / n) << ',' << format_double(mae / n) << '\n';
  }
  std::ofstream(out_dir / "ablation.csv") << table.str();
  std::cout << table.str();
  return 0;
}

int cmd_inspect(const Options& o) {
  Loaded l = load_config(o);
  const ModelStats s = count_params_flops(l.run.model, o.batch);
  char gflops[64];
  std::snprintf(gflops, sizeof gflops, "%.6f", static_cast<double>(s.flops) * 1e-9);
  std::cout << "params," << s.param_count << "\n";
  std::cout << "batch," << o.batch << "\n";
  std::cout << "flops," << s.flops << "\n";
  std::cout << "gflops," << gflops << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NPMixer: wavelet patch mixer for multivariate forecasting"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", o.config, "run configuration file");
    if (required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "override section.key=value (repeatable)");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { o.seed = s, o.seed_set = true; }, "training seed");
  };

  auto* train = app.add_subcommand("train", "train a model and write checkpoint, log and metrics");
  add_config(train, true);
  train->add_option("--out", o.out, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_config(eval, false);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--out", o.out, "directory for the metrics CSV");
  eval->add_option("--batch", o.batch, "evaluation batch size")->check(CLI::PositiveNumber);

  auto* forecast = app.add_subcommand("forecast", "forecast H steps from an L-row CSV window");
  add_config(forecast, false);
  forecast->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  forecast->add_option("--input", o.input, "CSV window with exactly L rows")->required();
  forecast->add_option("--out", o.out, "forecast CSV path");
  forecast->add_flag("--svg", o.svg, "also write an SVG plot next to the CSV");

  auto* ablate = app.add_subcommand("ablate", "train every variant for every seed and average");
  add_config(ablate, true);
  ablate->add_option("--variants", o.variants, "comma-separated variant names");
  ablate->add_option("--seeds", o.seeds, "comma-separated seeds");
  ablate->add_option("--out", o.out, "output directory");

  auto* inspect = app.add_subcommand("inspect", "parameter count and forward FLOPs");
  add_config(inspect, true);
  inspect->add_option("--batch", o.batch, "batch size for the FLOP count")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUser;
  }

  try {
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*forecast) return cmd_forecast(o);
    if (*ablate) return cmd_ablate(o);
    if (*inspect) return cmd_inspect(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUser;
  }
  return kExitUser;
}
