// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "npmixer/config.hpp"

using namespace npmixer;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("npmixer_cfg_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("table-style keys map onto the typed configs") {
  const auto doc = IniDocument::parse(
      "# ETTh1 row\n"
      "[model]\n"
      "d_model = 128\n"
      "d_ff = 512\n"
      "e_layers = 4\n"
      "dropout = 0.58\n"
      "J = 1\n"
      "wavelet = sym4\n"
      "patch = 24\n"
      "horizon = 720\n"
      "[train]\n"
      "lr = 1.70e-3\n"
      "batch = 256\n"
      "seed = 7\n"
      "[data]\n"
      "path = x.csv\n"
      "split = 10,5,5\n",
      "row.ini");
  const RunConfig cfg = run_config_from(doc);
  CHECK(cfg.model.d_model == 128);
  CHECK(cfg.model.d_ff == 512);
  CHECK(cfg.model.e_layers == 4);
  CHECK(cfg.model.dropout == 0.58);
  CHECK(cfg.model.levels == 1);
  CHECK(cfg.model.wavelet == "sym4");
  CHECK(cfg.model.horizon == 720);
  CHECK(cfg.train.lr == 1.70e-3);
  CHECK(cfg.train.batch == 256);
  CHECK(cfg.train.seed == 7);
  CHECK(cfg.model.seed == 7);
  CHECK(cfg.data.train == 10);
  CHECK(cfg.data.test == 5);
  CHECK(cfg.train.epochs == 30);
  CHECK(cfg.train.patience == 5);
}

TEST_CASE("errors carry the source line") {
  const std::string text = "[model]\nd_model = 64\n\nd_ff = lots\n";
  const auto msg = error_of([&] { run_config_from(IniDocument::parse(text, "bad.ini")); });
  CHECK(msg.find("bad.ini:4") != std::string::npos);
  CHECK(msg.find("lots") != std::string::npos);

  const auto unknown = error_of([] { run_config_from(IniDocument::parse("[train]\nlr = 1\nmomentum = 0.9\n", "u.ini")); });
  CHECK(unknown.find("u.ini:3") != std::string::npos);
  CHECK(unknown.find("momentum") != std::string::npos);

  const auto section = error_of([] { run_config_from(IniDocument::parse("[optim]\nlr = 1\n", "s.ini")); });
  CHECK(section.find("s.ini:2") != std::string::npos);

  CHECK(error_of([] { IniDocument::parse("lr = 1\n", "a.ini"); }).find("a.ini:1") != std::string::npos);
  CHECK(error_of([] { IniDocument::parse("[model]\nnonsense\n", "b.ini"); }).find("b.ini:2") != std::string::npos);
  CHECK(error_of([] { IniDocument::parse("[model]\nJ=1\nJ=2\n", "c.ini"); }).find("c.ini:3") != std::string::npos);
  CHECK(error_of([] { IniDocument::parse("[model\n", "d.ini"); }).find("d.ini:1") != std::string::npos);
}

TEST_CASE("semantic validation rejects impossible values") {
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[model]\nwavelet = haar9\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[model]\nprecision = 16\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[train]\nbatch = 0\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[train]\nlr = -1\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[model]\ndropout = 1.5\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[model]\nd_model = -3\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[ablation]\nno_swt = maybe\n")), ConfigError);
  CHECK_THROWS_AS(run_config_from(IniDocument::parse("[data]\nsplit = 1,2\n")), ConfigError);
}

TEST_CASE("overrides replace file values and are validated") {
  auto doc = IniDocument::parse("[model]\nd_model = 64\n[train]\nlr = 0.1\n", "o.ini");
  doc.set_override("model.d_model=32");
  doc.set_override(" train.epochs = 3 ");
  doc.set_override("ablation.no_neighboring_mixer=true");
  const RunConfig cfg = run_config_from(doc);
  CHECK(cfg.model.d_model == 32);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.model.ablation.no_neighboring_mixer);

  CHECK_THROWS_AS(doc.set_override("d_model=4"), ConfigError);
  CHECK_THROWS_AS(doc.set_override("model.d_model"), ConfigError);
  doc.set_override("model.bogus=1");
  CHECK(error_of([&] { run_config_from(doc); }).find("override model.bogus") != std::string::npos);
}

TEST_CASE("canonical text round-trips exactly") {
  RunConfig cfg;
  cfg.model.d_model = 96;
  cfg.model.dropout = 0.1 + 0.2;  // not representable as a short decimal
  cfg.model.wavelet = "bior3.1";
  cfg.model.ablation.fixed_swt = true;
  cfg.train.lr = 3.0e-4 / 3.0;
  cfg.train.seed = 12345678901ULL;
  cfg.data.name = "ETTh1";
  cfg.data.path = "ETTh1.csv";
  cfg.data.channels = {"HUFL", "OT"};
  cfg.model.channels = 2;
  cfg.data.train = 100;
  cfg.data.val = 20;
  cfg.data.test = 20;
  const std::string text = to_ini(cfg);
  const RunConfig back = run_config_from(IniDocument::parse(text));
  CHECK(back.model.dropout == cfg.model.dropout);
  CHECK(back.train.lr == cfg.train.lr);
  CHECK(back.train.seed == cfg.train.seed);
  CHECK(back.model.ablation.fixed_swt);
  CHECK(back.data.channels == cfg.data.channels);
  CHECK(to_ini(back) == text);

  const ModelConfig m = model_from_ini(model_to_ini(cfg.model));
  CHECK(model_to_ini(m) == model_to_ini(cfg.model));
}

TEST_CASE("dataset registry supplies defaults that the config may override") {
  const auto dir = scratch_dir("registry");
  write_file(dir / "datasets.ini",
             "[ETTh1]\npath = ETTh1.csv\nsplit = 8545,2881,2881\n\n"
             "[toy]\npath = toy.csv\nchannels = a, b, c\nsplit = 50,10,10\n");
  write_file(dir / "run.ini", "[data]\ndataset = toy\nsplit = 60,5,5\n");
  const RunConfig cfg = load_run_config((dir / "run.ini").string());
  CHECK(cfg.data.name == "toy");
  CHECK(cfg.data.path == "toy.csv");
  CHECK(cfg.data.channels == std::vector<std::string>{"a", "b", "c"});
  CHECK(cfg.model.channels == 3);
  CHECK(cfg.data.train == 60);

  const auto reg = load_registry((dir / "datasets.ini").string());
  CHECK(reg.at("ETTh1").val == 2881);

  write_file(dir / "missing.ini", "[data]\ndataset = nope\n");
  CHECK(error_of([&] { load_run_config((dir / "missing.ini").string()); }).find("missing.ini:2") != std::string::npos);
}

TEST_CASE("relative data paths resolve against root") {
  DataConfig d;
  d.path = "a.csv";
  d.root = "/data";
  CHECK(d.resolved_path() == "/data/a.csv");
  d.path = "/abs/b.csv";
  CHECK(d.resolved_path() == "/abs/b.csv");
  d.path.clear();
  CHECK_THROWS_AS(d.resolved_path(), ConfigError);
}
