// SPDX-License-Identifier: Apache-2.0
#include "npmixer/config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace npmixer {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Typed reads that name the config location on failure.
class Reader {
 public:
  Reader(const IniDocument& doc, std::string section) : doc_(doc), section_(std::move(section)) {}

  bool present(const std::string& key) const { return doc_.has(section_, key); }
  const std::string& raw(const std::string& key) const { return doc_.find(section_, key)->value; }

  void size(const std::string& key, std::size_t& out) const {
    if (!present(key)) return;
    const std::string& v = raw(key);
    std::size_t parsed = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) fail(key, "expected a non-negative integer");
    out = parsed;
  }
  void u64(const std::string& key, std::uint64_t& out) const {
    std::size_t v = out;
    size(key, v);
    out = v;
  }
  void real(const std::string& key, double& out) const {
    if (!present(key)) return;
    const std::string& v = raw(key);
    double parsed = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) fail(key, "expected a number");
    out = parsed;
  }
  void flag(const std::string& key, bool& out) const {
    if (!present(key)) return;
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
      out = true;
    } else if (v == "false" || v == "0" || v == "no" || v == "off") {
      out = false;
    } else {
      fail(key, "expected true or false");
    }
  }
  void text(const std::string& key, std::string& out) const {
    if (present(key)) out = raw(key);
  }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(doc_.where(section_, key) + ": " + msg + " (got '" + raw(key) + "')");
  }

  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, entry] : doc_.section(section_)) {
      if (!known.count(key)) throw ConfigError(doc_.where(section_, key) + ": unknown key '" + key + "' in [" + section_ + "]");
    }
  }

 private:
  const IniDocument& doc_;
  std::string section_;
};

const std::set<std::string> kModelKeys = {"lookback", "horizon", "channels", "patch", "J", "wavelet", "d_model",
                                          "d_ff", "e_layers", "n_heads", "dropout", "mp_depth", "precision"};
const std::set<std::string> kAblationKeys = {"no_swt", "fixed_swt", "no_neighboring_mixer", "no_channel_encoder"};
const std::set<std::string> kTrainKeys = {"lr", "batch", "epochs", "patience", "seed", "clip_norm",
                                          "max_train_batches", "out_dir"};
const std::set<std::string> kDataKeys = {"dataset", "registry", "name", "path", "root", "date_column", "channels",
                                         "split"};

void read_model(const IniDocument& doc, ModelConfig& m) {
  Reader r(doc, "model");
  r.reject_unknown(kModelKeys);
  r.size("lookback", m.lookback);
  r.size("horizon", m.horizon);
  r.size("channels", m.channels);
  r.size("patch", m.patch);
  r.size("J", m.levels);
  r.text("wavelet", m.wavelet);
  r.size("d_model", m.d_model);
  r.size("d_ff", m.d_ff);
  r.size("e_layers", m.e_layers);
  r.size("n_heads", m.n_heads);
  r.real("dropout", m.dropout);
  r.size("mp_depth", m.mp_depth);
  if (r.present("precision")) {
    std::size_t p = 0;
    r.size("precision", p);
    if (p != 32 && p != 64) r.fail("precision", "expected 32 or 64");
    m.precision = static_cast<int>(p);
  }
  if (r.present("wavelet")) {
    try {
      reference_filters(m.wavelet);
    } catch (const ConfigError& e) {
      r.fail("wavelet", e.what());
    }
  }
  Reader a(doc, "ablation");
  a.reject_unknown(kAblationKeys);
  a.flag("no_swt", m.ablation.no_swt);
  a.flag("fixed_swt", m.ablation.fixed_swt);
  a.flag("no_neighboring_mixer", m.ablation.no_neighboring_mixer);
  a.flag("no_channel_encoder", m.ablation.no_channel_encoder);
}

void read_data_keys(const Reader& r, DataConfig& d) {
  r.text("name", d.name);
  r.text("path", d.path);
  r.text("root", d.root);
  r.text("date_column", d.date_column);
  if (r.present("channels")) {
    const std::string v = r.raw("channels");
    d.channels = (v == "*") ? std::vector<std::string>{} : split_list(v);
  }
  if (r.present("split")) {
    auto parts = split_list(r.raw("split"));
    if (parts.size() != 3) r.fail("split", "expected three comma-separated sizes train,val,test");
    std::size_t* dst[3] = {&d.train, &d.val, &d.test};
    for (int i = 0; i < 3; ++i) {
      auto res = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), *dst[i]);
      if (res.ec != std::errc() || res.ptr != parts[i].data() + parts[i].size()) {
        r.fail("split", "expected three comma-separated sizes train,val,test");
      }
    }
  }
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

// --- IniDocument -------------------------------------------------------------

IniDocument IniDocument::parse(const std::string& text, const std::string& source) {
  IniDocument doc;
  doc.source_ = source;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (!doc.data_.count(section)) doc.order_.push_back(section);
      doc.data_[section];
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    }
    if (section.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": key outside of any [section]");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (doc.data_[section].count(key)) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "' in [" + section + "]");
    }
    doc.data_[section][key] = {trim(t.substr(eq + 1)), lineno};
  }
  return doc;
}

IniDocument IniDocument::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void IniDocument::set(const std::string& section, const std::string& key, const std::string& value, int line) {
  if (!data_.count(section)) order_.push_back(section);
  data_[section][key] = {value, line};
}

void IniDocument::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string lhs = eq == std::string::npos ? "" : trim(assignment.substr(0, eq));
  const auto dot = lhs.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot == 0 || dot + 1 == lhs.size()) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  set(lhs.substr(0, dot), lhs.substr(dot + 1), trim(assignment.substr(eq + 1)), 0);
}

bool IniDocument::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

const IniDocument::Entry* IniDocument::find(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  if (s == data_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

std::vector<std::string> IniDocument::sections() const { return order_; }

const std::map<std::string, IniDocument::Entry>& IniDocument::section(const std::string& name) const {
  static const std::map<std::string, Entry> empty;
  auto s = data_.find(name);
  return s == data_.end() ? empty : s->second;
}

std::string IniDocument::where(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (e == nullptr || e->line == 0) return "override " + section + "." + key;
  return source_ + ":" + std::to_string(e->line);
}

// --- typed configs -------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
}

std::string DataConfig::resolved_path() const {
  namespace fs = std::filesystem;
  if (path.empty()) throw ConfigError("no dataset path configured ([data] path or dataset)");
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  std::string base = root;
  if (base.empty()) {
    const char* env = std::getenv("NPMIXER_DATA_DIR");
    base = env ? env : ".";
  }
  return (fs::path(base) / p).string();
}

std::map<std::string, DataConfig> load_registry(const std::string& path) {
  const IniDocument doc = IniDocument::load(path);
  std::map<std::string, DataConfig> out;
  for (const auto& name : doc.sections()) {
    Reader r(doc, name);
    r.reject_unknown({"path", "date_column", "channels", "split", "root"});
    DataConfig d;
    d.name = name;
    read_data_keys(r, d);
    out[name] = d;
  }
  return out;
}

RunConfig run_config_from(const IniDocument& doc) {
  static const std::set<std::string> known = {"model", "train", "data", "ablation"};
  for (const auto& s : doc.sections()) {
    if (!known.count(s)) {
      const auto& entries = doc.section(s);
      const std::string loc = entries.empty() ? doc.source() : doc.where(s, entries.begin()->first);
      throw ConfigError(loc + ": unknown section [" + s + "]");
    }
  }
  RunConfig cfg;
  read_model(doc, cfg.model);

  Reader t(doc, "train");
  t.reject_unknown(kTrainKeys);
  t.real("lr", cfg.train.lr);
  t.size("batch", cfg.train.batch);
  t.size("epochs", cfg.train.epochs);
  t.size("patience", cfg.train.patience);
  t.u64("seed", cfg.train.seed);
  t.real("clip_norm", cfg.train.clip_norm);
  t.size("max_train_batches", cfg.train.max_train_batches);
  t.text("out_dir", cfg.out_dir);
  cfg.model.seed = cfg.train.seed;

  Reader d(doc, "data");
  d.reject_unknown(kDataKeys);
  if (d.present("dataset")) {
    const std::string name = d.raw("dataset");
    std::string registry = "datasets.ini";
    d.text("registry", registry);
    namespace fs = std::filesystem;
    const auto* anchor = doc.find("data", "registry") ? doc.find("data", "registry") : doc.find("data", "dataset");
    if (fs::path(registry).is_relative() && anchor->line > 0) {
      registry = (fs::path(doc.source()).parent_path() / registry).string();
    }
    const auto reg = load_registry(registry);
    auto it = reg.find(name);
    if (it == reg.end()) d.fail("dataset", "dataset not found in registry '" + registry + "'");
    cfg.data = it->second;
  }
  read_data_keys(d, cfg.data);
  if (cfg.data.name.empty()) cfg.data.name = d.present("dataset") ? d.raw("dataset") : "custom";
  if (!cfg.data.channels.empty() && !doc.has("model", "channels")) cfg.model.channels = cfg.data.channels.size();

  try {
    cfg.train.validate();
    cfg.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(doc.source() + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  IniDocument doc = IniDocument::load(path);
  for (const auto& o : overrides) doc.set_override(o);
  return run_config_from(doc);
}

std::string model_to_ini(const ModelConfig& m) {
  std::ostringstream os;
  os << "[model]\n";
  os << "lookback = " << m.lookback << "\n";
  os << "horizon = " << m.horizon << "\n";
  os << "channels = " << m.channels << "\n";
  os << "patch = " << m.patch << "\n";
  os << "J = " << m.levels << "\n";
  os << "wavelet = " << m.wavelet << "\n";
  os << "d_model = " << m.d_model << "\n";
  os << "d_ff = " << m.d_ff << "\n";
  os << "e_layers = " << m.e_layers << "\n";
  os << "n_heads = " << m.heads() << "\n";
  os << "dropout = " << fmt_double(m.dropout) << "\n";
  os << "mp_depth = " << m.mp_depth << "\n";
  os << "precision = " << m.precision << "\n";
  os << "\n[ablation]\n";
  os << "no_swt = " << (m.ablation.no_swt ? "true" : "false") << "\n";
  os << "fixed_swt = " << (m.ablation.fixed_swt ? "true" : "false") << "\n";
  os << "no_neighboring_mixer = " << (m.ablation.no_neighboring_mixer ? "true" : "false") << "\n";
  os << "no_channel_encoder = " << (m.ablation.no_channel_encoder ? "true" : "false") << "\n";
  return os.str();
}

ModelConfig model_from_ini(const std::string& text) {
  const IniDocument doc = IniDocument::parse(text, "<checkpoint config>");
  ModelConfig m;
  read_model(doc, m);
  return m;
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  os << model_to_ini(cfg.model);
  os << "\n[train]\n";
  os << "lr = " << fmt_double(cfg.train.lr) << "\n";
  os << "batch = " << cfg.train.batch << "\n";
  os << "epochs = " << cfg.train.epochs << "\n";
  os << "patience = " << cfg.train.patience << "\n";
  os << "seed = " << cfg.train.seed << "\n";
  os << "clip_norm = " << fmt_double(cfg.train.clip_norm) << "\n";
  os << "max_train_batches = " << cfg.train.max_train_batches << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "\n[data]\n";
  os << "name = " << cfg.data.name << "\n";
  os << "path = " << cfg.data.path << "\n";
  if (!cfg.data.root.empty()) os << "root = " << cfg.data.root << "\n";
  os << "date_column = " << cfg.data.date_column << "\n";
  os << "channels = " << (cfg.data.channels.empty() ? "*" : join(cfg.data.channels)) << "\n";
  os << "split = " << cfg.data.train << "," << cfg.data.val << "," << cfg.data.test << "\n";
  return os.str();
}

}  // namespace npmixer
