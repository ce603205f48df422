// SPDX-License-Identifier: Apache-2.0
#include "npmixer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace npmixer {
namespace {

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(U));
  }
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void text32(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  std::string& buf() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}
  template <typename U>
  U pod() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, data_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  const char* at(std::size_t offset, std::size_t n) const {
    if (offset > data_.size() || n > data_.size() - offset) {
      throw IngestionError(source_ + ": checkpoint payload is truncated");
    }
    return data_.data() + offset;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw IngestionError(source_ + ": checkpoint is truncated");
  }
  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

struct Pending {
  std::string name;
  std::uint8_t dtype;
  Shape shape;
  std::string payload;
};

template <typename U>
Pending make_entry(const std::string& name, const Shape& shape, std::span<const U> values) {
  Pending p{name, static_cast<std::uint8_t>(sizeof(U) == 4 ? 1 : 2), shape, {}};
  p.payload.assign(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(U));
  return p;
}

std::string encode_meta(const std::map<std::string, std::string>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint metadata '" + k + "' contains a reserved character");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

}  // namespace

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw ConfigError("checkpoint has no entry '" + name + "'");
  return it->second;
}

template <typename T>
void save_checkpoint(const std::string& path, const NPMixer<T>& model, const std::string& config_ini,
                     const Standardizer& stats, const std::vector<std::string>& channels, const Adam<T>* optimizer,
                     const std::map<std::string, std::string>& extra_meta) {
  std::vector<Pending> items;
  for (const auto& p : model.params().all()) {
    items.push_back(make_entry<T>("param/" + p.name, p.tensor.shape(), p.tensor.data()));
  }
  std::map<std::string, std::string> meta = extra_meta;
  if (optimizer != nullptr) {
    for (const auto& s : optimizer->slots()) {
      items.push_back(make_entry<T>("adam.m/" + s.name, s.param.shape(), std::span<const T>(s.m)));
      items.push_back(make_entry<T>("adam.v/" + s.name, s.param.shape(), std::span<const T>(s.v)));
    }
    meta["adam.steps"] = std::to_string(optimizer->steps());
  }
  items.push_back(make_entry<double>("data.mean", {stats.mean.size()}, std::span<const double>(stats.mean)));
  items.push_back(make_entry<double>("data.stdev", {stats.stdev.size()}, std::span<const double>(stats.stdev)));
  std::string joined;
  for (const auto& c : channels) joined += (joined.empty() ? "" : ",") + c;
  meta["channels"] = joined;

  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.text32(config_ini);
  w.text32(encode_meta(meta));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(items.size()));
  std::uint64_t offset = 0;
  for (const auto& it : items) {
    w.pod<std::uint16_t>(static_cast<std::uint16_t>(it.name.size()));
    w.bytes(it.name.data(), it.name.size());
    w.pod<std::uint8_t>(it.dtype);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(it.shape.size()));
    for (std::size_t d : it.shape) w.pod<std::uint64_t>(d);
    w.pod<std::uint64_t>(offset);
    w.pod<std::uint64_t>(it.payload.size());
    offset += it.payload.size();
  }
  w.pod<std::uint64_t>(offset);
  for (const auto& it : items) w.bytes(it.payload.data(), it.payload.size());

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
    out.write(w.buf().data(), static_cast<std::streamsize>(w.buf().size()));
    if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("cannot move checkpoint into '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path);
  const std::string magic = r.text(sizeof kCheckpointMagic);
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw IngestionError(path + ": not an npmixer checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IngestionError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config_ini = r.text(r.pod<std::uint32_t>());
  std::istringstream meta(r.text(r.pod<std::uint32_t>()));
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  struct Slot {
    std::string name;
    CheckpointEntry e;
    std::uint64_t offset, nbytes;
  };
  std::vector<Slot> slots(r.pod<std::uint32_t>());
  for (auto& s : slots) {
    s.name = r.text(r.pod<std::uint16_t>());
    s.e.dtype = r.pod<std::uint8_t>();
    if (s.e.dtype != 1 && s.e.dtype != 2) throw IngestionError(path + ": entry '" + s.name + "' has unknown dtype");
    s.e.shape.resize(r.pod<std::uint8_t>());
    for (auto& d : s.e.shape) d = r.pod<std::uint64_t>();
    s.offset = r.pod<std::uint64_t>();
    s.nbytes = r.pod<std::uint64_t>();
    if (s.nbytes != shape_numel(s.e.shape) * (s.e.dtype == 1 ? 4 : 8)) {
      throw IngestionError(path + ": entry '" + s.name + "' size does not match its shape");
    }
  }
  const auto payload_size = r.pod<std::uint64_t>();
  const std::size_t base = r.pos();
  r.at(base, payload_size);
  for (auto& s : slots) {
    if (s.offset + s.nbytes > payload_size) throw IngestionError(path + ": entry '" + s.name + "' overruns payload");
    const char* p = r.at(base + s.offset, s.nbytes);
    const std::size_t n = shape_numel(s.e.shape);
    s.e.values.resize(n);
    if (s.e.dtype == 1) {
      std::vector<float> f(n);
      std::memcpy(f.data(), p, s.nbytes);
      std::copy(f.begin(), f.end(), s.e.values.begin());
    } else {
      std::memcpy(s.e.values.data(), p, s.nbytes);
    }
    ck.order.push_back(s.name);
    ck.entries[s.name] = std::move(s.e);
  }
  return ck;
}

template <typename T>
void load_parameters(const Checkpoint& ckpt, NPMixer<T>& model) {
  const std::uint8_t want = sizeof(T) == 4 ? 1 : 2;
  for (const auto& p : model.params().all()) {
    const std::string key = "param/" + p.name;
    if (!ckpt.has(key)) throw ConfigError("checkpoint does not match the configuration: missing parameter '" + p.name + "'");
    const auto& e = ckpt.entry(key);
    if (e.shape != p.tensor.shape()) {
      throw ConfigError("checkpoint does not match the configuration: parameter '" + p.name + "' has shape " +
                        shape_str(e.shape) + ", model expects " + shape_str(p.tensor.shape()));
    }
    if (e.dtype != want) throw ConfigError("checkpoint precision differs from the configured precision");
    auto dst = Tensor<T>(p.tensor).mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
  }
  std::size_t stored = 0;
  for (const auto& name : ckpt.order) stored += name.rfind("param/", 0) == 0;
  if (stored != model.params().all().size()) {
    throw ConfigError("checkpoint does not match the configuration: it holds " + std::to_string(stored) +
                      " parameter tensors, model has " + std::to_string(model.params().all().size()));
  }
}

template <typename T>
void load_optimizer(const Checkpoint& ckpt, Adam<T>& optimizer) {
  for (auto& s : optimizer.slots()) {
    if (!ckpt.has("adam.m/" + s.name)) return;
    const auto& m = ckpt.entry("adam.m/" + s.name).values;
    const auto& v = ckpt.entry("adam.v/" + s.name).values;
    if (m.size() != s.m.size()) throw ConfigError("optimizer state for '" + s.name + "' has the wrong size");
    for (std::size_t i = 0; i < m.size(); ++i) {
      s.m[i] = static_cast<T>(m[i]);
      s.v[i] = static_cast<T>(v[i]);
    }
  }
  auto it = ckpt.meta.find("adam.steps");
  if (it != ckpt.meta.end()) optimizer.set_steps(std::stoull(it->second));
}

Standardizer checkpoint_stats(const Checkpoint& ckpt) {
  return {ckpt.entry("data.mean").values, ckpt.entry("data.stdev").values};
}

std::vector<std::string> checkpoint_channels(const Checkpoint& ckpt) {
  std::vector<std::string> out;
  auto it = ckpt.meta.find("channels");
  if (it == ckpt.meta.end()) return out;
  std::istringstream is(it->second);
  for (std::string c; std::getline(is, c, ',');) out.push_back(c);
  return out;
}

template void save_checkpoint<float>(const std::string&, const NPMixer<float>&, const std::string&,
                                     const Standardizer&, const std::vector<std::string>&, const Adam<float>*,
                                     const std::map<std::string, std::string>&);
template void save_checkpoint<double>(const std::string&, const NPMixer<double>&, const std::string&,
                                      const Standardizer&, const std::vector<std::string>&, const Adam<double>*,
                                      const std::map<std::string, std::string>&);
template void load_parameters<float>(const Checkpoint&, NPMixer<float>&);
template void load_parameters<double>(const Checkpoint&, NPMixer<double>&);
template void load_optimizer<float>(const Checkpoint&, Adam<float>&);
template void load_optimizer<double>(const Checkpoint&, Adam<double>&);

}  // namespace npmixer
