#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "wiflow/tensor.hpp"

namespace wiflow {

// Ordered collection of named tensors: learnable weights plus batch-norm
// running statistics. Insertion order is the serialization order, so two
// stores created by the same init path serialize identically.
template <typename S>
class ParameterStore {
 public:
  struct Entry {
    Tensor<S> tensor;
    bool trainable = true;
  };

  Tensor<S>& create(const std::string& name, Shape shape, bool trainable) {
    check(map_.find(name) == map_.end(), "duplicate parameter name: " + name);
    names_.push_back(name);
    auto& e = map_[name];
    e.tensor = Tensor<S>(std::move(shape));
    e.trainable = trainable;
    return e.tensor;
  }

  Tensor<S>& at(const std::string& name) {
    auto it = map_.find(name);
    check(it != map_.end(), "unknown parameter: " + name);
    return it->second.tensor;
  }
  const Tensor<S>& at(const std::string& name) const {
    auto it = map_.find(name);
    check(it != map_.end(), "unknown parameter: " + name);
    return it->second.tensor;
  }
  bool contains(const std::string& name) const { return map_.find(name) != map_.end(); }
  bool trainable(const std::string& name) const {
    auto it = map_.find(name);
    check(it != map_.end(), "unknown parameter: " + name);
    return it->second.trainable;
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::int64_t count_values(bool trainable_only) const {
    std::int64_t n = 0;
    for (const auto& name : names_) {
      const auto& e = map_.at(name);
      if (!trainable_only || e.trainable) n += e.tensor.size();
    }
    return n;
  }

  void set_requires_grad_on_trainable() {
    for (const auto& name : names_) {
      auto& e = map_.at(name);
      if (e.trainable) e.tensor.set_requires_grad(true);
    }
  }

  void zero_grads() {
    for (const auto& name : names_) map_.at(name).tensor.zero_grad();
  }

  template <typename S2>
  ParameterStore<S2> cast() const {
    ParameterStore<S2> out;
    for (const auto& name : names_) {
      const auto& e = map_.at(name);
      Tensor<S2>& t = out.create(name, e.tensor.shape(), e.trainable);
      for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S2>(e.tensor[i]);
    }
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Entry> map_;
};

// ------------------------------------------------------------- checkpointing
//
// Self-describing container: magic, version tag, config echo (JSON text),
// seed, then each entry with its name, trainable flag, dims and values.
// All lengths are 64-bit little-endian; values are 32-bit little-endian
// IEEE floats, so a save/load round trip is bit-exact.

namespace ckpt {

constexpr char kMagic[8] = {'W', 'I', 'F', 'L', 'O', 'W', 'C', 'K'};
constexpr std::uint64_t kVersion = 1;

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  check(static_cast<bool>(is), "checkpoint truncated while reading length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline float get_f32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(static_cast<bool>(is), "checkpoint truncated while reading values");
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace ckpt

struct Checkpoint {
  std::string config_json;
  std::uint64_t seed = 0;
  ParameterStore<float> params;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  check(static_cast<bool>(os), "cannot open checkpoint for writing: " + path);
  os.write(ckpt::kMagic, 8);
  ckpt::put_u64(os, ckpt::kVersion);
  ckpt::put_u64(os, ck.config_json.size());
  os.write(ck.config_json.data(), static_cast<std::streamsize>(ck.config_json.size()));
  ckpt::put_u64(os, ck.seed);
  ckpt::put_u64(os, ck.params.size());
  for (const auto& name : ck.params.names()) {
    const Tensor<float>& t = ck.params.at(name);
    ckpt::put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const char trainable = ck.params.trainable(name) ? 1 : 0;
    os.write(&trainable, 1);
    ckpt::put_u64(os, static_cast<std::uint64_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) ckpt::put_u64(os, static_cast<std::uint64_t>(t.dim(i)));
    ckpt::put_u64(os, static_cast<std::uint64_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) ckpt::put_f32(os, t[i]);
  }
  check(static_cast<bool>(os), "write failure on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(static_cast<bool>(is), "cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  check(static_cast<bool>(is) && std::memcmp(magic, ckpt::kMagic, 8) == 0,
        "not a checkpoint file: " + path);
  const std::uint64_t version = ckpt::get_u64(is);
  check(version == ckpt::kVersion,
        "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::uint64_t cfg_len = ckpt::get_u64(is);
  ck.config_json.resize(cfg_len);
  is.read(ck.config_json.data(), static_cast<std::streamsize>(cfg_len));
  check(static_cast<bool>(is), "checkpoint truncated in config echo");
  ck.seed = ckpt::get_u64(is);
  const std::uint64_t n_entries = ckpt::get_u64(is);
  for (std::uint64_t e = 0; e < n_entries; ++e) {
    const std::uint64_t name_len = ckpt::get_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    char trainable = 0;
    is.read(&trainable, 1);
    check(static_cast<bool>(is), "checkpoint truncated in entry header");
    const std::uint64_t rank = ckpt::get_u64(is);
    Shape shape(rank);
    for (std::uint64_t i = 0; i < rank; ++i)
      shape[i] = static_cast<std::int64_t>(ckpt::get_u64(is));
    const std::uint64_t len = ckpt::get_u64(is);
    check(static_cast<std::int64_t>(len) == numel(shape),
          "checkpoint entry " + name + " length disagrees with shape");
    Tensor<float>& t = ck.params.create(name, shape, trainable != 0);
    for (std::uint64_t i = 0; i < len; ++i) t[static_cast<std::int64_t>(i)] = ckpt::get_f32(is);
  }
  return ck;
}

}  // namespace wiflow
