#pragma once

#include <cstdint>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "pixelvol/ndiff/nn.hpp"
#include "pixelvol/util/fsio.hpp"

namespace pixelvol::ndiff {

// Checkpoint file: a plain-text manifest (one line per tensor: name, element
// type, shape, byte offset) terminated by a "data" line, followed by raw
// little-endian values. Round-trips are bit-exact.
//
//   PIXELVOL-CKPT 1
//   tensors <n>
//   <name> <f32|f64|u64|u8> <rank> <extent...> <offset>
//   data
//   <raw bytes>

struct TensorBlob {
  std::string name;
  std::string dtype;
  Shape shape;
  std::vector<char> bytes;
};

struct Checkpoint {
  std::vector<TensorBlob> tensors;

  const TensorBlob* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  bool has(const std::string& name) const { return find(name) != nullptr; }
};

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  if constexpr (std::is_same_v<T, double>) return "f64";
  if constexpr (std::is_same_v<T, uint64_t>) return "u64";
  if constexpr (std::is_same_v<T, uint8_t>) return "u8";
}

}  // namespace detail

template <typename T>
TensorBlob make_blob(const std::string& name, const Shape& shape, const std::vector<T>& values) {
  TensorBlob b;
  b.name = name;
  b.dtype = detail::dtype_name<T>();
  b.shape = shape;
  b.bytes.resize(values.size() * sizeof(T));
  std::memcpy(b.bytes.data(), values.data(), b.bytes.size());
  return b;
}

template <typename T>
TensorBlob make_blob(const std::string& name, const Array<T>& a) {
  return make_blob(name, a.shape(), a.to_vector());
}

inline TensorBlob make_text_blob(const std::string& name, const std::string& text) {
  std::vector<uint8_t> bytes(text.begin(), text.end());
  return make_blob(name, Shape{int64_t(bytes.size())}, bytes);
}

template <typename T>
std::vector<T> blob_values(const TensorBlob& b) {
  if (b.dtype != detail::dtype_name<T>())
    throw std::runtime_error("tensor " + b.name + " has element type " + b.dtype + ", expected " +
                             detail::dtype_name<T>());
  std::vector<T> out(b.bytes.size() / sizeof(T));
  std::memcpy(out.data(), b.bytes.data(), b.bytes.size());
  return out;
}

template <typename T>
Array<T> blob_array(const TensorBlob& b) {
  return Array<T>(b.shape, blob_values<T>(b));
}

inline std::string blob_text(const TensorBlob& b) {
  auto v = blob_values<uint8_t>(b);
  return std::string(v.begin(), v.end());
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::ostringstream header;
  header << "PIXELVOL-CKPT 1\n";
  header << "tensors " << ckpt.tensors.size() << "\n";
  size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    header << t.name << " " << t.dtype << " " << t.shape.size();
    for (auto d : t.shape) header << " " << d;
    header << " " << offset << "\n";
    offset += t.bytes.size();
  }
  header << "data\n";
  std::string out = header.str();
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) out.append(t.bytes.data(), t.bytes.size());
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "PIXELVOL-CKPT" || version != 1)
    throw std::runtime_error("not a checkpoint file (bad header)");
  std::string tok;
  size_t n = 0;
  in >> tok >> n;
  if (tok != "tensors") throw std::runtime_error("malformed checkpoint manifest");
  struct Rec {
    std::string name, dtype;
    Shape shape;
    size_t offset;
  };
  std::vector<Rec> recs(n);
  for (auto& r : recs) {
    size_t rank = 0;
    in >> r.name >> r.dtype >> rank;
    r.shape.resize(rank);
    for (auto& d : r.shape) in >> d;
    in >> r.offset;
    if (!in) throw std::runtime_error("malformed checkpoint manifest entry");
  }
  in >> tok;
  if (tok != "data") throw std::runtime_error("malformed checkpoint manifest (missing data)");
  in.get();  // newline after "data"
  size_t data_start = size_t(in.tellg());

  Checkpoint ckpt;
  for (const auto& r : recs) {
    size_t esize = r.dtype == "f32" ? 4 : r.dtype == "f64" ? 8 : r.dtype == "u64" ? 8 : 1;
    if (r.dtype != "f32" && r.dtype != "f64" && r.dtype != "u64" && r.dtype != "u8")
      throw std::runtime_error("unknown element type " + r.dtype);
    size_t len = size_t(numel(r.shape)) * esize;
    if (data_start + r.offset + len > bytes.size())
      throw std::runtime_error("checkpoint truncated at tensor " + r.name);
    TensorBlob b;
    b.name = r.name;
    b.dtype = r.dtype;
    b.shape = r.shape;
    b.bytes.assign(bytes.begin() + data_start + r.offset,
                   bytes.begin() + data_start + r.offset + len);
    ckpt.tensors.push_back(std::move(b));
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  util::atomic_write(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(util::read_file(path));
}

// ParamStore <-> blobs. Trainability is structural (derived from names by the
// model builder), so only values are stored.
template <typename T>
void append_params(Checkpoint& ckpt, const ParamStore<T>& store) {
  for (const auto& e : store.entries()) ckpt.tensors.push_back(make_blob(e.name, e.value));
}

template <typename T>
void load_params(const Checkpoint& ckpt, ParamStore<T>& store) {
  for (auto& e : store.entries()) {
    const TensorBlob* b = ckpt.find(e.name);
    if (!b) throw std::runtime_error("checkpoint is missing parameter " + e.name);
    if (b->shape != e.value.shape())
      throw std::runtime_error("checkpoint parameter " + e.name + " has shape " +
                               to_string(b->shape) + ", expected " + to_string(e.value.shape()));
    e.value = blob_array<T>(*b);
  }
}

}  // namespace pixelvol::ndiff
