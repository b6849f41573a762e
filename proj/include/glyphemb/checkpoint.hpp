// Copyright 2026 The glyphemb Authors. Apache 2.0 License.
//
// Checkpoint container, version 1. All integers are little-endian u32,
// all tensor values little-endian IEEE-754 binary32.
//
//   magic        8 bytes  "GLYPHCKP"
//   version      u32      1
//   blob_count   u32
//   blob_count x { name: u32 len + UTF-8 bytes, data: u32 len + bytes }
//   tensor_count u32
//   tensor_count x { name: u32 len + UTF-8 bytes, rank: u32,
//                    dims: rank x u32, values: prod(dims) x f32 }
//
// Blobs carry text metadata (model config, vocabulary); tensors carry
// parameters keyed by their slash-separated names. Entries are written in
// insertion order, so saving the same model twice gives identical bytes.

#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "glyphemb/binary_io.hpp"
#include "glyphemb/tensor.hpp"

namespace glyphemb {

inline constexpr char kCheckpointMagic[8] = {'G', 'L', 'Y', 'P', 'H', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  void set_blob(const std::string& name, std::string data) {
    for (auto& [n, d] : blobs_) {
      if (n == name) {
        d = std::move(data);
        return;
      }
    }
    blobs_.emplace_back(name, std::move(data));
  }

  template <typename T>
  void set_tensor(const std::string& name, const Tensor<T>& t) {
    Tensor<float> f = t.template cast<float>();
    for (auto& [n, v] : tensors_) {
      if (n == name) {
        v = std::move(f);
        return;
      }
    }
    tensors_.emplace_back(name, std::move(f));
  }

  bool has_blob(const std::string& name) const {
    return std::any_of(blobs_.begin(), blobs_.end(),
                       [&](const auto& e) { return e.first == name; });
  }
  bool has_tensor(const std::string& name) const {
    return std::any_of(tensors_.begin(), tensors_.end(),
                       [&](const auto& e) { return e.first == name; });
  }

  const std::string& blob(const std::string& name) const {
    for (const auto& [n, d] : blobs_)
      if (n == name) return d;
    throw FormatError("checkpoint has no blob '" + name + "'");
  }

  const Tensor<float>& tensor(const std::string& name) const {
    for (const auto& [n, v] : tensors_)
      if (n == name) return v;
    throw FormatError("checkpoint has no tensor '" + name + "'");
  }

  /// Copies a stored tensor into `dst`, which must already have its shape.
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& dst) const {
    const auto& src = tensor(name);
    if (src.shape() != dst.shape()) {
      throw FormatError("tensor '" + name + "' has shape " +
                        shape_string(src.shape()) + ", expected " +
                        shape_string(dst.shape()));
    }
    dst = src.template cast<T>();
  }

  const std::vector<std::pair<std::string, Tensor<float>>>& tensors() const {
    return tensors_;
  }

  std::vector<std::uint8_t> serialize() const {
    ByteWriter w;
    w.bytes(std::string_view(kCheckpointMagic, 8));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(blobs_.size()));
    for (const auto& [n, d] : blobs_) {
      w.str(n);
      w.str(d);
    }
    w.u32(static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [n, t] : tensors_) {
      w.str(n);
      w.u32(static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
      for (float v : t.data()) w.f32(v);
    }
    return w.buffer();
  }

  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.bytes(8) != std::string_view(kCheckpointMagic, 8))
      throw FormatError("not a glyphemb checkpoint (bad magic)");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const auto nblobs = r.u32();
    for (std::uint32_t i = 0; i < nblobs; ++i) {
      std::string name = r.str();
      ck.blobs_.emplace_back(std::move(name), r.str());
    }
    const auto ntensors = r.u32();
    for (std::uint32_t i = 0; i < ntensors; ++i) {
      std::string name = r.str();
      const auto rank = r.u32();
      Shape shape(rank);
      for (auto& d : shape) d = r.u32();
      std::vector<float> values(shape_size(shape));
      for (auto& v : values) v = r.f32();
      ck.tensors_.emplace_back(std::move(name),
                               Tensor<float>(std::move(shape), std::move(values)));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint");
    return ck;
  }

  void save(const std::filesystem::path& path) const {
    write_file_bytes(path, serialize());
  }
  static Checkpoint load(const std::filesystem::path& path) {
    return deserialize(read_file_bytes(path));
  }

 private:
  std::vector<std::pair<std::string, std::string>> blobs_;
  std::vector<std::pair<std::string, Tensor<float>>> tensors_;
};

}  // namespace glyphemb
