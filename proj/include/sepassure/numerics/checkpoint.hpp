#pragma once

// Binary checkpoint layout, little-endian:
//
//   magic      8 bytes  "SEPACKPT"
//   version    u32      (kCheckpointVersion)
//   meta_len   u64, then meta_len bytes of UTF-8 metadata (JSON text)
//   count      u64
//   count x {
//     name_len u64, name bytes
//     ndim     u64, dims u64[ndim]
//     values   f64[prod(dims)]   raw IEEE-754 bit patterns
//   }
//
// Values are copied bit for bit, so save -> load is exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "sepassure/errors.hpp"
#include "sepassure/numerics/tensor.hpp"

namespace sepassure::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'P', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t.tensor;
    return nullptr;
  }
};

namespace detail {

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint " + path);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, static_cast<std::uint64_t>(ckpt.metadata.size()));
  os.write(ckpt.metadata.data(), static_cast<std::streamsize>(ckpt.metadata.size()));
  detail::write_pod(os, static_cast<std::uint64_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    detail::write_pod(os, static_cast<std::uint64_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(os, static_cast<std::uint64_t>(t.dim()));
    for (auto d : t.shape()) detail::write_pod(os, static_cast<std::uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw IoError(path + " is not a checkpoint file");
  }
  const auto version = detail::read_pod<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto meta_len = detail::read_pod<std::uint64_t>(is, path);
  ckpt.metadata.resize(meta_len);
  is.read(ckpt.metadata.data(), static_cast<std::streamsize>(meta_len));
  const auto count = detail::read_pod<std::uint64_t>(is, path);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = detail::read_pod<std::uint64_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto ndim = detail::read_pod<std::uint64_t>(is, path);
    Shape shape(ndim);
    for (auto& d : shape) d = detail::read_pod<std::uint64_t>(is, path);
    std::vector<double> values(shape_size(shape));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw IoError("truncated checkpoint " + path);
    ckpt.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return ckpt;
}

}  // namespace sepassure::nn
