#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ulab/error.hpp"
#include "ulab/nn.hpp"

namespace ulab {

// Binary checkpoint layout (little-endian):
//   "ULABCKPT" | u32 version | u32 activation | u64 seed | u64 config_digest
//   | u32 n_dims | u32 dims[n_dims]
//   | per layer: f64 weight[fan_out][fan_in] (row-major), f64 bias[fan_out]
//   | per layer: momentum buffers, same layout
inline constexpr std::array<char, 8> kCheckpointMagic{'U', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw StructuralError("truncated checkpoint");
  return v;
}

inline void put_layer(std::ostream& os, const LayerParams& p) {
  for (Eigen::Index r = 0; r < p.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c) put(os, p.weight(r, c));
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) put(os, p.bias(i));
}

inline void get_layer(std::istream& is, LayerParams& p) {
  for (Eigen::Index r = 0; r < p.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c) p.weight(r, c) = get<double>(is);
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias(i) = get<double>(is);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ModelState& m, std::uint64_t config_digest = 0) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put(os, kCheckpointVersion);
  detail::put(os, static_cast<std::uint32_t>(m.activation));
  detail::put(os, m.seed);
  detail::put(os, config_digest);
  detail::put(os, static_cast<std::uint32_t>(m.layer_dims.size()));
  for (int d : m.layer_dims) detail::put(os, static_cast<std::uint32_t>(d));
  for (const auto& l : m.layers) detail::put_layer(os, l);
  for (const auto& l : m.momentum) detail::put_layer(os, l);
}

inline ModelState read_checkpoint(std::istream& is, CheckpointHeader* header = nullptr) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw StructuralError("not a checkpoint");
  if (detail::get<std::uint32_t>(is) != kCheckpointVersion) throw StructuralError("unsupported checkpoint version");
  const auto act = detail::get<std::uint32_t>(is);
  if (act > 2) throw StructuralError("bad activation tag in checkpoint");
  CheckpointHeader h;
  h.seed = detail::get<std::uint64_t>(is);
  h.config_digest = detail::get<std::uint64_t>(is);
  const auto n_dims = detail::get<std::uint32_t>(is);
  if (n_dims < 2 || n_dims > 64) throw StructuralError("bad layer count in checkpoint");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < n_dims; ++i) dims.push_back(static_cast<int>(detail::get<std::uint32_t>(is)));
  ModelState m = ModelState::init(dims, h.seed, static_cast<Activation>(act));
  for (auto& l : m.layers) detail::get_layer(is, l);
  for (auto& l : m.momentum) detail::get_layer(is, l);
  if (header) *header = h;
  return m;
}

inline void save_checkpoint(const std::string& path, const ModelState& m, std::uint64_t config_digest = 0) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(os, m, config_digest);
}

inline ModelState load_checkpoint(const std::string& path, CheckpointHeader* header = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(is, header);
}

}  // namespace ulab
