#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wsseg/nn/params.hpp"
#include "wsseg/util/binary_io.hpp"

namespace wsseg::model {

/// Versioned named-tensor container shared by checkpoints and pretrained-weight files.
///
/// Layout (little-endian):
///   "WSSEGCKP" | u32 version | str backbone_id | i32 rows | i32 cols | i32 tiny_widths[4]
///   | u32 count | count x { str name | u8 kind | u32 ndim | i32 dims[ndim] | f64 values[prod(dims)] }
inline constexpr const char* kWeightsMagic = "WSSEGCKP";
inline constexpr std::uint32_t kWeightsVersion = 1;

struct WeightsFile {
  std::string backbone_id;
  int rows = 0;
  int cols = 0;
  std::array<int, 4> tiny_widths{};
  std::vector<nn::Param> tensors;
};

inline void write_weights_file(const std::filesystem::path& path, const WeightsFile& f) {
  BinaryWriter w(path);
  w.magic(kWeightsMagic);
  w.scalar<std::uint32_t>(kWeightsVersion);
  w.string(f.backbone_id);
  w.scalar<std::int32_t>(f.rows);
  w.scalar<std::int32_t>(f.cols);
  for (int v : f.tiny_widths) w.scalar<std::int32_t>(v);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(f.tensors.size()));
  for (const auto& p : f.tensors) {
    w.string(p.name);
    w.scalar<std::uint8_t>(p.kind == nn::ParamKind::kernel ? 0 : 1);
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) w.scalar<std::int32_t>(d);
    w.array(p.value.data(), p.value.size());
  }
  w.close();
}

inline WeightsFile read_weights_file(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kWeightsMagic);
  const auto version = r.scalar<std::uint32_t>();
  if (version != kWeightsVersion)
    throw LoadError(path.string() + ": unsupported weights version " + std::to_string(version));
  WeightsFile f;
  f.backbone_id = r.string();
  f.rows = r.scalar<std::int32_t>();
  f.cols = r.scalar<std::int32_t>();
  for (auto& v : f.tiny_widths) v = r.scalar<std::int32_t>();
  const auto count = r.scalar<std::uint32_t>();
  f.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    nn::Param p;
    p.name = r.string();
    p.kind = r.scalar<std::uint8_t>() == 0 ? nn::ParamKind::kernel : nn::ParamKind::bias;
    const auto ndim = r.scalar<std::uint32_t>();
    if (ndim > 8) throw LoadError(path.string() + ": corrupt tensor rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const int dim = r.scalar<std::int32_t>();
      if (dim < 0 || dim > (1 << 24)) throw LoadError(path.string() + ": corrupt tensor extent");
      p.shape.push_back(dim);
      n *= static_cast<std::size_t>(dim);
    }
    p.value.resize(n);
    r.array(p.value.data(), n);
    f.tensors.push_back(std::move(p));
  }
  return f;
}

}  // namespace wsseg::model
