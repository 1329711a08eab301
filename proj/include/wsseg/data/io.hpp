#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "wsseg/data/types.hpp"
#include "wsseg/util/binary_io.hpp"

namespace wsseg::data {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PGM (P2 / P5, 8- or 16-bit)

inline Grid<std::uint16_t> read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P2") throw LoadError(path.string() + ": not a PGM file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw LoadError(path.string() + ": corrupt PGM header");
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw LoadError(path.string() + ": corrupt PGM header");
  Grid<std::uint16_t> g(h, w);
  if (magic == "P2") {
    for (auto& v : g) {
      const std::string t = token();
      if (t.empty()) throw LoadError(path.string() + ": truncated PGM");
      v = static_cast<std::uint16_t>(std::stoi(t));
    }
    return g;
  }
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(g.size() * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw LoadError(path.string() + ": truncated PGM");
  for (std::size_t i = 0; i < g.size(); ++i)
    g.data()[i] = bytes == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
  return g;
}

inline void write_pgm(const fs::path& path, const Grid<std::uint16_t>& g, int maxval = 65535) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << g.cols() << " " << g.rows() << "\n" << maxval << "\n";
  for (auto v : g) {
    if (maxval > 255) {
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xff));
    } else {
      out.put(static_cast<char>(std::min<int>(v, 255)));
    }
  }
}

// ---------------------------------------------------------------------------
// NIfTI-1 single-file volumes (.nii / .nii.gz), read through zlib.

struct NiftiVolume {
  std::array<int, 3> dims{};  // x, y, z
  std::vector<float> voxels;  // x fastest

  float at(int x, int y, int z) const {
    return voxels[(static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x];
  }
};

namespace detail {

inline std::vector<unsigned char> read_gz_all(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw LoadError("cannot open " + path.string());
  std::vector<unsigned char> buf;
  std::array<unsigned char, 1 << 16> chunk{};
  int n;
  while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0) buf.insert(buf.end(), chunk.begin(), chunk.begin() + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw LoadError(path.string() + ": corrupt compressed stream");
  return buf;
}

template <typename T>
T load_scalar(const unsigned char* p, bool swap) {
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), p, sizeof(T));
  if (swap) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace detail

inline NiftiVolume read_nifti(const fs::path& path) {
  const auto buf = detail::read_gz_all(path);
  if (buf.size() < 352) throw LoadError(path.string() + ": too short for a NIfTI-1 header");
  bool swap = false;
  auto hdr = detail::load_scalar<std::int32_t>(buf.data(), false);
  if (hdr != 348) {
    swap = true;
    hdr = detail::load_scalar<std::int32_t>(buf.data(), true);
    if (hdr != 348) throw LoadError(path.string() + ": not a NIfTI-1 file");
  }
  if (std::memcmp(buf.data() + 344, "n+1", 3) != 0)
    throw LoadError(path.string() + ": only single-file NIfTI (n+1) is supported");
  const auto ndim = detail::load_scalar<std::int16_t>(buf.data() + 40, swap);
  if (ndim < 2 || ndim > 7) throw LoadError(path.string() + ": unsupported dimensionality");
  NiftiVolume v;
  for (int i = 0; i < 3; ++i) {
    const auto d = i < ndim ? detail::load_scalar<std::int16_t>(buf.data() + 42 + 2 * i, swap) : std::int16_t{1};
    if (d < 1) throw LoadError(path.string() + ": non-positive dimension");
    v.dims[static_cast<std::size_t>(i)] = d;
  }
  const auto datatype = detail::load_scalar<std::int16_t>(buf.data() + 70, swap);
  const auto offset = static_cast<std::size_t>(detail::load_scalar<float>(buf.data() + 108, swap));
  float slope = detail::load_scalar<float>(buf.data() + 112, swap);
  const float inter = detail::load_scalar<float>(buf.data() + 116, swap);
  if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;
  const std::size_t n = static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2];
  std::size_t width = 0;
  switch (datatype) {
    case 2: case 256: width = 1; break;
    case 4: case 512: width = 2; break;
    case 8: case 16: case 768: width = 4; break;
    case 64: width = 8; break;
    default: throw LoadError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  if (offset < 348 || buf.size() < offset + n * width) throw LoadError(path.string() + ": truncated voxel data");
  v.voxels.resize(n);
  const unsigned char* p = buf.data() + offset;
  for (std::size_t i = 0; i < n; ++i, p += width) {
    double x = 0;
    switch (datatype) {
      case 2: x = *p; break;
      case 256: x = static_cast<std::int8_t>(*p); break;
      case 4: x = detail::load_scalar<std::int16_t>(p, swap); break;
      case 512: x = detail::load_scalar<std::uint16_t>(p, swap); break;
      case 8: x = detail::load_scalar<std::int32_t>(p, swap); break;
      case 768: x = detail::load_scalar<std::uint32_t>(p, swap); break;
      case 16: x = detail::load_scalar<float>(p, swap); break;
      case 64: x = detail::load_scalar<double>(p, swap); break;
    }
    v.voxels[i] = static_cast<float>(x * slope + inter);
  }
  return v;
}

/// Minimal float32 NIfTI-1 writer; gzip-compressed when the name ends in ".gz".
inline void write_nifti(const fs::path& path, const NiftiVolume& v) {
  std::vector<unsigned char> buf(352, 0);
  auto put = [&](std::size_t off, auto val) { std::memcpy(buf.data() + off, &val, sizeof(val)); };
  put(0, std::int32_t{348});
  put(40, std::int16_t{3});
  for (int i = 0; i < 3; ++i) put(42 + 2 * static_cast<std::size_t>(i), static_cast<std::int16_t>(v.dims[static_cast<std::size_t>(i)]));
  for (int i = 3; i < 8; ++i) put(42 + 2 * static_cast<std::size_t>(i), std::int16_t{1});
  put(70, std::int16_t{16});
  put(72, std::int16_t{32});
  for (int i = 0; i < 4; ++i) put(76 + 4 * static_cast<std::size_t>(i), 1.0f);
  put(108, 352.0f);
  put(112, 1.0f);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  const auto* raw = reinterpret_cast<const unsigned char*>(v.voxels.data());
  buf.insert(buf.end(), raw, raw + v.voxels.size() * sizeof(float));
  const bool gz = path.extension() == ".gz";
  gzFile f = gzopen(path.string().c_str(), gz ? "wb6" : "wbT");
  if (f == nullptr) throw std::runtime_error("cannot write " + path.string());
  const int written = gzwrite(f, buf.data(), static_cast<unsigned>(buf.size()));
  gzclose(f);
  if (written != static_cast<int>(buf.size())) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Patient directory layouts

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline bool is_nifti(const fs::path& p) {
  const auto n = p.filename().string();
  return ends_with(n, ".nii") || ends_with(n, ".nii.gz");
}

inline std::string nifti_stem(const fs::path& p) {
  auto n = p.filename().string();
  if (ends_with(n, ".gz")) n.resize(n.size() - 3);
  if (ends_with(n, ".nii")) n.resize(n.size() - 4);
  return n;
}

inline VolumeSeries series_from_nifti(const fs::path& image_path, const fs::path* seg_path, std::string patient_id) {
  const auto vol = read_nifti(image_path);
  VolumeSeries s;
  s.patient_id = std::move(patient_id);
  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  NiftiVolume seg;
  if (seg_path != nullptr) {
    seg = read_nifti(*seg_path);
    if (seg.dims != vol.dims) throw DataError(seg_path->string() + ": segmentation shape does not match image");
    s.masks.emplace();
  }
  for (int z = 0; z < nz; ++z) {
    Image img(ny, nx);
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const float v = vol.at(x, y, z);
        if (!std::isfinite(v)) throw LoadError(image_path.string() + ": non-finite voxel");
        img(y, x) = std::max(0.0f, v);
      }
    s.slices.push_back(std::move(img));
    s.slice_indices.push_back(z);
    if (seg_path != nullptr) {
      Mask m(ny, nx);
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) m(y, x) = seg.at(x, y, z) > 0.0f ? 1 : 0;
      s.masks->push_back(std::move(m));
    }
  }
  return s;
}

}  // namespace detail

/// Loads one patient.
///
/// Supported layouts:
///  * a directory holding `*t1ce.nii[.gz]` (or any single image NIfTI) and an optional
///    `*seg.nii[.gz]` whole-tumour sidecar (labels > 0 are tumour); slices run along z;
///  * a directory of `slice_<n>.pgm` images with optional `mask_<n>.pgm` sidecars
///    (non-zero = tumour), ordered by <n>;
///  * a single `.nii[.gz]` file, whose sidecar is the same name with `t1ce` replaced by `seg`.
inline VolumeSeries load_volume(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("no such file or directory: " + path.string());
  if (fs::is_regular_file(path)) {
    if (!detail::is_nifti(path)) throw LoadError(path.string() + ": unsupported file type");
    auto name = path.filename().string();
    const auto pos = name.find("t1ce");
    fs::path seg;
    if (pos != std::string::npos) seg = path.parent_path() / name.replace(pos, 4, "seg");
    const bool has_seg = !seg.empty() && fs::exists(seg);
    auto s = detail::series_from_nifti(path, has_seg ? &seg : nullptr, path.parent_path().filename().string());
    s.validate();
    return s;
  }
  std::vector<fs::path> nii, segs;
  std::map<long, fs::path> slices, masks;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    const auto p = e.path();
    const auto n = p.filename().string();
    if (detail::is_nifti(p)) {
      (detail::nifti_stem(p).ends_with("seg") ? segs : nii).push_back(p);
    } else if (p.extension() == ".pgm" && (n.starts_with("slice_") || n.starts_with("mask_"))) {
      const bool is_mask = n.starts_with("mask_");
      const auto digits = p.stem().string().substr(is_mask ? 5 : 6);
      long idx = 0;
      try {
        idx = std::stol(digits);
      } catch (const std::exception&) {
        throw LoadError(p.string() + ": cannot parse slice number");
      }
      (is_mask ? masks : slices)[idx] = p;
    }
  }
  const std::string pid = path.filename().empty() ? path.parent_path().filename().string() : path.filename().string();
  if (!nii.empty()) {
    std::sort(nii.begin(), nii.end());
    auto pick = std::find_if(nii.begin(), nii.end(), [](const fs::path& p) { return detail::nifti_stem(p).ends_with("t1ce"); });
    if (pick == nii.end()) {
      if (nii.size() != 1) throw LoadError(path.string() + ": several NIfTI images and none named *t1ce");
      pick = nii.begin();
    }
    if (segs.size() > 1) throw LoadError(path.string() + ": several segmentation files");
    auto s = detail::series_from_nifti(*pick, segs.empty() ? nullptr : &segs.front(), pid);
    s.validate();
    return s;
  }
  if (slices.empty()) throw LoadError(path.string() + ": no supported volume files");
  VolumeSeries s;
  s.patient_id = pid;
  if (!masks.empty()) s.masks.emplace();
  for (const auto& [idx, p] : slices) {
    const auto g = read_pgm(p);
    s.slices.push_back(grid_cast<float>(g));
    s.slice_indices.push_back(static_cast<int>(idx));
    if (!masks.empty()) {
      auto it = masks.find(idx);
      if (it == masks.end()) throw DataError(p.string() + ": missing mask sidecar");
      const auto m = read_pgm(it->second);
      if (!m.same_shape(g)) throw DataError(it->second.string() + ": mask shape differs from its slice");
      Mask bin(m.rows(), m.cols());
      for (std::size_t i = 0; i < m.size(); ++i) bin.data()[i] = m.data()[i] != 0 ? 1 : 0;
      s.masks->push_back(std::move(bin));
    }
  }
  if (!masks.empty() && masks.size() != slices.size()) throw DataError(path.string() + ": masks without matching slices");
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Preprocessed cache: one file per patient.
//
//   "WSSEGSLC" | u32 version | str patient_id | u32 count
//   | count x { i32 slice_index | i32 rows | i32 cols | f32 pixels[rows*cols]
//             | u8 has_mask | [u8 mask[rows*cols]] | i32 label | f64 lesion_fraction }

inline constexpr const char* kCacheMagic = "WSSEGSLC";
inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr const char* kCacheExtension = ".wsc";

inline void write_cache(const fs::path& path, const std::string& patient_id, const std::vector<SliceSample>& samples) {
  BinaryWriter w(path);
  w.magic(kCacheMagic);
  w.scalar<std::uint32_t>(kCacheVersion);
  w.string(patient_id);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    if (s.patient_id != patient_id) throw std::invalid_argument("write_cache: mixed patients in one file");
    w.scalar<std::int32_t>(s.slice_index);
    w.scalar<std::int32_t>(s.image.rows());
    w.scalar<std::int32_t>(s.image.cols());
    w.array(s.image.data(), s.image.size());
    w.scalar<std::uint8_t>(s.pixel_mask ? 1 : 0);
    if (s.pixel_mask) {
      if (!s.pixel_mask->same_shape(s.image)) throw std::invalid_argument("write_cache: mask shape mismatch");
      w.array(s.pixel_mask->data(), s.pixel_mask->size());
    }
    w.scalar<std::int32_t>(s.label);
    w.scalar<double>(s.lesion_fraction);
  }
  w.close();
}

inline std::vector<SliceSample> read_cache(const fs::path& path) {
  BinaryReader r(path);
  r.expect_magic(kCacheMagic);
  const auto version = r.scalar<std::uint32_t>();
  if (version != kCacheVersion) throw LoadError(path.string() + ": unsupported cache version " + std::to_string(version));
  const std::string pid = r.string();
  const auto count = r.scalar<std::uint32_t>();
  std::vector<SliceSample> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SliceSample s;
    s.patient_id = pid;
    s.slice_index = r.scalar<std::int32_t>();
    const int rows = r.scalar<std::int32_t>(), cols = r.scalar<std::int32_t>();
    if (rows <= 0 || cols <= 0 || rows > 16384 || cols > 16384) throw LoadError(path.string() + ": corrupt slice extent");
    s.image = Image(rows, cols);
    r.array(s.image.data(), s.image.size());
    if (r.scalar<std::uint8_t>() != 0) {
      s.pixel_mask = Mask(rows, cols);
      r.array(s.pixel_mask->data(), s.pixel_mask->size());
    }
    s.label = r.scalar<std::int32_t>();
    s.lesion_fraction = r.scalar<double>();
    if ((s.label != 0 && s.label != 1) || !(s.lesion_fraction >= 0.0 && s.lesion_fraction <= 1.0))
      throw LoadError(path.string() + ": corrupt label or lesion fraction");
    out.push_back(std::move(s));
  }
  return out;
}

/// All `*.wsc` files in a directory, ordered by file name.
inline std::vector<SliceSample> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == kCacheExtension) files.push_back(e.path());
  if (files.empty()) throw LoadError(dir.string() + ": no preprocessed " + kCacheExtension + " files");
  std::sort(files.begin(), files.end());
  std::vector<SliceSample> all;
  for (const auto& f : files) {
    auto part = read_cache(f);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

}  // namespace wsseg::data
