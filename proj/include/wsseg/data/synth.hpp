#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/data/types.hpp"
#include "wsseg/util/kv_config.hpp"

namespace wsseg::data {

/// Parameters of the desk-scale phantom generator.
struct SynthConfig {
  int rows = 170;
  int cols = 140;
  int slices = 40;
  /// Near-empty slices, split between the start and the end of each series.
  int boundary_slices = 4;
  double lesion_probability = 0.5;
  /// Lesion area as a fraction of the slice's tissue area (brain plus skull rim).
  double lesion_fraction = 0.1;
  /// Relative uniform jitter on lesion_fraction.
  double lesion_fraction_jitter = 0.0;
  double brain_intensity = 0.45;
  double lesion_intensity = 0.9;
  double texture_amplitude = 0.08;
  double noise_sigma = 0.02;
  /// Bright rim around the brain; it fixes each slice's maximum so per-slice
  /// normalisation keeps lesion contrast comparable across slices.
  double skull_intensity = 1.0;
  int skull_thickness = 3;
  /// Brain semi-axes as fractions of the frame extent.
  double brain_semi_rows = 0.42;
  double brain_semi_cols = 0.40;
  /// Brain scale at the series ends relative to the middle slice.
  double min_brain_scale = 0.6;

  void validate() const {
    if (rows < 16 || cols < 16) throw std::invalid_argument("synth: frame must be at least 16x16");
    if (slices < 1 || boundary_slices < 0 || boundary_slices >= slices)
      throw std::invalid_argument("synth: need slices >= 1 and 0 <= boundary_slices < slices");
    if (lesion_probability < 0 || lesion_probability > 1) throw std::invalid_argument("synth: lesion_probability in [0,1]");
    if (lesion_fraction < 0 || lesion_fraction_jitter < 0 || lesion_fraction_jitter >= 1)
      throw std::invalid_argument("synth: lesion fraction/jitter out of range");
    if (lesion_fraction * (1.0 + lesion_fraction_jitter) > 1.0)
      throw std::invalid_argument("synth: infeasible config, lesion larger than the brain");
    if (brain_semi_rows <= 0 || brain_semi_rows > 0.5 || brain_semi_cols <= 0 || brain_semi_cols > 0.5)
      throw std::invalid_argument("synth: brain semi-axes must be in (0, 0.5]");
    if (min_brain_scale <= 0 || min_brain_scale > 1) throw std::invalid_argument("synth: min_brain_scale in (0,1]");
    if (skull_thickness < 0 || skull_intensity < 0) throw std::invalid_argument("synth: skull thickness/intensity >= 0");
    if (brain_intensity <= 0 || lesion_intensity <= 0 || texture_amplitude < 0 || noise_sigma < 0)
      throw std::invalid_argument("synth: intensities must be positive");
  }

  static SynthConfig from_config(const KeyValueConfig& kv) {
    SynthConfig c;
    c.rows = static_cast<int>(kv.get_int("rows", c.rows));
    c.cols = static_cast<int>(kv.get_int("cols", c.cols));
    c.slices = static_cast<int>(kv.get_int("slices", c.slices));
    c.boundary_slices = static_cast<int>(kv.get_int("boundary_slices", c.boundary_slices));
    c.lesion_probability = kv.get_double("lesion_probability", c.lesion_probability);
    c.lesion_fraction = kv.get_double("lesion_fraction", c.lesion_fraction);
    c.lesion_fraction_jitter = kv.get_double("lesion_fraction_jitter", c.lesion_fraction_jitter);
    c.brain_intensity = kv.get_double("brain_intensity", c.brain_intensity);
    c.lesion_intensity = kv.get_double("lesion_intensity", c.lesion_intensity);
    c.texture_amplitude = kv.get_double("texture_amplitude", c.texture_amplitude);
    c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
    c.skull_intensity = kv.get_double("skull_intensity", c.skull_intensity);
    c.skull_thickness = static_cast<int>(kv.get_int("skull_thickness", c.skull_thickness));
    c.brain_semi_rows = kv.get_double("brain_semi_rows", c.brain_semi_rows);
    c.brain_semi_cols = kv.get_double("brain_semi_cols", c.brain_semi_cols);
    c.min_brain_scale = kv.get_double("min_brain_scale", c.min_brain_scale);
    return c;
  }

  KeyValueConfig to_config() const {
    KeyValueConfig kv;
    kv.set("rows", std::to_string(rows));
    kv.set("cols", std::to_string(cols));
    kv.set("slices", std::to_string(slices));
    kv.set("boundary_slices", std::to_string(boundary_slices));
    kv.set("lesion_probability", format_double(lesion_probability));
    kv.set("lesion_fraction", format_double(lesion_fraction));
    kv.set("lesion_fraction_jitter", format_double(lesion_fraction_jitter));
    kv.set("brain_intensity", format_double(brain_intensity));
    kv.set("lesion_intensity", format_double(lesion_intensity));
    kv.set("texture_amplitude", format_double(texture_amplitude));
    kv.set("noise_sigma", format_double(noise_sigma));
    kv.set("skull_intensity", format_double(skull_intensity));
    kv.set("skull_thickness", std::to_string(skull_thickness));
    kv.set("brain_semi_rows", format_double(brain_semi_rows));
    kv.set("brain_semi_cols", format_double(brain_semi_cols));
    kv.set("min_brain_scale", format_double(min_brain_scale));
    return kv;
  }
};

inline std::string synth_patient_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%03d", index);
  return buf;
}

namespace detail {

inline bool in_ellipse(double r, double c, double cr, double cc, double ar, double ac) {
  const double y = (r - cr) / ar, x = (c - cc) / ac;
  return y * y + x * x <= 1.0;
}

inline VolumeSeries synth_patient(const SynthConfig& cfg, int patient, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(patient), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  VolumeSeries s;
  s.patient_id = synth_patient_id(patient);
  s.masks.emplace();
  const int lead = (cfg.boundary_slices + 1) / 2;
  const int inner = cfg.slices - cfg.boundary_slices;
  // Per-patient anatomy: centre jitter and texture phases.
  const double cr0 = cfg.rows / 2.0 + (unit(rng) - 0.5) * 4.0;
  const double cc0 = cfg.cols / 2.0 + (unit(rng) - 0.5) * 4.0;
  const double fy = 0.15 + 0.1 * unit(rng), fx = 0.15 + 0.1 * unit(rng);
  const double phase_y = 2 * std::numbers::pi * unit(rng), phase_x = 2 * std::numbers::pi * unit(rng);

  for (int k = 0; k < cfg.slices; ++k) {
    Image img(cfg.rows, cfg.cols, 0.0f);
    Mask mask(cfg.rows, cfg.cols, 0);
    const bool boundary = k < lead || k >= lead + inner;
    if (boundary) {
      // A faint speck: far fewer bright pixels than any real slice.
      const int r = static_cast<int>(cr0), c = static_cast<int>(cc0);
      for (int dr = -2; dr < 2; ++dr)
        for (int dc = -2; dc < 2; ++dc) img(r + dr, c + dc) = static_cast<float>(cfg.brain_intensity);
    } else {
      const double t = (k - lead + 0.5) / inner;
      const double scale = cfg.min_brain_scale + (1.0 - cfg.min_brain_scale) * std::sin(std::numbers::pi * t);
      const double ar = scale * cfg.brain_semi_rows * cfg.rows;
      const double ac = scale * cfg.brain_semi_cols * cfg.cols;
      std::size_t brain_px = 0;
      for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
          if (!in_ellipse(r, c, cr0, cc0, ar, ac)) continue;
          ++brain_px;
          const double tex = cfg.texture_amplitude * std::sin(fy * r + phase_y + 0.05 * k) * std::cos(fx * c + phase_x);
          img(r, c) = static_cast<float>(std::max(0.0, cfg.brain_intensity + tex + cfg.noise_sigma * noise(rng)));
        }
      std::size_t skull_px = 0;
      if (cfg.skull_thickness > 0)
        for (int r = 0; r < cfg.rows; ++r)
          for (int c = 0; c < cfg.cols; ++c)
            if (!in_ellipse(r, c, cr0, cc0, ar, ac) &&
                in_ellipse(r, c, cr0, cc0, ar + cfg.skull_thickness, ac + cfg.skull_thickness)) {
              img(r, c) = static_cast<float>(cfg.skull_intensity);
              ++skull_px;
            }
      if (unit(rng) < cfg.lesion_probability && cfg.lesion_fraction > 0.0 && brain_px > 0) {
        const double f = cfg.lesion_fraction * (1.0 + cfg.lesion_fraction_jitter * (2.0 * unit(rng) - 1.0));
        const double s_lin = std::sqrt(f);
        double aspect = 0.8 + 0.45 * unit(rng);
        if (s_lin * std::max(aspect, 1.0 / aspect) > 0.95) aspect = 1.0;
        const double reach = s_lin * std::max(aspect, 1.0 / aspect);
        const double room = std::max(0.0, (1.0 - reach) * 0.9);
        const double rad = room * std::sqrt(unit(rng));
        const double ang = 2 * std::numbers::pi * unit(rng);
        const double lr = cr0 + rad * std::sin(ang) * ar, lc = cc0 + rad * std::cos(ang) * ac;
        // Grow until the rasterised lesion covers the requested share of the brain; the
        // margin keeps it there through cropping and resizing.
        const double target = 1.04 * f * static_cast<double>(brain_px + skull_px);
        double grow = 1.0;
        auto covered = [&](double g) {
          std::size_t n = 0;
          for (int r = 0; r < cfg.rows; ++r)
            for (int c = 0; c < cfg.cols; ++c)
              n += in_ellipse(r, c, lr, lc, g * s_lin * ar * aspect, g * s_lin * ac / aspect) &&
                   in_ellipse(r, c, cr0, cc0, ar, ac);
          return static_cast<double>(n);
        };
        for (int it = 0; it < 50 && covered(grow) < target; ++it) grow *= 1.01;
        const double lar = grow * s_lin * ar * aspect, lac = grow * s_lin * ac / aspect;
        for (int r = 0; r < cfg.rows; ++r)
          for (int c = 0; c < cfg.cols; ++c)
            if (in_ellipse(r, c, lr, lc, lar, lac) && in_ellipse(r, c, cr0, cc0, ar, ac)) {
              mask(r, c) = 1;
              img(r, c) = static_cast<float>(std::max(0.0, cfg.lesion_intensity + cfg.noise_sigma * noise(rng)));
            }
      }
    }
    s.slices.push_back(std::move(img));
    s.masks->push_back(std::move(mask));
    s.slice_indices.push_back(k);
  }
  return s;
}

}  // namespace detail

/// Elliptical brain phantoms with optional bright elliptical lesions and exact masks.
/// Deterministic in (cfg, n_patients, seed); patient i depends only on (cfg, i, seed).
inline std::vector<VolumeSeries> synth_generate(const SynthConfig& cfg, int n_patients, std::uint64_t seed) {
  cfg.validate();
  if (n_patients < 1) throw std::invalid_argument("synth_generate: n_patients must be >= 1");
  std::vector<VolumeSeries> out;
  out.reserve(static_cast<std::size_t>(n_patients));
  for (int p = 0; p < n_patients; ++p) out.push_back(detail::synth_patient(cfg, p, seed));
  return out;
}

}  // namespace wsseg::data
