#pragma once

#include <filesystem>
#include <string>

#include "wsseg/model/seg_model.hpp"
#include "wsseg/model/weights_io.hpp"

namespace wsseg::model {

/// Writes the full theta registry (backbone, fusion weights, head) with the backbone identity.
inline void save_checkpoint(const SegModel& m, const std::filesystem::path& path) {
  WeightsFile f;
  f.backbone_id = m.spec().id;
  f.rows = m.input_rows();
  f.cols = m.input_cols();
  f.tiny_widths = m.spec().id == "tiny" ? m.spec().tiny_widths : std::array<int, 4>{0, 0, 0, 0};
  f.tensors = m.params().all();
  write_weights_file(path, f);
}

/// Loads a checkpoint into a model built from a matching spec; any mismatch is a ConfigError.
inline void load_checkpoint(SegModel& m, const std::filesystem::path& path) {
  const auto f = read_weights_file(path);
  const std::string where = path.string() + ": ";
  if (f.backbone_id != m.spec().id)
    throw ConfigError(where + "checkpoint backbone '" + f.backbone_id + "' does not match model '" + m.spec().id + "'");
  if (f.rows != m.input_rows() || f.cols != m.input_cols())
    throw ConfigError(where + "checkpoint input size does not match model");
  if (m.spec().id == "tiny" && f.tiny_widths != m.spec().tiny_widths)
    throw ConfigError(where + "checkpoint tiny-backbone widths do not match model");
  auto& params = m.params().all();
  if (f.tensors.size() != params.size()) throw ConfigError(where + "parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = f.tensors[i];
    if (t.name != params[i].name || t.shape != params[i].shape || t.kind != params[i].kind)
      throw ConfigError(where + "parameter mismatch at " + params[i].name);
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = f.tensors[i].value;
}

}  // namespace wsseg::model
