#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/util/grid.hpp"

namespace wsseg::data {

/// Structural or content problem in a dataset (shape mismatch, empty series, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One patient's ordered 2-D slices with optional whole-tumor masks.
struct VolumeSeries {
  std::string patient_id;
  std::vector<Image> slices;
  std::optional<std::vector<Mask>> masks;
  /// Acquisition index of each slice; survives filtering.
  std::vector<int> slice_indices;

  std::size_t size() const { return slices.size(); }

  void validate() const {
    if (!slice_indices.empty() && slice_indices.size() != slices.size())
      throw DataError(patient_id + ": slice index list does not match slice count");
    if (masks) {
      if (masks->size() != slices.size())
        throw DataError(patient_id + ": " + std::to_string(masks->size()) + " masks for " +
                        std::to_string(slices.size()) + " slices");
      for (std::size_t i = 0; i < slices.size(); ++i)
        if (!(*masks)[i].same_shape(slices[i]))
          throw DataError(patient_id + ": mask " + std::to_string(i) + " shape differs from its slice");
    }
    for (const auto& s : slices)
      for (float v : s)
        if (!std::isfinite(v) || v < 0.0f) throw DataError(patient_id + ": intensities must be finite and >= 0");
  }

  int index_of(std::size_t i) const { return slice_indices.empty() ? static_cast<int>(i) : slice_indices[i]; }
};

/// One preprocessed slice: image, optional pixel mask, image-level label.
struct SliceSample {
  Image image;
  std::optional<Mask> pixel_mask;
  int label = 0;
  std::string patient_id;
  int slice_index = 0;
  double lesion_fraction = 0.0;

  bool has_mask() const { return pixel_mask.has_value(); }
};

/// Slices of a minimal-lesion-percentage group: qualifying positives plus all negatives.
struct DatasetGroup {
  double threshold = 0.0;
  std::vector<SliceSample> positives;
  std::vector<SliceSample> negatives;

  std::size_t size() const { return positives.size() + negatives.size(); }
};

}  // namespace wsseg::data
