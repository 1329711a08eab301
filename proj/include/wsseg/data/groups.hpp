#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <spdlog/spdlog.h>

#include "wsseg/data/types.hpp"

namespace wsseg::data {

/// Positives with lesion_fraction >= threshold plus every lesion-free slice; positives
/// below the threshold are dropped entirely.
inline DatasetGroup build_group(const std::vector<SliceSample>& samples, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw std::invalid_argument("build_group: threshold must be in (0, 1]");
  DatasetGroup g;
  g.threshold = threshold;
  for (const auto& s : samples) {
    if (s.label == 0)
      g.negatives.push_back(s);
    else if (s.lesion_fraction >= threshold)
      g.positives.push_back(s);
  }
  return g;
}

namespace detail {

/// `n` indices from [0, pool): without replacement when pool >= n, otherwise with.
inline std::vector<std::size_t> draw(std::size_t pool, std::size_t n, std::mt19937_64& rng, bool& replaced) {
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  replaced = pool < n;
  if (!replaced) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    return idx;
  }
  std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
  std::vector<std::size_t> out(n);
  for (auto& v : out) v = pick(rng);
  return out;
}

}  // namespace detail

/// n_fs mask-carrying positives plus n_fs negatives (negatives without a mask get an
/// all-zero one). Falls back to sampling with replacement when a class is short.
inline std::vector<SliceSample> sample_fs_subset(const DatasetGroup& group, int n_fs, std::uint64_t seed) {
  if (n_fs < 1) throw std::invalid_argument("sample_fs_subset: n_fs must be >= 1");
  std::vector<const SliceSample*> pos;
  for (const auto& s : group.positives)
    if (s.has_mask()) pos.push_back(&s);
  if (pos.empty()) throw DataError("sample_fs_subset: no positives with pixel masks");
  if (group.negatives.empty()) throw DataError("sample_fs_subset: no negatives");
  std::mt19937_64 rng(seed);
  bool replaced = false;
  std::vector<SliceSample> out;
  out.reserve(2 * static_cast<std::size_t>(n_fs));
  for (auto i : detail::draw(pos.size(), static_cast<std::size_t>(n_fs), rng, replaced)) out.push_back(*pos[i]);
  if (replaced)
    spdlog::warn("sample_fs_subset: only {} annotated positives for n_fs={}, sampling with replacement", pos.size(), n_fs);
  for (auto i : detail::draw(group.negatives.size(), static_cast<std::size_t>(n_fs), rng, replaced)) {
    SliceSample s = group.negatives[i];
    if (!s.pixel_mask) s.pixel_mask = Mask(s.image.rows(), s.image.cols());
    out.push_back(std::move(s));
  }
  if (replaced)
    spdlog::warn("sample_fs_subset: only {} negatives for n_fs={}, sampling with replacement", group.negatives.size(),
                 n_fs);
  return out;
}

/// min(|pos|, |neg|) of each class, labels only (pixel masks stripped).
inline std::vector<SliceSample> balance_ws(const DatasetGroup& group, std::uint64_t seed) {
  if (group.positives.empty() || group.negatives.empty())
    throw DataError("balance_ws: both classes must be non-empty (" + std::to_string(group.positives.size()) + " pos, " +
                    std::to_string(group.negatives.size()) + " neg)");
  const std::size_t m = std::min(group.positives.size(), group.negatives.size());
  std::mt19937_64 rng(seed);
  bool replaced = false;
  std::vector<SliceSample> out;
  out.reserve(2 * m);
  for (const auto* cls : {&group.positives, &group.negatives})
    for (auto i : detail::draw(cls->size(), m, rng, replaced)) {
      SliceSample s = (*cls)[i];
      s.pixel_mask.reset();
      out.push_back(std::move(s));
    }
  return out;
}

/// Balanced evaluation set that keeps pixel masks: mask-carrying positives and an equal
/// number of negatives (negatives without a mask get an all-zero one).
inline std::vector<SliceSample> balance_masked(const DatasetGroup& group, std::uint64_t seed) {
  DatasetGroup annotated;
  for (const auto& s : group.positives)
    if (s.has_mask()) annotated.positives.push_back(s);
  annotated.negatives = group.negatives;
  if (annotated.positives.empty() || annotated.negatives.empty())
    throw DataError("balance_masked: need annotated positives and negatives");
  const std::size_t m = std::min(annotated.positives.size(), annotated.negatives.size());
  std::mt19937_64 rng(seed);
  bool replaced = false;
  std::vector<SliceSample> restored;
  restored.reserve(2 * m);
  for (const auto* cls : {&annotated.positives, &annotated.negatives})
    for (auto i : detail::draw(cls->size(), m, rng, replaced)) {
      SliceSample s = (*cls)[i];
      if (!s.pixel_mask) s.pixel_mask = Mask(s.image.rows(), s.image.cols());
      restored.push_back(std::move(s));
    }
  return restored;
}

/// Restricts a group to slices of the given patients.
template <typename PatientSet>
DatasetGroup filter_patients(const DatasetGroup& g, const PatientSet& keep) {
  DatasetGroup out;
  out.threshold = g.threshold;
  for (const auto& s : g.positives)
    if (keep.contains(s.patient_id)) out.positives.push_back(s);
  for (const auto& s : g.negatives)
    if (keep.contains(s.patient_id)) out.negatives.push_back(s);
  return out;
}

}  // namespace wsseg::data
