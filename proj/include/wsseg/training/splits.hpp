#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsseg/data/types.hpp"

namespace wsseg::training {

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Sorted distinct patient ids of a sample list.
inline std::vector<std::string> patient_ids(const std::vector<data::SliceSample>& samples) {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.patient_id);
  return {ids.begin(), ids.end()};
}

namespace detail {

inline std::vector<std::string> shuffled(std::vector<std::string> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

/// round(n * fraction), at least 1 when the fraction is positive.
inline std::size_t share(std::size_t n, double fraction) {
  if (fraction <= 0.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction)));
}

}  // namespace detail

/// Holds out `val_fraction` of the given training patients for early stopping.
inline PatientSplit split_validation(std::vector<std::string> train, double val_fraction, std::uint64_t seed) {
  PatientSplit s;
  train = detail::shuffled(std::move(train), seed);
  const std::size_t n_val = detail::share(train.size(), val_fraction);
  if (n_val >= train.size())
    throw std::invalid_argument("split: " + std::to_string(train.size()) + " training patients leave none after validation hold-out");
  s.val.assign(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(train.begin() + static_cast<std::ptrdiff_t>(n_val), train.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  return s;
}

/// Random train/val/test partition by patient (the single-run mode).
inline PatientSplit split_patients(const std::vector<std::string>& ids, double val_fraction, double test_fraction,
                                   std::uint64_t seed) {
  auto all = detail::shuffled(ids, seed);
  const std::size_t n_test = detail::share(all.size(), test_fraction);
  if (n_test >= all.size()) throw std::invalid_argument("split: too few patients for a test hold-out");
  std::vector<std::string> test(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::string> rest(all.begin() + static_cast<std::ptrdiff_t>(n_test), all.end());
  PatientSplit s = split_validation(std::move(rest), val_fraction, seed + 1);
  std::sort(test.begin(), test.end());
  s.test = std::move(test);
  return s;
}

/// Partition of patients into `folds` disjoint test folds whose sizes differ by at most one.
inline std::vector<std::vector<std::string>> kfold_partition(const std::vector<std::string>& ids, int folds,
                                                             std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("kfold_partition: need at least 2 folds");
  auto all = detail::shuffled(ids, seed);
  if (all.size() < static_cast<std::size_t>(folds))
    throw std::invalid_argument("kfold_partition: " + std::to_string(all.size()) + " patients for " +
                                std::to_string(folds) + " folds");
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < all.size(); ++i) out[i % out.size()].push_back(all[i]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

/// Train/val/test split of fold `fold`: that fold is the test set, the rest trains.
inline PatientSplit fold_split(const std::vector<std::vector<std::string>>& partition, int fold, double val_fraction,
                               std::uint64_t seed) {
  if (fold < 0 || static_cast<std::size_t>(fold) >= partition.size()) throw std::out_of_range("fold_split: bad fold");
  std::vector<std::string> train;
  for (std::size_t f = 0; f < partition.size(); ++f)
    if (f != static_cast<std::size_t>(fold)) train.insert(train.end(), partition[f].begin(), partition[f].end());
  PatientSplit s = split_validation(std::move(train), val_fraction, seed + static_cast<std::uint64_t>(fold));
  s.test = partition[static_cast<std::size_t>(fold)];
  return s;
}

}  // namespace wsseg::training
