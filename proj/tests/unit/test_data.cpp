#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "wsseg/data/groups.hpp"
#include "wsseg/data/io.hpp"
#include "wsseg/data/preprocess.hpp"
#include "wsseg/data/synth.hpp"

namespace wsseg::data {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SliceSample make_sample(const std::string& pid, int idx, int label, double fraction, bool mask = true) {
  SliceSample s;
  s.patient_id = pid;
  s.slice_index = idx;
  s.label = label;
  s.lesion_fraction = fraction;
  s.image = Image(4, 4, 0.5f);
  if (mask) {
    s.pixel_mask = Mask(4, 4);
    if (label) (*s.pixel_mask)(1, 1) = 1;
  }
  return s;
}

DatasetGroup toy_group(int pos, int neg) {
  DatasetGroup g;
  g.threshold = 0.1;
  for (int i = 0; i < pos; ++i) g.positives.push_back(make_sample("p" + std::to_string(i % 3), i, 1, 0.2));
  for (int i = 0; i < neg; ++i) g.negatives.push_back(make_sample("p" + std::to_string(i % 3), 100 + i, 0, 0.0, false));
  return g;
}

TEST(Pgm, RoundTrip8And16Bit) {
  TempDir dir("wsseg_test_pgm");
  Grid<std::uint16_t> g(3, 5);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<std::uint16_t>(i * 17);
  write_pgm(dir.path / "a.pgm", g, 255);
  EXPECT_EQ(read_pgm(dir.path / "a.pgm"), g);
  g(2, 4) = 60000;
  write_pgm(dir.path / "b.pgm", g);
  EXPECT_EQ(read_pgm(dir.path / "b.pgm"), g);
}

TEST(LoadVolume, PgmDirectoryWithMasks) {
  TempDir dir("wsseg_test_vol");
  const fs::path p = dir.path / "patient7";
  fs::create_directories(p);
  for (int k : {2, 10, 1}) {
    Grid<std::uint16_t> img(4, 6, static_cast<std::uint16_t>(10 * k));
    Grid<std::uint16_t> m(4, 6);
    m(0, k % 6) = 255;
    write_pgm(p / ("slice_" + std::to_string(k) + ".pgm"), img);
    write_pgm(p / ("mask_" + std::to_string(k) + ".pgm"), m, 255);
  }
  const auto s = load_volume(p);
  EXPECT_EQ(s.patient_id, "patient7");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.slice_indices, (std::vector<int>{1, 2, 10}));
  EXPECT_EQ(s.slices[2](0, 0), 100.0f);
  ASSERT_TRUE(s.masks);
  EXPECT_EQ((*s.masks)[1](0, 2), 1);
  EXPECT_EQ(count_positive((*s.masks)[1]), 1u);

  fs::remove(p / "mask_10.pgm");
  EXPECT_THROW(load_volume(p), DataError);
  EXPECT_THROW(load_volume(dir.path / "missing"), LoadError);
}

TEST(LoadVolume, NiftiWithSegmentation) {
  TempDir dir("wsseg_test_nii");
  const fs::path p = dir.path / "BraTS_001";
  fs::create_directories(p);
  NiftiVolume img, seg;
  img.dims = seg.dims = {5, 4, 3};
  img.voxels.resize(60);
  seg.voxels.assign(60, 0.0f);
  for (std::size_t i = 0; i < 60; ++i) img.voxels[i] = static_cast<float>(i);
  seg.voxels[1 * 20 + 2 * 5 + 3] = 2.0f;  // z=1, y=2, x=3
  write_nifti(p / "BraTS_001_t1ce.nii", img);
  write_nifti(p / "BraTS_001_seg.nii", seg);
  const auto s = load_volume(p);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.slices[0].rows(), 4);
  EXPECT_EQ(s.slices[0].cols(), 5);
  EXPECT_EQ(s.slices[2](1, 4), 2 * 20 + 1 * 5 + 4);
  EXPECT_EQ((*s.masks)[1](2, 3), 1);
  EXPECT_EQ(count_positive((*s.masks)[0]), 0u);
}

TEST(Preprocess, FilterDropsSparseSlices) {
  VolumeSeries s;
  s.patient_id = "x";
  for (int k = 0; k < 3; ++k) s.slices.emplace_back(20, 20, 0.0f);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 10; ++c) s.slices[1](r, c) = 1.0f;
  s.slices[2](0, 0) = 1.0f;
  const auto f = filter_boundary_slices(s, 0.1, 100);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f.slice_indices, std::vector<int>{1});
  s.slices[1] = Image(20, 20, 0.0f);
  EXPECT_THROW(filter_boundary_slices(s, 0.1, 100), DataError);
}

TEST(Preprocess, CropToUnionBox) {
  VolumeSeries s;
  s.patient_id = "x";
  s.slices = {Image(10, 12, 0.0f), Image(10, 12, 0.0f)};
  s.masks = std::vector<Mask>{Mask(10, 12), Mask(10, 12)};
  s.slices[0](2, 3) = 1.0f;
  s.slices[1](6, 8) = 1.0f;
  (*s.masks)[1](6, 8) = 1;
  const auto c = align_and_crop(s);
  EXPECT_EQ(c.slices[0].rows(), 5);
  EXPECT_EQ(c.slices[0].cols(), 6);
  EXPECT_EQ(c.slices[0](0, 0), 1.0f);
  EXPECT_EQ((*c.masks)[1](4, 5), 1);
}

TEST(Preprocess, NormalizeAndResize) {
  Image img(2, 2);
  img(0, 0) = 2.0f;
  img(1, 1) = 6.0f;
  img(0, 1) = 4.0f;
  img(1, 0) = 2.0f;
  const Image n = normalize_min_max(img);
  EXPECT_EQ(n(0, 0), 0.0f);
  EXPECT_EQ(n(0, 1), 0.5f);
  EXPECT_EQ(n(1, 1), 1.0f);
  EXPECT_EQ(normalize_min_max(Image(3, 3, 7.0f)), Image(3, 3, 0.0f));

  const Image big = resize_bilinear(Image(5, 7, 0.25f), 170, 140);
  EXPECT_EQ(big.rows(), 170);
  for (float v : big) EXPECT_FLOAT_EQ(v, 0.25f);
  Mask m(2, 2);
  m(1, 1) = 1;
  const Mask up = resize_nearest(m, 4, 4);
  EXPECT_EQ(count_positive(up), 4u);
  EXPECT_EQ(up(3, 3), 1);
  EXPECT_EQ(up(1, 1), 0);
}

TEST(Preprocess, LesionFractionOverBrainPixels) {
  Image img(4, 4, 0.0f);
  Mask m(4, 4);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 4; ++c) img(r, c) = 1.0f;
  m(0, 0) = 1;
  m(3, 3) = 1;  // outside the brain still counts as lesion
  EXPECT_DOUBLE_EQ(lesion_fraction(m, img), 2.0 / 8.0);
  EXPECT_EQ(lesion_fraction(Mask(4, 4), img), 0.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = 1;
  Image tiny(4, 4, 0.0f);
  tiny(0, 0) = 1.0f;
  EXPECT_EQ(lesion_fraction(m, tiny), 1.0);
}

TEST(Preprocess, SeriesLabelsAndShapes) {
  SynthConfig cfg;
  cfg.slices = 12;
  const auto vols = synth_generate(cfg, 1, 3);
  const auto samples = preprocess_series(vols[0]);
  EXPECT_EQ(samples.size(), 12u - cfg.boundary_slices);
  for (const auto& s : samples) {
    EXPECT_EQ(s.image.rows(), kSliceRows);
    EXPECT_EQ(s.image.cols(), kSliceCols);
    ASSERT_TRUE(s.has_mask());
    EXPECT_EQ(s.label, count_positive(*s.pixel_mask) > 0 ? 1 : 0);
    EXPECT_EQ(s.label == 0, s.lesion_fraction == 0.0);
    EXPECT_GE(grid_max(s.image), 0.99f);
  }
}

TEST(Synth, DeterministicAndPatientIndependent) {
  SynthConfig cfg;
  cfg.slices = 8;
  const auto a = synth_generate(cfg, 3, 42);
  const auto b = synth_generate(cfg, 2, 42);
  EXPECT_EQ(a[1].slices, b[1].slices);
  EXPECT_EQ(*a[1].masks, *b[1].masks);
  EXPECT_EQ(a[0].patient_id, "synth_000");
  const auto c = synth_generate(cfg, 1, 43);
  EXPECT_NE(a[0].slices, c[0].slices);
}

TEST(Synth, LesionShareReachesTarget) {
  SynthConfig cfg;
  cfg.lesion_probability = 1.0;
  const auto vols = synth_generate(cfg, 2, 0);
  int positives = 0;
  for (const auto& v : vols)
    for (const auto& s : preprocess_series(v)) {
      ASSERT_EQ(s.label, 1);
      EXPECT_GE(s.lesion_fraction, cfg.lesion_fraction);
      ++positives;
    }
  EXPECT_GT(positives, 0);
}

TEST(Synth, ConfigRoundTripAndValidation) {
  SynthConfig cfg;
  cfg.slices = 17;
  cfg.lesion_fraction = 0.05;
  const auto back = SynthConfig::from_config(cfg.to_config());
  EXPECT_EQ(back.slices, 17);
  EXPECT_EQ(back.lesion_fraction, 0.05);
  cfg.lesion_fraction = 1.5;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Cache, RoundTrip) {
  TempDir dir("wsseg_test_cache");
  std::vector<SliceSample> v = {make_sample("pa", 3, 1, 0.25), make_sample("pa", 4, 0, 0.0, false)};
  v[0].image(2, 3) = 0.125f;
  write_cache(dir.path / "pa.wsc", "pa", v);
  const auto back = load_dataset(dir.path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].image, v[0].image);
  EXPECT_EQ(*back[0].pixel_mask, *v[0].pixel_mask);
  EXPECT_FALSE(back[1].has_mask());
  EXPECT_EQ(back[0].lesion_fraction, 0.25);
  EXPECT_EQ(back[1].slice_index, 4);
  EXPECT_EQ(back[0].patient_id, "pa");
}

TEST(Groups, ThresholdKeepsQualifyingPositivesAndAllNegatives) {
  std::vector<SliceSample> v = {make_sample("a", 0, 1, 0.005), make_sample("a", 1, 1, 0.01),
                                make_sample("a", 2, 1, 0.2), make_sample("a", 3, 0, 0.0)};
  EXPECT_EQ(build_group(v, 0.01).positives.size(), 2u);
  EXPECT_EQ(build_group(v, 0.10).positives.size(), 1u);
  EXPECT_EQ(build_group(v, 0.10).negatives.size(), 1u);
  EXPECT_THROW(build_group(v, 0.0), std::invalid_argument);
}

TEST(Groups, FsSubsetIsBalancedAndMasked) {
  const auto g = toy_group(30, 40);
  const auto s = sample_fs_subset(g, 10, 1);
  ASSERT_EQ(s.size(), 20u);
  std::set<int> seen;
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(s[i].label, 1);
    seen.insert(s[i].slice_index);
  }
  EXPECT_EQ(seen.size(), 10u);
  for (const auto& x : s) EXPECT_TRUE(x.has_mask());
  for (int i = 10; i < 20; ++i) EXPECT_EQ(count_positive(*s[i].pixel_mask), 0u);
  EXPECT_EQ(sample_fs_subset(toy_group(3, 40), 10, 1).size(), 20u);
  EXPECT_THROW(sample_fs_subset(toy_group(0, 4), 1, 1), DataError);
}

TEST(Groups, BalancedSets) {
  const auto ws = balance_ws(toy_group(7, 20), 2);
  ASSERT_EQ(ws.size(), 14u);
  EXPECT_EQ(std::count_if(ws.begin(), ws.end(), [](const SliceSample& s) { return s.label == 1; }), 7);
  for (const auto& s : ws) EXPECT_FALSE(s.has_mask());
  const auto masked = balance_masked(toy_group(9, 4), 3);
  ASSERT_EQ(masked.size(), 8u);
  for (const auto& s : masked) EXPECT_TRUE(s.has_mask());
  EXPECT_THROW(balance_ws(toy_group(3, 0), 1), DataError);
}

TEST(Groups, FilterPatients) {
  const auto g = toy_group(9, 9);
  const auto f = filter_patients(g, std::set<std::string>{"p1"});
  EXPECT_EQ(f.positives.size(), 3u);
  EXPECT_EQ(f.negatives.size(), 3u);
  for (const auto& s : f.positives) EXPECT_EQ(s.patient_id, "p1");
}

}  // namespace
}  // namespace wsseg::data
