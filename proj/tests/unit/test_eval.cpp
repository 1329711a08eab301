#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "wsseg/eval/metrics.hpp"
#include "wsseg/eval/plots.hpp"

namespace wsseg::eval {
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

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Ci95, HandComputedExamples) {
  const auto [m, h] = ci95({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(h, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  const auto [m2, h2] = ci95({0.3, 0.3});
  EXPECT_DOUBLE_EQ(m2, 0.3);
  EXPECT_EQ(h2, 0.0);
  EXPECT_THROW(ci95({1.0}), std::invalid_argument);
  const auto one = MetricSummary::from_values({0.4});
  EXPECT_EQ(one.mean, 0.4);
  EXPECT_EQ(one.ci95, 0.0);
}

TEST(EvaluateDice, UsesMaskedSamplesOnly) {
  const model::SegModel m(model::BackboneSpec{});
  data::SliceSample with, without;
  with.image = without.image = Image(model::kInputRows, model::kInputCols, 0.3f);
  with.pixel_mask = Mask(model::kInputRows, model::kInputCols);
  const auto s = evaluate_dice(m, {with, without});
  ASSERT_EQ(s.values.size(), 1u);
  const Map a3 = m.segment(with.image).a3;
  EXPECT_DOUBLE_EQ(s.values[0], losses::dice_loss(a3, Map(a3.rows(), a3.cols())));
  EXPECT_THROW(evaluate_dice(m, {without}), std::invalid_argument);
}

TEST(MetricsTable, RoundTrip) {
  TempDir dir("wsseg_test_metrics");
  const std::vector<MetricRow> rows = {{"10", 25, "FS", 0, 0.125}, {"10", 25, "MIL", 1, 0.1 / 3.0}};
  write_metrics_table(dir.path / "m.csv", rows);
  EXPECT_TRUE(slurp(dir.path / "m.csv").starts_with(std::string(kMetricsHeader) + "\n"));
  const auto back = read_metrics_table(dir.path / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].step, "MIL");
  EXPECT_EQ(back[1].fold, 1);
  EXPECT_EQ(back[1].mean_dice_loss, 0.1 / 3.0);
}

TEST(Png, RoundTripWithText) {
  TempDir dir("wsseg_test_png");
  Canvas c(13, 7);
  c.set(3, 2, kRed);
  c.fill_rect(10, 5, 12, 6, kBlue);
  c.text(0, 0, "A1", kBlack);
  write_png(dir.path / "x.png", c, {{"legend", "FS,MIL"}, {"data", "a,b\n1,2\n"}});
  const auto img = read_png(dir.path / "x.png");
  EXPECT_EQ(img.width, 13);
  EXPECT_EQ(img.height, 7);
  EXPECT_EQ(img.pixels, c.pixels());
  EXPECT_EQ(img.text.at("legend"), "FS,MIL");
  EXPECT_EQ(img.text.at("data"), "a,b\n1,2\n");
}

TEST(LearningCurves, SidecarMatchesPlottedBands) {
  TempDir dir("wsseg_test_curves");
  std::vector<MetricRow> rows;
  for (int n : {10, 25, 50})
    for (int f = 0; f < 3; ++f) {
      rows.push_back({"10", n, "FS", f, 0.3 - 0.001 * n + 0.01 * f});
      rows.push_back({"10", n, "MIL", f, 0.28 - 0.001 * n + 0.02 * f});
    }
  rows.push_back({"1", 10, "FS", 0, 0.5});
  const auto written = plot_learning_curves(rows, dir.path);
  ASSERT_EQ(written.size(), 2u);
  const auto png = read_png(dir.path / "learning_curves_10.png");
  EXPECT_EQ(png.text.at("legend"), "FS,MIL");
  const std::string csv = slurp(dir.path / "learning_curves_10.csv");
  EXPECT_EQ(png.text.at("data"), csv);

  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kCurveHeader);
  int points = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 7u);
    const int n = std::stoi(f[1]);
    std::vector<double> folds;
    for (const auto& r : rows)
      if (r.group == "10" && r.step == f[2] && r.n_fs == n) folds.push_back(r.mean_dice_loss);
    const auto [mean, half] = ci95(folds);
    EXPECT_NEAR(std::stod(f[3]), mean, 1e-15);
    EXPECT_NEAR(std::stod(f[4]), mean - half, 1e-15);
    EXPECT_NEAR(std::stod(f[5]), mean + half, 1e-15);
    EXPECT_LE(std::stod(f[4]), std::stod(f[3]));
    EXPECT_GE(std::stod(f[5]), std::stod(f[3]));
    EXPECT_EQ(f[6], "3");
    ++points;
  }
  EXPECT_EQ(points, 6);
  EXPECT_THROW(plot_learning_curves({}, dir.path), std::invalid_argument);
}

TEST(Overlay, ContourAndBinarize) {
  Mask m(5, 5);
  for (int r = 1; r < 4; ++r)
    for (int c = 1; c < 4; ++c) m(r, c) = 1;
  const Mask k = contour(m);
  EXPECT_EQ(count_positive(k), 8u);
  EXPECT_EQ(k(2, 2), 0);
  Map p(1, 3);
  p(0, 0) = 0.49;
  p(0, 1) = 0.5;
  p(0, 2) = 0.9;
  const Mask b = binarize(p);
  EXPECT_EQ(b(0, 0), 0);
  EXPECT_EQ(b(0, 1), 1);
  EXPECT_EQ(b(0, 2), 1);
}

TEST(Overlay, PanelsShowMaskAndPredictions) {
  data::SliceSample s;
  s.patient_id = "pz";
  s.slice_index = 12;
  s.image = Image(40, 32, 0.5f);
  s.pixel_mask = Mask(40, 32);
  for (int r = 8; r < 24; ++r)
    for (int c = 8; c < 24; ++c) (*s.pixel_mask)(r, c) = 1;
  Map fs(10, 8, 0.1), mil(10, 8, 0.1);
  fs(0, 0) = 0.9;
  mil(9, 7) = 0.9;
  const Canvas c = render_overlay(s, fs, mil);
  EXPECT_EQ(c.width(), 32);
  EXPECT_EQ(c.height(), 40 + 2 * 40 + 4);
  EXPECT_EQ(c.at(8, 8), kGreen);
  EXPECT_EQ(c.at(12, 12), (Rgb{128, 128, 128}));
  EXPECT_EQ(c.at(0, 42), kRed);
  EXPECT_EQ(c.at(31, 40 + 2 + 40 + 2 + 39), kRed);
  EXPECT_NE(c.at(0, 40 + 2 + 40 + 2), kRed);
  EXPECT_EQ(overlay_filename(s), "overlay_pz_slice12.png");
}

TEST(Overlay, RenderOverlaysWritesOnePngPerMaskedSample) {
  TempDir dir("wsseg_test_overlays");
  const model::SegModel m(model::BackboneSpec{});
  data::SliceSample s;
  s.patient_id = "pq";
  s.slice_index = 3;
  s.image = Image(model::kInputRows, model::kInputCols, 0.2f);
  s.pixel_mask = Mask(model::kInputRows, model::kInputCols);
  data::SliceSample bare = s;
  bare.pixel_mask.reset();
  const auto paths = render_overlays(m, m, {s, bare}, dir.path);
  ASSERT_EQ(paths.size(), 1u);
  const auto png = read_png(paths[0]);
  EXPECT_EQ(png.text.at("patient_id"), "pq");
  EXPECT_EQ(png.width, std::max(model::kInputCols, m.pyramid_shapes().m3.width * kOverlayScale));
}

TEST(LossCurves, WritesLegend) {
  TempDir dir("wsseg_test_loss");
  plot_loss_curves({{"cls", {0.7, 0.6}}, {"FS", {0.5, 0.4, 0.35}}, {"MIL", {0.2}}}, dir.path / "l.png");
  EXPECT_EQ(read_png(dir.path / "l.png").text.at("legend"), "cls,FS,MIL");
}

}  // namespace
}  // namespace wsseg::eval
