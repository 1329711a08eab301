#include <gtest/gtest.h>

#include <set>

#include "wsseg/data/preprocess.hpp"
#include "wsseg/data/synth.hpp"
#include "wsseg/training/augment.hpp"
#include "wsseg/training/curriculum.hpp"
#include "wsseg/training/early_stopping.hpp"
#include "wsseg/training/splits.hpp"

namespace wsseg::training {
namespace {

std::vector<std::string> ids(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("p" + std::to_string(1000 + i));
  return v;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

const std::vector<data::SliceSample>& small_dataset() {
  static const auto samples = [] {
    data::SynthConfig sc;
    sc.slices = 10;
    sc.boundary_slices = 2;
    std::vector<data::SliceSample> all;
    for (const auto& v : data::synth_generate(sc, 6, 5)) {
      auto s = data::preprocess_series(v);
      all.insert(all.end(), s.begin(), s.end());
    }
    return all;
  }();
  return samples;
}

CurriculumConfig small_config() {
  CurriculumConfig c;
  c.n_fs = 4;
  c.max_epochs = 2;
  c.batch_size = 8;
  c.alpha_bin = 1e-3;
  c.backbone.tiny_widths = {3, 4, 6, 8};
  c.fs_stop.patience = 1;
  c.fs_stop.second_phase->patience = 1;
  return c;
}

TEST(LrHeuristic, StraightAndReversed) {
  const auto [fs, ws] = lr_heuristic(250, StepOrder::fs_then_mil);
  EXPECT_DOUBLE_EQ(fs, 2e-4);
  EXPECT_DOUBLE_EQ(ws, 8e-8);
  const auto [fs25, ws25] = lr_heuristic(25, StepOrder::fs_then_mil);
  EXPECT_DOUBLE_EQ(fs25, 2e-3);
  EXPECT_DOUBLE_EQ(ws25, 8e-6);
  const auto [rfs, rws] = lr_heuristic(250, StepOrder::mil_then_fs);
  EXPECT_DOUBLE_EQ(rfs, 5e-6);
  EXPECT_DOUBLE_EQ(rws, 2e-8);
  EXPECT_THROW(lr_heuristic(0, StepOrder::fs_then_mil), std::invalid_argument);
}

TEST(Config, RoundTrip) {
  CurriculumConfig c;
  c.order = StepOrder::mil_then_fs;
  c.alpha_ws = 3e-7;
  c.n_fs = 17;
  c.k = 2;
  const auto back = CurriculumConfig::from_config(c.to_config());
  EXPECT_EQ(back.to_config().to_string(), c.to_config().to_string());
  EXPECT_EQ(back.order, StepOrder::mil_then_fs);
  EXPECT_FALSE(back.alpha_fs.has_value());
  EXPECT_EQ(*back.alpha_ws, 3e-7);
  KeyValueConfig kv;
  kv.set("k", "13");
  EXPECT_THROW(CurriculumConfig::from_config(kv), std::invalid_argument);
}

TEST(Splits, SinglePartitionSizes) {
  const auto s = split_patients(ids(10), 0.1, 0.2, 3);
  EXPECT_EQ(s.test.size(), 2u);
  EXPECT_EQ(s.train.size() + s.val.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  std::set<std::string> all = as_set(s.train);
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all, as_set(ids(10)));
  EXPECT_EQ(split_patients(ids(10), 0.1, 0.2, 3).test, s.test);
  EXPECT_THROW(split_patients(ids(1), 0.1, 0.2, 0), std::invalid_argument);
}

TEST(Splits, FiveFoldOf285) {
  const auto parts = kfold_partition(ids(285), 5, 7);
  std::set<std::string> seen;
  for (const auto& p : parts) {
    EXPECT_EQ(p.size(), 57u);
    for (const auto& id : p) EXPECT_TRUE(seen.insert(id).second);
  }
  EXPECT_EQ(seen.size(), 285u);
  for (int f = 0; f < 5; ++f) {
    const auto s = fold_split(parts, f, 0.1, 7);
    EXPECT_EQ(s.test, parts[static_cast<std::size_t>(f)]);
    EXPECT_EQ(s.train.size() + s.val.size(), 228u);
    for (const auto& id : s.val) EXPECT_FALSE(as_set(s.test).contains(id));
  }
  EXPECT_THROW(kfold_partition(ids(3), 5, 0), std::invalid_argument);
  EXPECT_THROW(kfold_partition(ids(10), 1, 0), std::invalid_argument);
}

TEST(EarlyStopping, PatienceAndBestTracking) {
  nn::ParamStore ps;
  const int id = ps.add("w", nn::ParamKind::kernel, {1});
  EarlyStopping s(2, 0.0);
  s.start(1.0, ps);
  ps[id].value[0] = 1;
  EXPECT_FALSE(s.update(0.8, ps));
  ps[id].value[0] = 2;
  EXPECT_FALSE(s.update(0.9, ps));
  ps[id].value[0] = 3;
  EXPECT_TRUE(s.update(0.85, ps));
  EXPECT_EQ(s.best_epoch(), 1);
  EXPECT_EQ(s.best_loss(), 0.8);
  EXPECT_EQ(s.best_weights()[0][0], 1.0);
  EXPECT_TRUE(s.improved());
}

TEST(EarlyStopping, MinDeltaGovernsPatienceNotBest) {
  nn::ParamStore ps;
  ps.add("w", nn::ParamKind::kernel, {1});
  EarlyStopping s(2, 0.01);
  s.start(1.0, ps);
  EXPECT_FALSE(s.update(0.995, ps));
  EXPECT_TRUE(s.update(0.992, ps));
  EXPECT_FALSE(s.improved());
  EXPECT_EQ(s.best_loss(), 0.992);
  EXPECT_EQ(s.best_epoch(), 2);
}

TEST(Augment, IdentityAndDeterminism) {
  const auto& s = small_dataset()[3];
  const auto same = apply_rigid_transform(s, 0, 0, 0);
  EXPECT_EQ(same.image, s.image);
  const auto a = augment(s, 9), b = augment(s, 9), c = augment(s, 10);
  EXPECT_EQ(a.image, b.image);
  EXPECT_NE(a.image, c.image);
  AugmentConfig off;
  off.enabled = false;
  EXPECT_EQ(augment(s, 9, off).image, s.image);
}

TEST(Augment, HalfTurnAndIntegerShift) {
  data::SliceSample s;
  s.image = Image(5, 7, 0.0f);
  s.pixel_mask = Mask(5, 7);
  s.image(0, 1) = 1.0f;
  (*s.pixel_mask)(0, 1) = 1;
  s.label = 1;
  const auto r = apply_rigid_transform(s, 180.0, 0, 0);
  EXPECT_NEAR(r.image(4, 5), 1.0f, 1e-6);
  EXPECT_EQ((*r.pixel_mask)(4, 5), 1);
  EXPECT_EQ(count_positive(*r.pixel_mask), 1u);
  const auto t = apply_rigid_transform(s, 0, 2, 3);
  EXPECT_EQ(t.image(2, 4), 1.0f);
  EXPECT_EQ((*t.pixel_mask)(2, 4), 1);
  const auto gone = apply_rigid_transform(s, 0, 0, -3);
  EXPECT_EQ(gone.label, 0);
}

TEST(Augment, MaskStaysAlignedWithImage) {
  for (const auto& s : small_dataset()) {
    if (s.label != 1) continue;
    const auto a = augment(s, 77);
    double inside = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.image.size(); ++i)
      if (a.pixel_mask->data()[i]) {
        inside += a.image.data()[i];
        ++n;
      }
    ASSERT_GT(n, 0u);
    EXPECT_GT(inside / static_cast<double>(n), 0.6);
    break;
  }
}

TEST(ParallelMap, KeepsOrderAndRethrows) {
  const auto v = parallel_map<int>(7, 3, [](int i) { return i * i; });
  EXPECT_EQ(v, (std::vector<int>{0, 1, 4, 9, 16, 25, 36}));
  EXPECT_THROW(parallel_map<int>(4, 2, [](int i) -> int { if (i == 2) throw std::runtime_error("x"); return i; }),
               std::runtime_error);
}

TEST(RunData, SetsAreBalancedAndDisjointByPatient) {
  const auto cfg = small_config();
  const auto split = split_patients(patient_ids(small_dataset()), cfg.val_fraction, cfg.test_fraction, 1);
  const auto d = build_run_data(cfg, small_dataset(), split);
  EXPECT_EQ(d.fs_train.size(), 8u);
  auto count_pos = [](const std::vector<data::SliceSample>& v) {
    return std::count_if(v.begin(), v.end(), [](const data::SliceSample& s) { return s.label == 1; });
  };
  EXPECT_EQ(2 * count_pos(d.ws_train), static_cast<long>(d.ws_train.size()));
  EXPECT_EQ(2 * count_pos(d.val), static_cast<long>(d.val.size()));
  for (const auto& s : d.val) EXPECT_TRUE(as_set(split.val).contains(s.patient_id));
  for (const auto& s : d.test) EXPECT_TRUE(as_set(split.test).contains(s.patient_id));
  for (const auto& s : d.ws_train) EXPECT_FALSE(s.has_mask());
}

TEST(Curriculum, ZeroRatesLeaveParametersUntouched) {
  auto cfg = small_config();
  cfg.alpha_bin = 0.0;
  cfg.alpha_fs = 0.0;
  cfg.alpha_ws = 0.0;
  cfg.augment.enabled = false;
  cfg.cls_stop.patience = 3;
  cfg.max_epochs = 3;
  const auto split = split_patients(patient_ids(small_dataset()), cfg.val_fraction, cfg.test_fraction, 2);
  const auto d = build_run_data(cfg, small_dataset(), split);
  model::SegModel m(cfg.backbone);
  const auto before = m.params().snapshot();
  const auto r = run_curriculum_on(m, cfg, d, split);
  ASSERT_EQ(r.steps.size(), 3u);
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.weights, before) << s.step;
    ASSERT_FALSE(s.epochs.empty());
    for (const auto& e : s.epochs) {
      EXPECT_EQ(e.val_loss, s.initial_val_loss) << s.step;
      EXPECT_EQ(e.train_loss, s.epochs.front().train_loss) << s.step;
    }
  }
  EXPECT_EQ(m.params().snapshot(), before);
  const auto* ws = r.find(kStepWs);
  ASSERT_NE(ws, nullptr);
  EXPECT_TRUE(ws->restarted);
  EXPECT_TRUE(ws->flagged);
}

TEST(Curriculum, StraightOrderRecordsEveryStep) {
  const auto cfg = small_config();
  const auto r = run_curriculum(cfg, small_dataset());
  ASSERT_EQ(r.steps.size(), 3u);
  EXPECT_EQ(r.steps[0].step, kStepCls);
  EXPECT_EQ(r.steps[1].step, kStepFs);
  EXPECT_EQ(r.steps[2].step, kStepWs);
  EXPECT_DOUBLE_EQ(r.alpha_fs, 5e-2 / 4);
  EXPECT_DOUBLE_EQ(r.alpha_ws, 5e-3 / 16);
  EXPECT_TRUE(r.steps[0].val_accuracy.has_value());
  EXPECT_FALSE(r.steps[0].val_dice.has_value());
  for (std::size_t i = 1; i < 3; ++i) {
    ASSERT_TRUE(r.steps[i].val_dice.has_value());
    EXPECT_FALSE(r.steps[i].test_dice.empty());
    EXPECT_LE(r.steps[i].epochs.size(), static_cast<std::size_t>(2 * cfg.max_epochs));
  }
  EXPECT_EQ(r.steps[0].lr, cfg.alpha_bin);
  EXPECT_EQ(r.steps[1].epochs.front().lr, r.alpha_fs);
  EXPECT_EQ(r.steps[1].epochs.back().phase, 2);
  EXPECT_DOUBLE_EQ(r.steps[1].epochs.back().lr, r.alpha_fs / 10);
  // Deterministic in the seed.
  const auto again = run_curriculum(cfg, small_dataset());
  EXPECT_EQ(again.steps[2].weights, r.steps[2].weights);
}

TEST(Curriculum, ReversedOrderWithoutPretraining) {
  auto cfg = small_config();
  cfg.order = StepOrder::mil_then_fs;
  cfg.use_cls_pretrain = false;
  const auto r = run_curriculum(cfg, small_dataset());
  ASSERT_EQ(r.steps.size(), 2u);
  EXPECT_EQ(r.steps[0].step, kStepWs);
  EXPECT_EQ(r.steps[1].step, kStepFs);
  EXPECT_DOUBLE_EQ(r.alpha_fs, 5e-6);
  EXPECT_DOUBLE_EQ(r.alpha_ws, 5e-6 / 4);
}

TEST(Curriculum, WsRestartKeepsPreStepWeightsWhenFlagged) {
  auto cfg = small_config();
  cfg.use_cls_pretrain = false;
  cfg.alpha_ws = 0.0;
  const auto split = split_patients(patient_ids(small_dataset()), cfg.val_fraction, cfg.test_fraction, 4);
  const auto d = build_run_data(cfg, small_dataset(), split);
  model::SegModel m(cfg.backbone);
  const auto fs = train_fs(m, {d.fs_train, d.val}, cfg, 1e-3);
  const auto ws = train_ws(m, {d.ws_train, d.val}, cfg, 0.0);
  EXPECT_TRUE(ws.restarted);
  EXPECT_TRUE(ws.flagged);
  EXPECT_EQ(ws.weights, fs.weights);
  EXPECT_DOUBLE_EQ(*ws.val_dice, *fs.val_dice);
  EXPECT_EQ(ws.epochs.back().phase, 2);
  EXPECT_EQ(ws.epochs.back().lr, 0.0);
}

TEST(Curriculum, CrossValidationUsesEveryPatientAsTestOnce) {
  auto cfg = small_config();
  cfg.use_cls_pretrain = false;
  cfg.max_epochs = 1;
  const auto runs = crossval(cfg, small_dataset(), 3, 2);
  ASSERT_EQ(runs.size(), 3u);
  std::multiset<std::string> tested;
  for (int f = 0; f < 3; ++f) {
    EXPECT_EQ(runs[static_cast<std::size_t>(f)].fold, f);
    for (const auto& id : runs[static_cast<std::size_t>(f)].split.test) tested.insert(id);
  }
  EXPECT_EQ(tested.size(), 6u);
  EXPECT_EQ(std::set<std::string>(tested.begin(), tested.end()).size(), 6u);
  EXPECT_EQ(fold_means(runs, kStepFs).size(), 3u);
}

TEST(Curriculum, RejectsMissingMasksInFsStep) {
  auto cfg = small_config();
  model::SegModel m(cfg.backbone);
  auto set = small_dataset();
  set.resize(4);
  set[0].pixel_mask.reset();
  EXPECT_THROW(train_fs(m, {set, set}, cfg, 1e-3), TrainingError);
  EXPECT_THROW(train_ws(m, {{}, set}, cfg, 1e-3), TrainingError);
}

}  // namespace
}  // namespace wsseg::training
