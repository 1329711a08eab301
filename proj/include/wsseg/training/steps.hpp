#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "wsseg/data/types.hpp"
#include "wsseg/losses/dice.hpp"
#include "wsseg/losses/l2.hpp"
#include "wsseg/losses/mil.hpp"
#include "wsseg/model/mil_pool.hpp"
#include "wsseg/model/seg_model.hpp"
#include "wsseg/nn/adam.hpp"
#include "wsseg/training/augment.hpp"
#include "wsseg/training/config.hpp"
#include "wsseg/training/early_stopping.hpp"

namespace wsseg::training {

/// Non-finite loss or an unusable training set.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kStepCls = "cls";
inline constexpr const char* kStepFs = "FS";
inline constexpr const char* kStepWs = "MIL";

struct EpochRecord {
  std::string step;
  int phase = 1;  // FS: 1 or 2; MIL: 2 after a restart
  int epoch = 0;  // 1-based within the phase
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

/// Outcome of one curriculum step.
struct StepRecord {
  std::string step;
  std::vector<EpochRecord> epochs;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  int best_epoch = 0;  // within the last phase; 0 = initial weights kept
  double lr = 0.0;     // phase-1 rate
  bool restarted = false;
  /// Stalled again after the restart; weights are the pre-step ones.
  bool flagged = false;
  /// Validation loss of the weights the step finished with.
  double final_val_loss = 0.0;
  std::optional<double> val_accuracy;  // cls only
  std::optional<double> val_dice;      // mean Dice loss on the masked validation set
  std::vector<double> test_dice;       // per-sample Dice losses on the test set
  double seconds = 0.0;
  std::vector<std::vector<double>> weights;
};

/// Training and validation samples of one step.
struct StepData {
  std::vector<data::SliceSample> train;
  std::vector<data::SliceSample> val;
};

namespace detail {

inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

/// FNV-1a of the step name, stable across standard libraries.
inline std::uint64_t step_tag(const std::string& step) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : step) h = (h ^ c) * 1099511628211ull;
  return h;
}

inline Map target_map(const data::SliceSample& s, const Map& a3) {
  if (!s.pixel_mask) throw TrainingError("sample " + s.patient_id + ":" + std::to_string(s.slice_index) + " has no mask");
  return losses::mask_to_map(losses::downsample_mask(*s.pixel_mask, a3.rows(), a3.cols()));
}

inline void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw TrainingError(what + " is not finite; aborting");
}

/// Per-sample loss; when `grads` is non-null the gradient scaled by `scale` is accumulated.
using SampleLoss = std::function<double(const model::SegModel&, const data::SliceSample&, double, nn::Gradients*)>;

inline SampleLoss cls_loss(double eps) {
  return [eps](const model::SegModel& m, const data::SliceSample& s, double scale, nn::Gradients* g) {
    const auto f = m.forward_cls(s.image);
    const double loss = losses::binary_cross_entropy(f.prob, s.label, eps);
    if (g) m.backward_cls(f, scale * (f.prob - static_cast<double>(s.label)), *g);
    return loss;
  };
}

inline SampleLoss fs_loss() {
  return [](const model::SegModel& m, const data::SliceSample& s, double scale, nn::Gradients* g) {
    const auto f = m.forward_seg(s.image);
    const Map t = target_map(s, f.fusion.a3);
    const double loss = losses::dice_loss(f.fusion.a3, t);
    if (g) {
      Map d = losses::dice_loss_grad(f.fusion.a3, t);
      for (auto& v : d) v *= scale;
      m.backward_seg(f, d, *g);
    }
    return loss;
  };
}

inline SampleLoss ws_loss(int k, double eps) {
  return [k, eps](const model::SegModel& m, const data::SliceSample& s, double scale, nn::Gradients* g) {
    const auto f = m.forward_seg(s.image);
    const losses::MILBatch b{{f.pooled}, {s.label}, k};
    const double loss = losses::mil_loss(b, eps);
    if (g) {
      Map d = losses::mil_loss_grad(b, eps).front();
      for (auto& v : d) v *= scale;
      m.backward_seg(f, model::mil_pool_backward(f.fusion.a3, d), *g);
    }
    return loss;
  };
}

/// Mean per-sample loss; summed in sample order so it is bit-stable.
inline double mean_loss(const model::SegModel& m, const std::vector<data::SliceSample>& set, const SampleLoss& loss) {
  double s = 0;
  for (const auto& x : set) s += loss(m, x, 0.0, nullptr);
  return s / static_cast<double>(set.size());
}

struct PhaseSpec {
  std::string step;
  int phase = 1;
  double lr = 0.0;
  int patience = 1;
  double min_delta = 0.0;
  std::vector<int> trainable;
  std::vector<int> l2_ids;  // kernels regularised in this step
  bool augment = false;
};

/// One early-stopped optimisation run; the caller decides which weights to keep.
inline EarlyStopping run_phase(model::SegModel& m, const StepData& d, const SampleLoss& loss, const PhaseSpec& ps,
                               const CurriculumConfig& cfg, std::vector<EpochRecord>& log) {
  auto& params = m.params();
  nn::Adam adam(params, ps.trainable, {.learning_rate = ps.lr});
  nn::Gradients grads(params);
  const double l2 = cfg.l2_lambda;
  auto val_loss = [&] { return mean_loss(m, d.val, loss); };
  EarlyStopping stop(ps.patience, ps.min_delta);
  const double v0 = val_loss();
  check_finite(v0, ps.step + " initial validation loss");
  stop.start(v0, params);
  std::vector<std::size_t> order(d.train.size());
  std::vector<double> sample_loss(d.train.size());
  const std::uint64_t tag = step_tag(ps.step);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed({cfg.seed, tag, static_cast<std::uint64_t>(ps.phase), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      grads.zero();
      for (std::size_t j = b0; j < b1; ++j) {
        const std::size_t i = order[j];
        if (ps.augment) {
          const auto x = augment(d.train[i], derive_seed({cfg.seed, tag, static_cast<std::uint64_t>(ps.phase),
                                                          static_cast<std::uint64_t>(epoch), i}),
                                 cfg.augment);
          sample_loss[i] = loss(m, x, scale, &grads);
        } else {
          sample_loss[i] = loss(m, d.train[i], scale, &grads);
        }
      }
      if (l2 > 0 && !ps.l2_ids.empty()) losses::l2_kernel_penalty_grad(params, l2, grads, ps.l2_ids);
      adam.step(params, grads);
    }
    double train = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) / static_cast<double>(sample_loss.size());
    if (l2 > 0 && !ps.l2_ids.empty()) train += losses::l2_kernel_penalty(params, l2, ps.l2_ids);
    const double val = val_loss();
    check_finite(train, ps.step + " training loss");
    check_finite(val, ps.step + " validation loss");
    log.push_back({ps.step, ps.phase, epoch, train, val, ps.lr});
    spdlog::info("step={} phase={} epoch={} train_loss={:.6f} val_loss={:.6f} lr={:.3g}", ps.step, ps.phase, epoch, train,
                 val, ps.lr);
    if (stop.update(val, params)) break;
  }
  return stop;
}

inline void check_sets(const StepData& d, const std::string& step) {
  if (d.train.empty()) throw TrainingError(step + ": empty training set");
  if (d.val.empty()) throw TrainingError(step + ": empty validation set");
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace detail

/// Mean Dice loss of the model's A3 on masked samples.
inline double mean_dice_loss(const model::SegModel& m, const std::vector<data::SliceSample>& set) {
  return detail::mean_loss(m, set, detail::fs_loss());
}

/// Fraction of samples whose classification at 0.5 matches the label.
inline double accuracy(const model::SegModel& m, const std::vector<data::SliceSample>& set) {
  std::size_t ok = 0;
  for (const auto& s : set) ok += (m.classify(s.image) >= 0.5) == (s.label == 1);
  return static_cast<double>(ok) / static_cast<double>(set.size());
}

/// Binary-classification pretraining of backbone + head with BCE.
inline StepRecord pretrain_classification(model::SegModel& m, const StepData& d, const CurriculumConfig& cfg) {
  detail::check_sets(d, kStepCls);
  const auto t0 = std::chrono::steady_clock::now();
  StepRecord r;
  r.step = kStepCls;
  r.lr = cfg.alpha_bin;
  const detail::PhaseSpec ps{kStepCls, 1, cfg.alpha_bin, cfg.cls_stop.patience, cfg.cls_stop.min_delta,
                             detail::concat(m.backbone_param_ids(), m.head_param_ids()), {}, false};
  const auto stop = detail::run_phase(m, d, detail::cls_loss(cfg.mil_eps), ps, cfg, r.epochs);
  if (cfg.cls_stop.restore_best) m.params().restore(stop.best_weights());
  r.initial_val_loss = stop.initial_loss();
  r.best_val_loss = stop.best_loss();
  r.best_epoch = stop.best_epoch();
  r.final_val_loss = detail::mean_loss(m, d.val, detail::cls_loss(cfg.mil_eps));
  r.val_accuracy = accuracy(m, d.val);
  r.weights = m.params().snapshot();
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// Fully supervised Dice step: phase 1 at `lr`, restore best, phase 2 at lr / divisor.
inline StepRecord train_fs(model::SegModel& m, const StepData& d, const CurriculumConfig& cfg, double lr) {
  detail::check_sets(d, kStepFs);
  for (const auto& s : d.train)
    if (!s.pixel_mask) throw TrainingError("FS: training sample without a pixel mask");
  const auto t0 = std::chrono::steady_clock::now();
  StepRecord r;
  r.step = kStepFs;
  r.lr = lr;
  const auto loss = detail::fs_loss();
  const auto trainable = detail::concat(m.backbone_param_ids(), m.fusion_param_ids());
  detail::PhaseSpec ps{kStepFs, 1, lr, cfg.fs_stop.patience, cfg.fs_stop.min_delta, trainable, {}, cfg.augment.enabled};
  auto stop = detail::run_phase(m, d, loss, ps, cfg, r.epochs);
  r.initial_val_loss = stop.initial_loss();
  if (cfg.fs_stop.restore_best) m.params().restore(stop.best_weights());
  if (cfg.fs_stop.second_phase) {
    ps.phase = 2;
    ps.lr = lr / cfg.fs_stop.second_phase->lr_divisor;
    ps.patience = cfg.fs_stop.second_phase->patience;
    stop = detail::run_phase(m, d, loss, ps, cfg, r.epochs);
    if (cfg.fs_stop.restore_best) m.params().restore(stop.best_weights());
  }
  r.best_val_loss = stop.best_loss();
  r.best_epoch = stop.best_epoch();
  r.final_val_loss = detail::mean_loss(m, d.val, loss);
  r.val_dice = r.final_val_loss;
  r.weights = m.params().snapshot();
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// Weakly supervised MIL step with the l2 kernel penalty. A run that never improves on its
/// initial validation loss restarts once from the pre-step weights at lr / 10.
inline StepRecord train_ws(model::SegModel& m, const StepData& d, const CurriculumConfig& cfg, double lr) {
  detail::check_sets(d, kStepWs);
  const auto t0 = std::chrono::steady_clock::now();
  StepRecord r;
  r.step = kStepWs;
  r.lr = lr;
  const auto loss = detail::ws_loss(cfg.k, cfg.mil_eps);
  const auto pre = m.params().snapshot();
  const auto backbone = m.backbone_param_ids();
  detail::PhaseSpec ps{kStepWs, 1, lr, cfg.ws_stop.patience, cfg.ws_stop.min_delta,
                       detail::concat(backbone, m.fusion_param_ids()), backbone, false};
  auto stop = detail::run_phase(m, d, loss, ps, cfg, r.epochs);
  r.initial_val_loss = stop.initial_loss();
  if (!stop.improved() && cfg.ws_stop.on_stall == OnStall::restart_lr_div_10) {
    spdlog::info("step={} stalled at lr={:.3g}; restarting from pre-step weights at lr={:.3g}", kStepWs, lr, lr / 10);
    r.restarted = true;
    m.params().restore(pre);
    ps.phase = 2;
    ps.lr = lr / 10.0;
    stop = detail::run_phase(m, d, loss, ps, cfg, r.epochs);
    if (!stop.improved()) {
      spdlog::warn("step={} stalled again after restart; keeping pre-step weights", kStepWs);
      r.flagged = true;
    }
  }
  if (r.flagged)
    m.params().restore(pre);
  else if (cfg.ws_stop.restore_best)
    m.params().restore(stop.best_weights());
  r.best_val_loss = stop.best_loss();
  r.best_epoch = stop.best_epoch();
  r.final_val_loss = detail::mean_loss(m, d.val, loss);
  r.val_dice = mean_dice_loss(m, d.val);
  r.weights = m.params().snapshot();
  r.seconds = detail::seconds_since(t0);
  return r;
}

}  // namespace wsseg::training
