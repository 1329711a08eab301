#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "wsseg/model/backbone.hpp"
#include "wsseg/util/kv_config.hpp"

namespace wsseg::training {

enum class StepOrder { fs_then_mil, mil_then_fs };

inline std::string to_string(StepOrder o) { return o == StepOrder::fs_then_mil ? "fs-mil" : "mil-fs"; }

inline StepOrder parse_order(const std::string& s) {
  if (s == "fs-mil" || s == "FS_then_MIL") return StepOrder::fs_then_mil;
  if (s == "mil-fs" || s == "MIL_then_FS") return StepOrder::mil_then_fs;
  throw ConfigParseError("order must be fs-mil or mil-fs, got '" + s + "'");
}

enum class OnStall { none, restart_lr_div_10 };

struct SecondPhase {
  double lr_divisor = 10.0;
  int patience = 5;
};

struct EarlyStopRule {
  int patience = 3;
  double min_delta = 0.0;
  bool restore_best = true;
  OnStall on_stall = OnStall::none;
  std::optional<SecondPhase> second_phase;

  void validate(const std::string& what) const {
    if (patience < 1) throw std::invalid_argument(what + ": patience must be >= 1");
    if (min_delta < 0) throw std::invalid_argument(what + ": min_delta must be >= 0");
    if (second_phase && (second_phase->patience < 1 || !(second_phase->lr_divisor > 0)))
      throw std::invalid_argument(what + ": bad second phase");
  }
};

struct AugmentConfig {
  bool enabled = true;
  double max_rotation_deg = 15.0;
  double max_shift = 0.10;  // fraction of each axis
};

/// Every hyperparameter of a curriculum run.
struct CurriculumConfig {
  StepOrder order = StepOrder::fs_then_mil;
  bool use_cls_pretrain = true;
  bool ws_enabled = true;
  int k = 4;
  double l2_lambda = 5e-6;
  int n_fs = 250;
  /// Use every annotated training positive (plus as many negatives) instead of n_fs.
  bool n_fs_all = false;
  double alpha_bin = 5e-5;
  std::optional<double> alpha_fs;  // nullopt = heuristic
  std::optional<double> alpha_ws;  // nullopt = heuristic
  std::uint64_t seed = 0;
  int batch_size = 32;
  int max_epochs = 100;
  double mil_eps = 1e-7;
  double group_threshold = 0.10;
  double val_fraction = 0.10;
  double test_fraction = 0.20;
  AugmentConfig augment;
  EarlyStopRule cls_stop{3, 0.0, true, OnStall::none, std::nullopt};
  EarlyStopRule fs_stop{15, 0.0, true, OnStall::none, SecondPhase{10.0, 5}};
  EarlyStopRule ws_stop{2, 0.01, true, OnStall::restart_lr_div_10, std::nullopt};
  model::BackboneSpec backbone;

  void validate() const {
    if (k < 1 || k > 12) throw std::invalid_argument("K must be in [1, 12]");
    if (n_fs < 1) throw std::invalid_argument("n_fs must be >= 1");
    // Zero rates are allowed: they give the parameter-identity check.
    for (double r : {alpha_bin, alpha_fs.value_or(0.0), alpha_ws.value_or(0.0)})
      if (!(r >= 0.0)) throw std::invalid_argument("learning rates must be >= 0");
    if (l2_lambda < 0) throw std::invalid_argument("l2 lambda must be >= 0");
    if (batch_size < 1 || max_epochs < 1) throw std::invalid_argument("batch_size and max_epochs must be >= 1");
    if (!(mil_eps > 0 && mil_eps < 0.5)) throw std::invalid_argument("mil_eps must be in (0, 0.5)");
    if (!(group_threshold > 0 && group_threshold <= 1)) throw std::invalid_argument("group threshold must be in (0, 1]");
    if (val_fraction < 0 || val_fraction >= 1 || test_fraction < 0 || test_fraction >= 1)
      throw std::invalid_argument("split fractions must be in [0, 1)");
    if (augment.max_rotation_deg < 0 || augment.max_shift < 0 || augment.max_shift >= 1)
      throw std::invalid_argument("augmentation ranges out of bounds");
    cls_stop.validate("cls early stopping");
    fs_stop.validate("fs early stopping");
    ws_stop.validate("ws early stopping");
  }

  static CurriculumConfig from_config(const KeyValueConfig& kv) {
    CurriculumConfig c;
    c.order = parse_order(kv.get_string("order", to_string(c.order)));
    c.use_cls_pretrain = kv.get_bool("use_cls_pretrain", c.use_cls_pretrain);
    c.ws_enabled = kv.get_bool("ws_enabled", c.ws_enabled);
    c.k = static_cast<int>(kv.get_int("k", c.k));
    c.l2_lambda = kv.get_double("l2_lambda", c.l2_lambda);
    const std::string nfs = kv.get_string("n_fs", std::to_string(c.n_fs));
    if (nfs == "all") {
      c.n_fs_all = true;
    } else {
      c.n_fs = static_cast<int>(kv.get_int("n_fs", c.n_fs));
    }
    c.alpha_bin = kv.get_double("alpha_bin", c.alpha_bin);
    auto rate = [&](const std::string& key) -> std::optional<double> {
      const std::string v = kv.get_string(key, "heuristic");
      if (v == "heuristic") return std::nullopt;
      return KeyValueConfig::to_double(key, v);
    };
    c.alpha_fs = rate("alpha_fs");
    c.alpha_ws = rate("alpha_ws");
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
    c.max_epochs = static_cast<int>(kv.get_int("max_epochs", c.max_epochs));
    c.mil_eps = kv.get_double("mil_eps", c.mil_eps);
    c.group_threshold = kv.get_double("group_threshold", c.group_threshold);
    c.val_fraction = kv.get_double("val_fraction", c.val_fraction);
    c.test_fraction = kv.get_double("test_fraction", c.test_fraction);
    c.augment.enabled = kv.get_bool("augment", c.augment.enabled);
    c.augment.max_rotation_deg = kv.get_double("augment_max_rotation_deg", c.augment.max_rotation_deg);
    c.augment.max_shift = kv.get_double("augment_max_shift", c.augment.max_shift);
    c.cls_stop.patience = static_cast<int>(kv.get_int("cls_patience", c.cls_stop.patience));
    c.fs_stop.patience = static_cast<int>(kv.get_int("fs_patience", c.fs_stop.patience));
    c.fs_stop.second_phase->patience = static_cast<int>(kv.get_int("fs_phase2_patience", c.fs_stop.second_phase->patience));
    c.fs_stop.second_phase->lr_divisor = kv.get_double("fs_phase2_lr_divisor", c.fs_stop.second_phase->lr_divisor);
    c.ws_stop.patience = static_cast<int>(kv.get_int("ws_patience", c.ws_stop.patience));
    c.ws_stop.min_delta = kv.get_double("ws_min_delta", c.ws_stop.min_delta);
    c.ws_stop.on_stall = kv.get_bool("ws_restart_on_stall", true) ? OnStall::restart_lr_div_10 : OnStall::none;
    c.backbone.id = kv.get_string("backbone", c.backbone.id);
    c.backbone.weights_path = kv.get_string("pretrained_weights", c.backbone.weights_path);
    c.backbone.seed = static_cast<std::uint64_t>(kv.get_int("init_seed", static_cast<long long>(c.seed)));
    c.validate();
    return c;
  }

  /// Fully resolved snapshot; from_config(to_config()) reproduces this config.
  KeyValueConfig to_config() const {
    KeyValueConfig kv;
    kv.set("order", to_string(order));
    kv.set("use_cls_pretrain", use_cls_pretrain ? "true" : "false");
    kv.set("ws_enabled", ws_enabled ? "true" : "false");
    kv.set("k", std::to_string(k));
    kv.set("l2_lambda", format_double(l2_lambda));
    kv.set("n_fs", n_fs_all ? "all" : std::to_string(n_fs));
    kv.set("alpha_bin", format_double(alpha_bin));
    kv.set("alpha_fs", alpha_fs ? format_double(*alpha_fs) : "heuristic");
    kv.set("alpha_ws", alpha_ws ? format_double(*alpha_ws) : "heuristic");
    kv.set("seed", std::to_string(seed));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("max_epochs", std::to_string(max_epochs));
    kv.set("mil_eps", format_double(mil_eps));
    kv.set("group_threshold", format_double(group_threshold));
    kv.set("val_fraction", format_double(val_fraction));
    kv.set("test_fraction", format_double(test_fraction));
    kv.set("augment", augment.enabled ? "true" : "false");
    kv.set("augment_max_rotation_deg", format_double(augment.max_rotation_deg));
    kv.set("augment_max_shift", format_double(augment.max_shift));
    kv.set("cls_patience", std::to_string(cls_stop.patience));
    kv.set("fs_patience", std::to_string(fs_stop.patience));
    kv.set("fs_phase2_patience", std::to_string(fs_stop.second_phase ? fs_stop.second_phase->patience : 0));
    kv.set("fs_phase2_lr_divisor", format_double(fs_stop.second_phase ? fs_stop.second_phase->lr_divisor : 10.0));
    kv.set("ws_patience", std::to_string(ws_stop.patience));
    kv.set("ws_min_delta", format_double(ws_stop.min_delta));
    kv.set("ws_restart_on_stall", ws_stop.on_stall == OnStall::restart_lr_div_10 ? "true" : "false");
    kv.set("backbone", backbone.id);
    kv.set("pretrained_weights", backbone.weights_path);
    kv.set("init_seed", std::to_string(backbone.seed));
    return kv;
  }
};

/// Learning rates for the FS and WS steps as a function of the annotated-set size.
inline std::pair<double, double> lr_heuristic(int n_fs, StepOrder order) {
  if (n_fs < 1) throw std::invalid_argument("lr_heuristic: n_fs must be >= 1");
  const double n = static_cast<double>(n_fs);
  if (order == StepOrder::fs_then_mil) return {5e-2 / n, 5e-3 / (n * n)};
  return {5e-6, 5e-6 / n};
}

}  // namespace wsseg::training
