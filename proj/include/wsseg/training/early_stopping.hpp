#pragma once

#include <limits>
#include <vector>

#include "wsseg/nn/params.hpp"

namespace wsseg::training {

/// Patience-based stopping on a validation loss. The epoch-0 (pre-training) loss is the
/// baseline; the stored best weights always belong to the minimum loss seen, while the
/// patience counter only resets on an improvement larger than min_delta.
class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  void start(double initial_loss, const nn::ParamStore& ps) {
    initial_ = reference_ = best_ = initial_loss;
    best_epoch_ = 0;
    wait_ = 0;
    epoch_ = 0;
    improved_ = false;
    best_weights_ = ps.snapshot();
  }

  /// Returns true when training should stop after this epoch.
  bool update(double val_loss, const nn::ParamStore& ps) {
    ++epoch_;
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      best_weights_ = ps.snapshot();
    }
    if (val_loss < reference_ - min_delta_) {
      reference_ = val_loss;
      wait_ = 0;
      improved_ = true;
    } else {
      ++wait_;
    }
    return wait_ >= patience_;
  }

  double initial_loss() const { return initial_; }
  double best_loss() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs_seen() const { return epoch_; }
  /// Whether any epoch beat the baseline by more than min_delta.
  bool improved() const { return improved_; }
  const std::vector<std::vector<double>>& best_weights() const { return best_weights_; }

 private:
  int patience_;
  double min_delta_;
  double initial_ = std::numeric_limits<double>::infinity();
  double reference_ = std::numeric_limits<double>::infinity();
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int wait_ = 0;
  int epoch_ = 0;
  bool improved_ = false;
  std::vector<std::vector<double>> best_weights_;
};

}  // namespace wsseg::training
