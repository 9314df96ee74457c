#pragma once

// AdamW with decoupled weight decay, plus a reduce-on-plateau learning-rate
// scheduler. The optimizer owns per-parameter moment buffers keyed by name,
// so it survives checkpoint reloads of the store it drives.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>

#include "wiflow/params.hpp"
#include "wiflow/tensor.hpp"

namespace wiflow {

template <typename S>
class AdamW {
 public:
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;

  AdamW() = default;
  AdamW(double lr_, double weight_decay_) : lr(lr_), weight_decay(weight_decay_) {}

  std::int64_t steps_taken() const { return step_; }
  std::int64_t steps_skipped() const { return skipped_; }

  // Applies one update to every trainable parameter. If any gradient entry is
  // non-finite the whole step is skipped (parameters and moments untouched)
  // and the skip is counted; returns whether the step was applied.
  bool step(ParameterStore<S>& params) {
    for (const auto& name : params.names()) {
      if (!params.trainable(name)) continue;
      const Tensor<S>& t = params.at(name);
      if (t.has_grad() && !t.grad().allFinite()) {
        ++skipped_;
        return false;
      }
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));

    for (const auto& name : params.names()) {
      if (!params.trainable(name)) continue;
      Tensor<S>& t = params.at(name);
      auto& mv = moments_[name];
      if (mv.m.size() != t.size()) {
        mv.m = VecX<double>::Zero(t.size());
        mv.v = VecX<double>::Zero(t.size());
      }
      const bool has_grad = t.has_grad();
      auto p = t.flat();
      for (std::int64_t i = 0; i < t.size(); ++i) {
        const double g = has_grad ? static_cast<double>(t.grad()[i]) : 0.0;
        double& m = mv.m[i];
        double& v = mv.v[i];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        double x = static_cast<double>(p[i]);
        x -= lr * weight_decay * x;  // decoupled decay, not folded into the moments
        x -= lr * m_hat / (std::sqrt(v_hat) + eps);
        p[i] = static_cast<S>(x);
      }
    }
    return true;
  }

 private:
  struct Moments {
    VecX<double> m, v;
  };
  std::int64_t step_ = 0;
  std::int64_t skipped_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

// Halves the learning rate when the monitored value (lower is better) has not
// strictly improved for `patience` consecutive epochs; never drops below
// min_lr. Any improvement resets the stall counter.
class PlateauScheduler {
 public:
  double factor = 0.5;
  int patience = 3;
  double min_lr = 1e-7;

  explicit PlateauScheduler(double initial_lr) : lr_(initial_lr) {}
  PlateauScheduler(double initial_lr, double factor_, int patience_, double min_lr_)
      : factor(factor_), patience(patience_), min_lr(min_lr_), lr_(initial_lr) {}

  double lr() const { return lr_; }
  int stalled_epochs() const { return bad_; }

  // Feed one epoch's monitored value; returns the lr to use afterwards.
  double observe(double value) {
    if (value < best_) {
      best_ = value;
      bad_ = 0;
    } else {
      ++bad_;
      if (bad_ >= patience) {
        lr_ = std::max(lr_ * factor, min_lr);
        bad_ = 0;
      }
    }
    return lr_;
  }

 private:
  double lr_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

}  // namespace wiflow
