#pragma once

#include <map>
#include <string>

#include "moincl/model.hpp"

namespace moincl {

/// Adam with decoupled weight decay. Moment buffers are created lazily per
/// parameter name.
class AdamW {
 public:
  explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ModelState& state, const GradMap& grads, double learning_rate);
  long steps() const { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

/// Cosine decay from `base` at step 0 towards zero at `total_steps`.
double cosine_lr(double base, long step, long total_steps);

}  // namespace moincl
