#pragma once

#include <span>
#include <vector>

#include "moincl/model.hpp"

namespace moincl {

/// Loss value with its gradient w.r.t. the logits that produced the
/// distribution (softmax rows), ready for TrainingPass::backward.
struct LossGrad {
  double value = 0.0;
  Matrix dlogits;
};

/// Mean over active positions of -log p(target). Throws "empty target" when
/// every position is masked.
double cross_entropy_seq(const SequenceDistribution& pred, std::span<const int> targets);
LossGrad cross_entropy_seq_grad(const SequenceDistribution& pred, std::span<const int> targets);

/// Floor at 1e-8 then renormalize each row.
SequenceDistribution smooth_distribution(const SequenceDistribution& q);

/// Mean over active positions of sum_v p ln(p/q), with q smoothed first.
/// `p` is the current model's distribution; the gradient flows into p only.
double kl_divergence_seq(const SequenceDistribution& p, const SequenceDistribution& q);
LossGrad kl_divergence_seq_grad(const SequenceDistribution& p, const SequenceDistribution& q);

/// Diagonal Fisher importance with its anchor parameters.
struct FisherDiag {
  GradMap importance;
  GradMap anchor;

  bool empty() const { return importance.empty(); }
};

/// (lambda / 2) * sum_k F_k (theta_k - anchor_k)^2 over the Fisher's tensors.
double ewc_penalty(const ModelState& params, const FisherDiag& fisher, double ewc_lambda);
/// Adds lambda * F * (theta - anchor) into `grads` for tensors present there.
double ewc_penalty_grad(const ModelState& params, const FisherDiag& fisher, double ewc_lambda,
                        GradMap& grads);

/// Element-wise alpha * current + (1 - alpha) * old.
Matrix fuse_params(const Matrix& current, const Matrix& old, double alpha);
/// Applies fuse_params to every LM adapter tensor of `current` in place.
void fuse_adapters(ModelState& current, const ModelState& old, double alpha);

}  // namespace moincl
