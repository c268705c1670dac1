#include "moincl/losses.hpp"

#include <cmath>

#include "moincl/error.hpp"

namespace moincl {
namespace {

constexpr double kFloor = 1e-8;

void check_targets(const SequenceDistribution& pred, std::span<const int> targets) {
  if (static_cast<int>(targets.size()) != pred.positions() ||
      pred.mask.size() != targets.size()) {
    throw Error("target length " + std::to_string(targets.size()) + " does not match " +
                std::to_string(pred.positions()) + " predicted positions");
  }
  if (pred.active_positions() == 0) throw Error("empty target");
}

void check_same_shape(const SequenceDistribution& p, const SequenceDistribution& q) {
  if (p.probs.rows() != q.probs.rows() || p.probs.cols() != q.probs.cols() ||
      p.mask != q.mask) {
    throw Error("distribution shape mismatch");
  }
  if (p.active_positions() == 0) throw Error("empty target");
}

double plogp_ratio(double p, double q) { return p > 0.0 ? p * (std::log(p) - std::log(q)) : 0.0; }

}  // namespace

double cross_entropy_seq(const SequenceDistribution& pred, std::span<const int> targets) {
  check_targets(pred, targets);
  double sum = 0.0;
  for (int r = 0; r < pred.positions(); ++r) {
    if (!pred.mask[static_cast<std::size_t>(r)]) continue;
    const double p = pred.probs(r, targets[static_cast<std::size_t>(r)]);
    sum -= std::log(std::max(p, 1e-300));
  }
  return sum / pred.active_positions();
}

LossGrad cross_entropy_seq_grad(const SequenceDistribution& pred, std::span<const int> targets) {
  LossGrad out;
  out.value = cross_entropy_seq(pred, targets);
  const double n = pred.active_positions();
  out.dlogits = Matrix::Zero(pred.probs.rows(), pred.probs.cols());
  for (int r = 0; r < pred.positions(); ++r) {
    if (!pred.mask[static_cast<std::size_t>(r)]) continue;
    out.dlogits.row(r) = pred.probs.row(r) / n;
    out.dlogits(r, targets[static_cast<std::size_t>(r)]) -= 1.0 / n;
  }
  return out;
}

SequenceDistribution smooth_distribution(const SequenceDistribution& q) {
  SequenceDistribution s = q;
  for (int r = 0; r < s.probs.rows(); ++r) {
    auto row = s.probs.row(r);
    row = row.cwiseMax(kFloor);
    row /= row.sum();
  }
  return s;
}

double kl_divergence_seq(const SequenceDistribution& p, const SequenceDistribution& q) {
  check_same_shape(p, q);
  const SequenceDistribution qs = smooth_distribution(q);
  double total = 0.0;
  for (int r = 0; r < p.positions(); ++r) {
    if (!p.mask[static_cast<std::size_t>(r)]) continue;
    for (int v = 0; v < p.probs.cols(); ++v) total += plogp_ratio(p.probs(r, v), qs.probs(r, v));
  }
  return total / p.active_positions();
}

LossGrad kl_divergence_seq_grad(const SequenceDistribution& p, const SequenceDistribution& q) {
  check_same_shape(p, q);
  const SequenceDistribution qs = smooth_distribution(q);
  const double n = p.active_positions();
  LossGrad out;
  out.dlogits = Matrix::Zero(p.probs.rows(), p.probs.cols());
  for (int r = 0; r < p.positions(); ++r) {
    if (!p.mask[static_cast<std::size_t>(r)]) continue;
    double kl = 0.0;
    for (int v = 0; v < p.probs.cols(); ++v) kl += plogp_ratio(p.probs(r, v), qs.probs(r, v));
    out.value += kl;
    // d/dz_j sum_v p_v (ln p_v - ln q_v) = p_j (ln p_j - ln q_j - KL)
    for (int v = 0; v < p.probs.cols(); ++v) {
      const double pv = p.probs(r, v);
      if (pv > 0.0) out.dlogits(r, v) = pv * (std::log(pv) - std::log(qs.probs(r, v)) - kl) / n;
    }
  }
  out.value /= n;
  return out;
}

double ewc_penalty(const ModelState& params, const FisherDiag& fisher, double ewc_lambda) {
  double sum = 0.0;
  for (const auto& [name, f] : fisher.importance) {
    const Matrix& theta = params.at(name);
    auto it = fisher.anchor.find(name);
    if (it == fisher.anchor.end()) throw Error("fisher anchor missing for " + name);
    const Matrix& anchor = it->second;
    if (theta.rows() != f.rows() || theta.cols() != f.cols() || anchor.rows() != f.rows() ||
        anchor.cols() != f.cols()) {
      throw Error("fisher shape mismatch for " + name);
    }
    sum += (f.array() * (theta - anchor).array().square()).sum();
  }
  return 0.5 * ewc_lambda * sum;
}

double ewc_penalty_grad(const ModelState& params, const FisherDiag& fisher, double ewc_lambda,
                        GradMap& grads) {
  const double value = ewc_penalty(params, fisher, ewc_lambda);
  for (const auto& [name, f] : fisher.importance) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    git->second.array() += ewc_lambda * f.array() * (params.at(name) - fisher.anchor.at(name)).array();
  }
  return value;
}

Matrix fuse_params(const Matrix& current, const Matrix& old, double alpha) {
  if (current.rows() != old.rows() || current.cols() != old.cols()) {
    throw Error("fusion shape mismatch");
  }
  if (alpha < 0.0 || alpha > 1.0) throw Error("fusion alpha outside [0, 1]");
  if (alpha == 1.0) return current;
  if (alpha == 0.0) return old;
  // old + alpha * (current - old) is exact when current == old; the clamp keeps
  // rounding from leaving the segment.
  const Matrix lo = current.cwiseMin(old);
  const Matrix hi = current.cwiseMax(old);
  return (old + alpha * (current - old)).cwiseMax(lo).cwiseMin(hi);
}

void fuse_adapters(ModelState& current, const ModelState& old, double alpha) {
  for (const auto& name : current.names(ParamGroup::LmAdapter)) {
    Matrix& cur = current.mutable_at(name);
    cur = fuse_params(cur, old.at(name), alpha);
  }
}

}  // namespace moincl
