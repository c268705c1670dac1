#include "moincl/optim.hpp"

#include <cmath>

namespace moincl {

void AdamW::step(ModelState& state, const GradMap& grads, double learning_rate) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Matrix& p = state.mutable_at(name);
    auto [mit, m_new] = m_.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
    auto [vit, v_new] = v_.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p *= (1.0 - learning_rate * weight_decay_);
    p.array() -= learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  }
}

double cosine_lr(double base, long step, long total_steps) {
  if (total_steps <= 0) return base;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * base * (1.0 + std::cos(M_PI * progress));
}

}  // namespace moincl
