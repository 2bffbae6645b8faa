#include "tpgm/optim.hpp"

#include <cmath>
#include <numbers>

#include "tpgm/errors.hpp"

namespace tpgm {

double cosine_lr(double base, std::int64_t step, std::int64_t total) {
  if (total < 1) throw ContractError("cosine_lr: total must be >= 1");
  if (step < 0 || step > total) {
    throw ContractError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total) + "]");
  }
  if (step == total) return 0.0;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(phase));
}

Optimizer::Optimizer(OptimizerSettings settings) : settings_(settings) {
  if (!(settings_.learning_rate >= 0.0) || !std::isfinite(settings_.learning_rate)) {
    throw ContractError("optimizer: learning rate must be finite and >= 0");
  }
  if (settings_.schedule == LrSchedule::Cosine && settings_.total_steps < 1) {
    throw ContractError("optimizer: cosine schedule needs total_steps >= 1");
  }
}

double Optimizer::current_lr() const {
  if (settings_.schedule == LrSchedule::Constant) return settings_.learning_rate;
  return cosine_lr(settings_.learning_rate, step_count_, settings_.total_steps);
}

void Optimizer::reset() {
  step_count_ = 0;
  m_.clear();
  v_.clear();
}

void Optimizer::step(std::span<Tensor> params, std::span<const Tensor> grads,
                     std::span<const std::string> names) {
  if (params.size() != grads.size()) {
    throw ContractError("optimizer: " + std::to_string(params.size()) + " params but " +
                        std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "optimizer step");
    if (!grads[i].all_finite()) {
      const std::string id = i < names.size() ? names[i] : "#" + std::to_string(i);
      throw NumericDomainError("optimizer: non-finite gradient in group " + id + " at step " +
                               std::to_string(step_count_));
    }
  }

  const double lr = current_lr();
  if (settings_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].data();
      auto g = grads[i].data();
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
    }
    ++step_count_;
    return;
  }

  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Tensor::zeros_like(p));
      v_.push_back(Tensor::zeros_like(p));
    }
  }
  if (m_.size() != params.size()) {
    throw ContractError("optimizer: parameter list changed between steps");
  }
  ++step_count_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], m_[i], "adam state");
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + settings_.epsilon);
    }
  }
}

}  // namespace tpgm
