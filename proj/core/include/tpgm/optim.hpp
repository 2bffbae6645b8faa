#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tpgm/tensor.hpp"

namespace tpgm {

enum class OptimizerKind { Sgd, Adam };
enum class LrSchedule { Constant, Cosine };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Sgd;
  double learning_rate = 1e-2;
  LrSchedule schedule = LrSchedule::Constant;
  std::int64_t total_steps = 1;  // cosine horizon
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// base * (1 + cos(pi * step / total)) / 2. Requires 0 <= step <= total, total >= 1.
double cosine_lr(double base, std::int64_t step, std::int64_t total);

/// SGD or bias-corrected Adam. Holds per-parameter moment estimates for Adam;
/// no weight decay is applied.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings);

  /// params[i] -= update(grads[i]). `names` (optional, aligned) only feeds
  /// error messages. Throws NumericDomainError on a non-finite gradient.
  void step(std::span<Tensor> params, std::span<const Tensor> grads,
            std::span<const std::string> names = {});

  /// Learning rate the next step will use.
  double current_lr() const;
  std::int64_t step_count() const { return step_count_; }
  const OptimizerSettings& settings() const { return settings_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void reset();

 private:
  OptimizerSettings settings_;
  std::int64_t step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace tpgm
