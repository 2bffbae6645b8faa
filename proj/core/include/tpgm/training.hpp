#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tpgm/models.hpp"
#include "tpgm/optim.hpp"
#include "tpgm/rng.hpp"

namespace tpgm {

/// Stream tags for derive_seed(); every consumer of randomness in a run gets
/// its own stream so that adding one does not perturb the others.
enum class StreamTag : std::uint64_t {
  TrainBatches = 1,
  ValidationBatches = 2,
  ModelInit = 3,
  Dataset = 4,
  Pretraining = 5,
};

std::uint64_t stream_seed(std::uint64_t base, StreamTag tag);

/// Plain first-order fine-tuning settings (the model step of every method).
struct FineTuneConfig {
  LossKind loss = LossKind::Mse;
  double learning_rate = 1e-2;
  LrSchedule schedule = LrSchedule::Constant;
  int epochs = 10;
  std::size_t batch_size = 32;  // 0 means full batch
  std::uint64_t seed = 0;
};

/// Cycles through a dataset in shuffled minibatches, reshuffling each epoch.
class MinibatchStream {
 public:
  MinibatchStream(const Batch& data, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t batches_per_epoch() const;

 private:
  const Batch* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

std::int64_t total_steps(const Batch& train, const FineTuneConfig& cfg);
Optimizer make_model_optimizer(const FineTuneConfig& cfg, std::int64_t total);

/// Optional per-step customizations used by the baseline methods.
struct FineTuneHooks {
  /// May edit gradients in place; returns a penalty added to the logged loss.
  std::function<double(const Model&, std::vector<Tensor>&)> adjust_gradients;
  /// Runs after the optimizer step (e.g. a fixed-radius projection).
  std::function<void(Model&)> after_step;
};

/// One model step: gradients on `batch`, hooks, optimizer update. Returns the
/// loss (including any hook penalty). Throws NumericDomainError, naming
/// `step_index`, when the loss is not finite.
double model_step(Model& model, const Batch& batch, LossKind loss, Optimizer& optimizer,
                  std::int64_t step_index, const FineTuneHooks* hooks = nullptr);

/// Runs cfg.epochs of minibatch training. Returns the per-step losses.
std::vector<double> fine_tune(Model& model, const Batch& train, const FineTuneConfig& cfg,
                              const FineTuneHooks& hooks = {});

}  // namespace tpgm
