#include "tpgm/training.hpp"

#include <algorithm>
#include <cmath>

#include "tpgm/errors.hpp"

namespace tpgm {

std::uint64_t stream_seed(std::uint64_t base, StreamTag tag) {
  return derive_seed(base, static_cast<std::uint64_t>(tag));
}

MinibatchStream::MinibatchStream(const Batch& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), rng_(seed) {
  data.validate();
  if (batch_size_ == 0 || batch_size_ > data.size()) batch_size_ = data.size();
}

std::size_t MinibatchStream::batches_per_epoch() const {
  return (data_->size() + batch_size_ - 1) / batch_size_;
}

Batch MinibatchStream::next() {
  if (cursor_ >= order_.size()) {
    order_ = rng_.permutation(data_->size());
    cursor_ = 0;
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<std::size_t> rows(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  // Keep row order canonical within a batch so sums are reproducible.
  std::sort(rows.begin(), rows.end());
  return data_->subset(rows);
}

std::int64_t total_steps(const Batch& train, const FineTuneConfig& cfg) {
  if (cfg.epochs < 1) throw ContractError("epochs must be >= 1");
  const std::size_t bs =
      cfg.batch_size == 0 || cfg.batch_size > train.size() ? train.size() : cfg.batch_size;
  const std::size_t per_epoch = (train.size() + bs - 1) / bs;
  return static_cast<std::int64_t>(per_epoch) * cfg.epochs;
}

Optimizer make_model_optimizer(const FineTuneConfig& cfg, std::int64_t total) {
  if (!(cfg.learning_rate > 0.0)) throw ContractError("model learning rate must be > 0");
  OptimizerSettings s;
  s.kind = OptimizerKind::Sgd;
  s.learning_rate = cfg.learning_rate;
  s.schedule = cfg.schedule;
  s.total_steps = std::max<std::int64_t>(total, 1);
  return Optimizer(s);
}

double model_step(Model& model, const Batch& batch, LossKind loss, Optimizer& optimizer,
                  std::int64_t step_index, const FineTuneHooks* hooks) {
  LossAndGrads lg = loss_and_grads(model, batch, loss);
  double value = lg.loss;
  if (hooks && hooks->adjust_gradients) value += hooks->adjust_gradients(model, lg.grads);
  if (!std::isfinite(value)) {
    throw NumericDomainError("non-finite training loss at step " + std::to_string(step_index));
  }
  std::vector<std::string> names;
  names.reserve(model.group_count());
  std::vector<Tensor> params = model.parameters();
  for (const auto& g : model.groups()) names.push_back(g.name);
  optimizer.step(params, lg.grads, names);
  model.set_parameters(params);
  if (hooks && hooks->after_step) hooks->after_step(model);
  return value;
}

std::vector<double> fine_tune(Model& model, const Batch& train, const FineTuneConfig& cfg,
                              const FineTuneHooks& hooks) {
  const std::int64_t steps = total_steps(train, cfg);
  MinibatchStream stream(train, cfg.batch_size, stream_seed(cfg.seed, StreamTag::TrainBatches));
  Optimizer opt = make_model_optimizer(cfg, steps);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    losses.push_back(model_step(model, stream.next(), cfg.loss, opt, t, &hooks));
  }
  return losses;
}

}  // namespace tpgm
