#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tpgm/models.hpp"
#include "tpgm/projection.hpp"
#include "tpgm/training.hpp"

namespace tpgm {

/// When the projection update and projection run inside the training loop.
class ProjectionFrequency {
 public:
  /// Fires when step % f == 0 (so always at step 0).
  static ProjectionFrequency every(std::int64_t f);
  /// Fires only after the last training step.
  static ProjectionFrequency once_at_end();

  bool fires(std::int64_t step, std::int64_t total_steps) const;
  bool is_once_at_end() const { return period_ == 0; }
  std::int64_t period() const { return period_; }

 private:
  explicit ProjectionFrequency(std::int64_t period) : period_(period) {}
  std::int64_t period_;  // 0 encodes once-at-end
};

struct TpgmConfig {
  ProjectionKind projection_kind = ProjectionKind::L2;
  ProjectionFrequency f_proj = ProjectionFrequency::every(1);
  int t_proj = 1;
  FineTuneConfig model;
  double radius_lr = RadiusVector::kDefaultLearningRate;
  OptimizerKind radius_optimizer = OptimizerKind::Adam;
  double tv_mu = 0.0;
  double radius_l2_mu = 0.0;
  double gamma_init = 1e-8;
  std::size_t val_batch_size = 0;     // 0 = whole validation set
  bool resample_val = true;           // draw a fresh validation batch per inner step
  bool persist_radius_state = true;   // keep radius optimizer moments across calls

  /// Throws ContractError on out-of-range settings.
  void validate() const;
};

struct ProjectionEvent {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::vector<double> gammas;
  std::vector<double> alphas;
  std::vector<double> distances;  // constraint norm of (theta~ - theta0)
};

struct TrainingTrace {
  std::vector<std::string> group_names;
  std::vector<int> layer_index;
  std::vector<int> block_id;
  std::vector<double> train_loss;  // one per model step
  std::vector<ProjectionEvent> events;
};

/// CSV columns: step,event,group,layer_index,block_id,gamma,alpha,distance,train_loss,val_loss
void write_trace_csv(std::ostream& out, const TrainingTrace& trace);
TrainingTrace read_trace_csv(std::istream& in);

/// Total variation of projection ratios within blocks:
/// mu * sum over consecutive members of each block of |alpha_i - alpha_{i-1}|.
/// Inputs are in layer order; gradient is w.r.t. each alpha (0 at ties).
struct PenaltyValue {
  double value = 0.0;
  std::vector<double> gradient;
};

PenaltyValue tv_penalty(const std::vector<double>& alphas, const std::vector<int>& blocks, double mu);

/// mu * sum gamma_i^2 and its gradient 2 mu gamma_i.
PenaltyValue radius_l2_penalty(const Tensor& radii, double mu);

/// Cycles through validation data.
class ValidationStream {
 public:
  ValidationStream(const Batch& val, std::size_t batch_size, std::uint64_t seed)
      : stream_(val, batch_size, seed) {}
  Batch next() { return stream_.next(); }

 private:
  MinibatchStream stream_;
};

/// Outer step: T_proj radius updates on validation data with the model frozen.
/// Returns the validation loss of the last inner step.
double projection_update(ValidationStream& val, const ModelSnapshot& pretrained,
                         const Model& current, RadiusVector& radii, const TpgmConfig& cfg);

struct TpgmResult {
  Model model;  // projected parameters
  TrainingTrace trace;
  RadiusVector radii;
};

/// Alternating bi-level training from a pre-trained model.
TpgmResult tpgm_train(const Model& pretrained, const Batch& train, const Batch& val,
                      const TpgmConfig& cfg);

}  // namespace tpgm
