#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "tpgm/rng.hpp"
#include "tpgm/tensor.hpp"

namespace tpgm {

enum class ParamKind { Weight, Bias };

/// One named parameter tensor; the unit that owns a projection radius.
struct ParamGroup {
  std::string name;
  ParamKind kind = ParamKind::Weight;
  Tensor tensor;
  int layer_index = 0;  // 0 is closest to the input
  int block_id = 0;     // architectural block, used by TV smoothing
};

enum class Activation { Tanh, Identity };

/// y = sum_g x[slice_g] . theta_g. Each feature slice is its own group, so a
/// single-slice model is the plain linear model theta^T x.
struct LinearArch {
  std::vector<std::size_t> slice_widths;
};

/// Fully connected network. Weights are stored out x in; the output layer has
/// no activation.
struct MlpArch {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation activation = Activation::Tanh;
};

using Architecture = std::variant<LinearArch, MlpArch>;

/// Copy of a model's parameter groups; see snapshot() / restore().
using ModelSnapshot = std::vector<ParamGroup>;

class Model {
 public:
  /// theta^T x with a single group named "theta".
  static Model linear(std::size_t dim);
  /// Linear model whose features are split into contiguous groups
  /// "theta.<i>" with layer_index = block_id = i.
  static Model linear_blocks(std::vector<std::size_t> slice_widths);
  /// Glorot-uniform weights, zero biases. block_ids assigns a block per layer
  /// (defaults to one block per layer).
  static Model mlp(std::vector<std::size_t> widths, Activation activation, Rng& rng,
                   std::vector<int> block_ids = {});
  /// Same architecture with every parameter zero.
  static Model zeros_like(const Model& other);

  const Architecture& architecture() const { return arch_; }
  std::size_t input_dim() const;
  std::size_t output_dim() const;

  std::vector<ParamGroup>& groups() { return groups_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  std::size_t group_count() const { return groups_.size(); }
  std::size_t parameter_count() const;
  std::size_t group_index(const std::string& name) const;

  /// inputs: n x input_dim. Returns n x output_dim.
  Tensor forward(const Tensor& inputs) const;

  /// Replace all parameter tensors (same order and shapes).
  void set_parameters(const std::vector<Tensor>& params);
  std::vector<Tensor> parameters() const;

  bool same_architecture(const Model& other) const;
  std::string describe() const;

 private:
  friend Model load_model(std::istream& in);

  Model(Architecture arch, std::vector<ParamGroup> groups)
      : arch_(std::move(arch)), groups_(std::move(groups)) {}

  Architecture arch_;
  std::vector<ParamGroup> groups_;
};

/// Regression targets (n x out) or class labels (length n).
struct Batch {
  Tensor inputs;
  Tensor targets;
  std::vector<int> labels;

  std::size_t size() const { return inputs.rows(); }
  bool is_classification() const { return !labels.empty(); }
  Batch subset(const std::vector<std::size_t>& rows) const;
  /// Throws ContractError unless the row counts agree and n >= 1.
  void validate() const;
};

enum class LossKind {
  Mse,         // mean over all output entries of (pred - y)^2
  SoftmaxCe,   // mean cross-entropy of softmax(logits) against labels
  L2Residual,  // ||pred - y||_2, not squared
};

struct LossAndGrads {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with model.groups()
};

LossAndGrads loss_and_grads(const Model& model, const Batch& batch, LossKind loss);
double evaluate_loss(const Model& model, const Batch& batch, LossKind loss);
/// Fraction of rows whose argmax output matches the label.
double accuracy(const Model& model, const Batch& batch);

ModelSnapshot snapshot(const Model& model);
/// Copies parameters back. Throws ContractError if names or shapes differ.
void restore(Model& model, const ModelSnapshot& snap);

/// Binary parameter container; format documented in docs/model_format.md.
void save_model(std::ostream& out, const Model& model);
Model load_model(std::istream& in);
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace tpgm
