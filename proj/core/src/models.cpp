#include "tpgm/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tpgm/errors.hpp"

namespace tpgm {

namespace {

std::string layer_name(std::size_t k, const char* what) {
  return "layer" + std::to_string(k) + "." + what;
}

double activate(Activation a, double z) { return a == Activation::Tanh ? std::tanh(z) : z; }

// Derivative expressed through the activation output h.
double activate_grad_from_output(Activation a, double h) {
  return a == Activation::Tanh ? 1.0 - h * h : 1.0;
}

struct MlpTape {
  std::vector<Tensor> activations;  // activations[0] = inputs, last = outputs
};

Tensor affine(const Tensor& h, const Tensor& w, const Tensor& b) {
  // h: n x in, w: out x in, b: out
  const std::size_t n = h.rows();
  const std::size_t in = w.cols();
  const std::size_t out = w.rows();
  Tensor z = Tensor::zeros_matrix(n, out);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t k = 0; k < in; ++k) s += h(i, k) * w(o, k);
      z(i, o) = s;
    }
  }
  return z;
}

MlpTape mlp_forward(const MlpArch& arch, const std::vector<ParamGroup>& groups,
                    const Tensor& inputs) {
  MlpTape tape;
  tape.activations.push_back(inputs);
  const std::size_t layers = arch.widths.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    Tensor z = affine(tape.activations.back(), groups[2 * k].tensor, groups[2 * k + 1].tensor);
    if (k + 1 < layers) {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = activate(arch.activation, z[i]);
    }
    tape.activations.push_back(std::move(z));
  }
  return tape;
}

Tensor linear_forward(const LinearArch& arch, const std::vector<ParamGroup>& groups,
                      const Tensor& inputs) {
  Tensor out = Tensor::zeros_matrix(inputs.rows(), 1);
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    double s = 0.0;
    std::size_t offset = 0;
    for (std::size_t g = 0; g < arch.slice_widths.size(); ++g) {
      const Tensor& theta = groups[g].tensor;
      for (std::size_t k = 0; k < arch.slice_widths[g]; ++k) s += inputs(i, offset + k) * theta[k];
      offset += arch.slice_widths[g];
    }
    out(i, 0) = s;
  }
  return out;
}

// Loss value and dLoss/dOutputs.
std::pair<double, Tensor> output_loss(const Tensor& pred, const Batch& batch, LossKind loss) {
  const std::size_t n = pred.rows();
  const std::size_t m = pred.cols();
  Tensor grad = Tensor::zeros_like(pred);
  switch (loss) {
    case LossKind::Mse: {
      if (!batch.targets.same_shape(pred)) {
        throw ShapeError("mse: targets " + batch.targets.shape_string() + " vs outputs " +
                         pred.shape_string());
      }
      const double scale = 1.0 / static_cast<double>(n * m);
      double total = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - batch.targets[i];
        total += r * r;
        grad[i] = 2.0 * r * scale;
      }
      return {total * scale, std::move(grad)};
    }
    case LossKind::L2Residual: {
      if (!batch.targets.same_shape(pred)) {
        throw ShapeError("l2_residual: targets " + batch.targets.shape_string() +
                         " vs outputs " + pred.shape_string());
      }
      Tensor r = pred - batch.targets;
      double ssq = 0.0;
      for (double v : r.data()) ssq += v * v;
      const double norm = std::sqrt(ssq);
      // Zero residual: the minimal-norm subgradient is 0.
      if (norm > 0.0) {
        for (std::size_t i = 0; i < r.size(); ++i) grad[i] = r[i] / norm;
      }
      return {norm, std::move(grad)};
    }
    case LossKind::SoftmaxCe: {
      if (batch.labels.size() != n) {
        throw ShapeError("softmax_ce: " + std::to_string(batch.labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
      }
      double total = 0.0;
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const int label = batch.labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= m) {
          throw ContractError("softmax_ce: label " + std::to_string(label) + " out of range");
        }
        double mx = pred(i, 0);
        for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, pred(i, c));
        double denom = 0.0;
        for (std::size_t c = 0; c < m; ++c) denom += std::exp(pred(i, c) - mx);
        const double log_z = mx + std::log(denom);
        total += log_z - pred(i, static_cast<std::size_t>(label));
        for (std::size_t c = 0; c < m; ++c) {
          const double p = std::exp(pred(i, c) - log_z);
          grad(i, c) = (p - (c == static_cast<std::size_t>(label) ? 1.0 : 0.0)) * inv_n;
        }
      }
      return {total * inv_n, std::move(grad)};
    }
  }
  throw ContractError("unknown loss kind");
}

}  // namespace

Model Model::linear(std::size_t dim) {
  if (dim == 0) throw ContractError("linear model needs dim >= 1");
  return Model(LinearArch{{dim}},
               {ParamGroup{"theta", ParamKind::Weight, Tensor::zeros_vector(dim), 0, 0}});
}

Model Model::linear_blocks(std::vector<std::size_t> slice_widths) {
  if (slice_widths.empty()) throw ContractError("linear_blocks needs at least one slice");
  std::vector<ParamGroup> groups;
  for (std::size_t g = 0; g < slice_widths.size(); ++g) {
    if (slice_widths[g] == 0) throw ContractError("linear_blocks: empty slice");
    groups.push_back(ParamGroup{"theta." + std::to_string(g), ParamKind::Weight,
                                Tensor::zeros_vector(slice_widths[g]), static_cast<int>(g),
                                static_cast<int>(g)});
  }
  return Model(LinearArch{std::move(slice_widths)}, std::move(groups));
}

Model Model::mlp(std::vector<std::size_t> widths, Activation activation, Rng& rng,
                 std::vector<int> block_ids) {
  if (widths.size() < 2) throw ContractError("mlp needs at least input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) throw ContractError("mlp widths must be positive");
  }
  const std::size_t layers = widths.size() - 1;
  if (!block_ids.empty() && block_ids.size() != layers) {
    throw ContractError("mlp: block_ids must have one entry per layer");
  }
  std::vector<ParamGroup> groups;
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = widths[k];
    const std::size_t out = widths[k + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w = Tensor::zeros_matrix(out, in);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
    const int block = block_ids.empty() ? static_cast<int>(k) : block_ids[k];
    groups.push_back(ParamGroup{layer_name(k, "weight"), ParamKind::Weight, std::move(w),
                                static_cast<int>(k), block});
    groups.push_back(ParamGroup{layer_name(k, "bias"), ParamKind::Bias, Tensor::zeros_vector(out),
                                static_cast<int>(k), block});
  }
  return Model(MlpArch{std::move(widths), activation}, std::move(groups));
}

Model Model::zeros_like(const Model& other) {
  Model m = other;
  for (auto& g : m.groups_) g.tensor = Tensor::zeros_like(g.tensor);
  return m;
}

std::size_t Model::input_dim() const {
  if (const auto* lin = std::get_if<LinearArch>(&arch_)) {
    std::size_t d = 0;
    for (std::size_t w : lin->slice_widths) d += w;
    return d;
  }
  return std::get<MlpArch>(arch_).widths.front();
}

std::size_t Model::output_dim() const {
  if (std::holds_alternative<LinearArch>(arch_)) return 1;
  return std::get<MlpArch>(arch_).widths.back();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.tensor.size();
  return n;
}

std::size_t Model::group_index(const std::string& name) const {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].name == name) return i;
  }
  throw ContractError("no parameter group named '" + name + "'");
}

Tensor Model::forward(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.cols() != input_dim()) {
    throw ShapeError("forward: inputs " + inputs.shape_string() + " but model expects width " +
                     std::to_string(input_dim()));
  }
  if (const auto* lin = std::get_if<LinearArch>(&arch_)) return linear_forward(*lin, groups_, inputs);
  return std::move(mlp_forward(std::get<MlpArch>(arch_), groups_, inputs).activations.back());
}

void Model::set_parameters(const std::vector<Tensor>& params) {
  if (params.size() != groups_.size()) {
    throw ContractError("set_parameters: expected " + std::to_string(groups_.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(groups_[i].tensor, params[i], "set_parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) groups_[i].tensor = params[i];
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  out.reserve(groups_.size());
  for (const auto& g : groups_) out.push_back(g.tensor);
  return out;
}

bool Model::same_architecture(const Model& other) const {
  if (groups_.size() != other.groups_.size()) return false;
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].name != other.groups_[i].name ||
        !groups_[i].tensor.same_shape(other.groups_[i].tensor)) {
      return false;
    }
  }
  if (arch_.index() != other.arch_.index()) return false;
  if (const auto* a = std::get_if<MlpArch>(&arch_)) {
    const auto& b = std::get<MlpArch>(other.arch_);
    return a->widths == b.widths && a->activation == b.activation;
  }
  return std::get<LinearArch>(arch_).slice_widths ==
         std::get<LinearArch>(other.arch_).slice_widths;
}

std::string Model::describe() const {
  std::ostringstream os;
  if (const auto* lin = std::get_if<LinearArch>(&arch_)) {
    os << "linear(";
    for (std::size_t i = 0; i < lin->slice_widths.size(); ++i) {
      os << (i ? "," : "") << lin->slice_widths[i];
    }
    os << ')';
  } else {
    const auto& mlp = std::get<MlpArch>(arch_);
    os << "mlp(";
    for (std::size_t i = 0; i < mlp.widths.size(); ++i) os << (i ? "-" : "") << mlp.widths[i];
    os << (mlp.activation == Activation::Tanh ? ",tanh" : ",identity") << ')';
  }
  return os.str();
}

Batch Batch::subset(const std::vector<std::size_t>& rows) const {
  Batch out;
  const std::size_t din = inputs.cols();
  std::vector<double> x;
  x.reserve(rows.size() * din);
  for (std::size_t r : rows) {
    for (std::size_t c = 0; c < din; ++c) x.push_back(inputs(r, c));
  }
  out.inputs = Tensor::matrix(rows.size(), din, std::move(x));
  if (targets.size() > 0) {
    const std::size_t dout = targets.cols();
    std::vector<double> y;
    y.reserve(rows.size() * dout);
    for (std::size_t r : rows) {
      for (std::size_t c = 0; c < dout; ++c) y.push_back(targets(r, c));
    }
    out.targets = Tensor::matrix(rows.size(), dout, std::move(y));
  }
  if (!labels.empty()) {
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
  }
  return out;
}

void Batch::validate() const {
  if (inputs.rank() != 2 || inputs.rows() == 0) throw ContractError("batch: empty inputs");
  if (targets.size() > 0 && targets.rows() != inputs.rows()) {
    throw ContractError("batch: target rows do not match input rows");
  }
  if (!labels.empty() && labels.size() != inputs.rows()) {
    throw ContractError("batch: label count does not match input rows");
  }
}

LossAndGrads loss_and_grads(const Model& model, const Batch& batch, LossKind loss) {
  batch.validate();
  LossAndGrads out;
  const auto& groups = model.groups();

  if (const auto* lin = std::get_if<LinearArch>(&model.architecture())) {
    const Tensor pred = model.forward(batch.inputs);
    auto [value, dpred] = output_loss(pred, batch, loss);
    out.loss = value;
    std::size_t offset = 0;
    for (std::size_t g = 0; g < lin->slice_widths.size(); ++g) {
      Tensor grad = Tensor::zeros_like(groups[g].tensor);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const double upstream = dpred(i, 0);
        if (upstream == 0.0) continue;
        for (std::size_t k = 0; k < lin->slice_widths[g]; ++k) {
          grad[k] += upstream * batch.inputs(i, offset + k);
        }
      }
      offset += lin->slice_widths[g];
      out.grads.push_back(std::move(grad));
    }
    return out;
  }

  const auto& arch = std::get<MlpArch>(model.architecture());
  if (batch.inputs.cols() != model.input_dim()) {
    throw ShapeError("loss_and_grads: input width " + std::to_string(batch.inputs.cols()) +
                     " vs model " + std::to_string(model.input_dim()));
  }
  MlpTape tape = mlp_forward(arch, groups, batch.inputs);
  auto [value, delta] = output_loss(tape.activations.back(), batch, loss);
  out.loss = value;
  out.grads.resize(groups.size());

  const std::size_t layers = arch.widths.size() - 1;
  const std::size_t n = batch.size();
  for (std::size_t kk = layers; kk-- > 0;) {
    const Tensor& h_in = tape.activations[kk];
    const Tensor& w = groups[2 * kk].tensor;
    const std::size_t out_w = w.rows();
    const std::size_t in_w = w.cols();
    Tensor gw = Tensor::zeros_like(w);
    Tensor gb = Tensor::zeros_vector(out_w);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < out_w; ++o) {
        const double dz = delta(i, o);
        if (dz == 0.0) continue;
        gb[o] += dz;
        for (std::size_t k = 0; k < in_w; ++k) gw(o, k) += dz * h_in(i, k);
      }
    }
    if (kk > 0) {
      Tensor next = Tensor::zeros_matrix(n, in_w);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < in_w; ++k) {
          double s = 0.0;
          for (std::size_t o = 0; o < out_w; ++o) s += delta(i, o) * w(o, k);
          next(i, k) = s * activate_grad_from_output(arch.activation, h_in(i, k));
        }
      }
      delta = std::move(next);
    }
    out.grads[2 * kk] = std::move(gw);
    out.grads[2 * kk + 1] = std::move(gb);
  }
  return out;
}

double evaluate_loss(const Model& model, const Batch& batch, LossKind loss) {
  batch.validate();
  return output_loss(model.forward(batch.inputs), batch, loss).first;
}

double accuracy(const Model& model, const Batch& batch) {
  batch.validate();
  if (batch.labels.empty()) throw ContractError("accuracy: batch has no labels");
  const Tensor logits = model.forward(batch.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    if (static_cast<int>(best) == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

ModelSnapshot snapshot(const Model& model) { return model.groups(); }

void restore(Model& model, const ModelSnapshot& snap) {
  auto& groups = model.groups();
  if (groups.size() != snap.size()) {
    throw ContractError("restore: snapshot has " + std::to_string(snap.size()) +
                        " groups, model has " + std::to_string(groups.size()));
  }
  for (std::size_t i = 0; i < snap.size(); ++i) {
    if (groups[i].name != snap[i].name || !groups[i].tensor.same_shape(snap[i].tensor)) {
      throw ContractError("restore: group '" + snap[i].name + "' does not match model group '" +
                          groups[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < snap.size(); ++i) groups[i].tensor = snap[i].tensor;
}

}  // namespace tpgm
