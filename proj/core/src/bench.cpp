#include "tpgm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "tpgm/errors.hpp"
#include "tpgm/numerics.hpp"
#include "tpgm/rng.hpp"

namespace tpgm::bench {

namespace {

constexpr std::uint64_t kTeacherTag = 11;
constexpr std::uint64_t kBasisTag = 12;
constexpr std::uint64_t kInputsTag = 13;
constexpr std::uint64_t kSplitTag = 14;

/// d x d orthonormal basis via twice-applied modified Gram-Schmidt.
Tensor random_orthonormal_basis(std::size_t d, Rng& rng) {
  std::vector<Tensor> cols;
  while (cols.size() < d) {
    Tensor v = rng.normal_vector(d);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : cols) {
        const double c = dot(q, v);
        for (std::size_t i = 0; i < d; ++i) v[i] -= c * q[i];
      }
    }
    const double n = l2_norm(v);
    if (n < 1e-8) continue;
    v *= 1.0 / n;
    cols.push_back(std::move(v));
  }
  Tensor basis = Tensor::zeros_matrix(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < d; ++r) basis(r, c) = cols[c][r];
  }
  return basis;
}

struct InputSampler {
  Tensor basis;  // d x d; first k columns span S
  std::size_t k;

  // x = sqrt(1 - f) B_S z + sqrt(f k / (d - k)) B_C g, then a Givens rotation
  // by `angle` in the (b_0, b_k) plane.
  Tensor sample(Rng& rng, double out_fraction, double angle) const {
    const std::size_t d = basis.rows();
    std::vector<double> coeff(d, 0.0);
    const double in_scale = std::sqrt(1.0 - out_fraction);
    const double out_scale =
        d > k ? std::sqrt(out_fraction * static_cast<double>(k) / static_cast<double>(d - k)) : 0.0;
    for (std::size_t i = 0; i < k; ++i) coeff[i] = in_scale * rng.normal();
    for (std::size_t i = k; i < d; ++i) coeff[i] = out_scale * rng.normal();
    if (angle != 0.0 && k < d) {
      const double c = std::cos(angle);
      const double s = std::sin(angle);
      const double a = coeff[0];
      const double b = coeff[k];
      coeff[0] = c * a - s * b;
      coeff[k] = s * a + c * b;
    }
    Tensor x = Tensor::zeros_vector(d);
    for (std::size_t j = 0; j < d; ++j) {
      if (coeff[j] == 0.0) continue;
      for (std::size_t i = 0; i < d; ++i) x[i] += basis(i, j) * coeff[j];
    }
    return x;
  }
};

/// Labels read only the in-span part of each input: the teacher sees P_S x.
Batch label_batch(const Model& teacher, const Tensor& span, const std::vector<Tensor>& xs,
                  const ShiftSpec& spec, Rng& rng) {
  const std::size_t n = xs.size();
  const std::size_t d = spec.input_dim;
  std::vector<double> flat;
  std::vector<double> projected;
  flat.reserve(n * d);
  projected.reserve(n * d);
  for (const auto& x : xs) {
    flat.insert(flat.end(), x.data().begin(), x.data().end());
    const Tensor p = matvec(span, matvec_transposed(span, x));
    projected.insert(projected.end(), p.data().begin(), p.data().end());
  }
  Batch b;
  b.inputs = Tensor::matrix(n, d, std::move(flat));
  Tensor out = teacher.forward(Tensor::matrix(n, d, std::move(projected)));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += spec.label_noise * rng.normal();
  if (spec.task == TaskKind::Regression) {
    b.targets = std::move(out);
    return b;
  }
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < out.cols(); ++c) {
      if (out(i, c) > out(i, best)) best = c;
    }
    b.labels[i] = static_cast<int>(best);
  }
  return b;
}

std::vector<Tensor> draw_inputs(const InputSampler& sampler, std::size_t n, double out_fraction,
                                double angle, Rng& rng) {
  std::vector<Tensor> xs;
  xs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) xs.push_back(sampler.sample(rng, out_fraction, angle));
  return xs;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

bool is_finite_model(const Model& m) {
  for (const auto& g : m.groups()) {
    if (!g.tensor.all_finite()) return false;
  }
  return true;
}

FineTuneHooks linear_probe_hooks(const Model& model) {
  int head = 0;
  for (const auto& g : model.groups()) head = std::max(head, g.layer_index);
  FineTuneHooks hooks;
  hooks.adjust_gradients = [head](const Model& m, std::vector<Tensor>& grads) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (m.groups()[i].layer_index < head) grads[i] = Tensor::zeros_like(grads[i]);
    }
    return 0.0;
  };
  return hooks;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ShiftSpec::validate() const {
  if (input_dim < 2) throw ConfigError("dataset.input_dim: must be >= 2");
  if (hidden < 1) throw ConfigError("dataset.hidden: must be >= 1");
  if (span_dim < 1 || span_dim >= input_dim) {
    throw ConfigError("dataset.span_dim: must lie in [1, input_dim)");
  }
  if (task == TaskKind::Classification && num_classes < 2) {
    throw ConfigError("dataset.num_classes: must be >= 2");
  }
  auto fraction = [](double v, const char* key) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("dataset.") + key + ": must lie in [0, 1]");
  };
  fraction(id_leak, "id_leak");
  fraction(ood_shift, "ood_shift");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("dataset.train_fraction: must lie in (0, 1]");
  }
  if (!(label_noise >= 0.0)) throw ConfigError("dataset.label_noise: must be >= 0");
  if (!(task_shift >= 0.0)) throw ConfigError("dataset.task_shift: must be >= 0");
  if (!(teacher_scale > 0.0)) throw ConfigError("dataset.teacher_scale: must be > 0");
  if (!std::isfinite(ood_rotation)) throw ConfigError("dataset.ood_rotation: must be finite");
  if (n_pretrain < 1 || n_train < 1 || n_val < 1 || n_test_id < 1 || n_test_ood < 1) {
    throw ConfigError("dataset: every split needs at least one row");
  }
}

ShiftDataset gen_shift_dataset(const ShiftSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::uint64_t base = stream_seed(seed, StreamTag::Dataset);
  Rng basis_rng(derive_seed(base, kBasisTag));
  Rng teacher_rng(derive_seed(base, kTeacherTag));
  Rng input_rng(derive_seed(base, kInputsTag));
  Rng split_rng(derive_seed(base, kSplitTag));

  const std::size_t out_dim = spec.task == TaskKind::Regression ? 1 : spec.num_classes;
  InputSampler sampler{random_orthonormal_basis(spec.input_dim, basis_rng), spec.span_dim};

  Model teacher_pre = Model::mlp({spec.input_dim, spec.hidden, out_dim}, Activation::Tanh, teacher_rng);
  for (auto& g : teacher_pre.groups()) {
    if (g.kind == ParamKind::Weight) g.tensor *= spec.teacher_scale;
  }
  Model teacher_ft = teacher_pre;
  for (auto& g : teacher_ft.groups()) {
    if (g.kind != ParamKind::Weight) continue;
    const double limit = spec.teacher_scale * std::sqrt(6.0 / static_cast<double>(g.tensor.rows() + g.tensor.cols()));
    for (std::size_t i = 0; i < g.tensor.size(); ++i) {
      g.tensor[i] += spec.task_shift * limit * teacher_rng.normal();
    }
  }

  ShiftDataset data;
  data.output_dim = out_dim;
  data.loss = spec.task == TaskKind::Regression ? LossKind::Mse : LossKind::SoftmaxCe;
  data.span_basis = Tensor::zeros_matrix(spec.input_dim, spec.span_dim);
  for (std::size_t r = 0; r < spec.input_dim; ++r) {
    for (std::size_t c = 0; c < spec.span_dim; ++c) data.span_basis(r, c) = sampler.basis(r, c);
  }

  data.pretrain = label_batch(teacher_pre, data.span_basis,
                              draw_inputs(sampler, spec.n_pretrain, spec.id_leak, 0.0, input_rng), spec,
                              input_rng);

  const std::size_t pool = spec.n_train + spec.n_val + spec.n_test_id;
  const Batch id_pool =
      label_batch(teacher_ft, data.span_basis, draw_inputs(sampler, pool, spec.id_leak, 0.0, input_rng), spec,
                  input_rng);
  const double ood_fraction = spec.id_leak + spec.ood_shift * (1.0 - spec.id_leak);
  data.test_ood = label_batch(teacher_ft, data.span_basis,
                              draw_inputs(sampler, spec.n_test_ood, ood_fraction, spec.ood_rotation, input_rng),
                              spec, input_rng);

  const std::vector<std::size_t> perm = split_rng.permutation(pool);
  data.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(spec.n_train));
  data.val_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(spec.n_train),
                       perm.begin() + static_cast<std::ptrdiff_t>(spec.n_train + spec.n_val));
  data.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(spec.n_train + spec.n_val), perm.end());
  data.train_id = id_pool.subset(data.train_rows);
  data.val_id = id_pool.subset(data.val_rows);
  data.test_id = id_pool.subset(data.test_rows);
  return spec.train_fraction < 1.0 ? with_train_fraction(data, spec.train_fraction) : data;
}

ShiftDataset with_train_fraction(const ShiftDataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("train_fraction must lie in (0, 1]");
  }
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.train_rows.size())));
  if (keep < 1) throw ContractError("train_fraction leaves no training rows");
  ShiftDataset out = data;
  out.train_rows.resize(keep);
  std::vector<std::size_t> rows(keep);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  out.train_id = data.train_id.subset(rows);
  return out;
}

double out_of_span_energy(const Batch& batch, const Tensor& span_basis) {
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor x = Tensor::zeros_vector(batch.inputs.cols());
    for (std::size_t c = 0; c < x.size(); ++c) x[c] = batch.inputs(i, c);
    const Tensor coeff = matvec_transposed(span_basis, x);
    const double xx = dot(x, x);
    if (xx == 0.0) continue;
    total += std::max(0.0, xx - dot(coeff, coeff)) / xx;
  }
  return total / static_cast<double>(batch.size());
}

Model make_student(const ShiftSpec& spec, std::uint64_t seed) {
  Rng rng(stream_seed(seed, StreamTag::ModelInit));
  const std::size_t out_dim = spec.task == TaskKind::Regression ? 1 : spec.num_classes;
  return Model::mlp({spec.input_dim, spec.hidden, out_dim}, Activation::Tanh, rng);
}

Model pretrain_model(const ShiftSpec& spec, const ShiftDataset& data, const FineTuneConfig& cfg,
                     std::uint64_t seed) {
  Model model = make_student(spec, seed);
  FineTuneConfig c = cfg;
  c.loss = data.loss;
  c.seed = stream_seed(seed, StreamTag::Pretraining);
  fine_tune(model, data.pretrain, c);
  return model;
}

std::string method_kind_name(const MethodSpec& m) {
  struct {
    std::string operator()(const VanillaFt&) const { return "vanilla_ft"; }
    std::string operator()(const LinearProbe&) const { return "linear_probe"; }
    std::string operator()(const L2Sp&) const { return "l2sp"; }
    std::string operator()(const MarsSp&) const { return "mars_sp"; }
    std::string operator()(const LpFt&) const { return "lp_ft"; }
    std::string operator()(const Interp&) const { return "interp"; }
    std::string operator()(const Tpgm& t) const {
      return t.config.radius_l2_mu > 0.0 ? "tpgm_c" : "tpgm";
    }
  } visitor;
  return std::visit(visitor, m);
}

void evaluate_into(MetricsRow& row, const Model& model, const Model& model0,
                   const ShiftDataset& data, ProjectionKind distance_norm) {
  row.id_loss = evaluate_loss(model, data.test_id, data.loss);
  row.ood_loss = evaluate_loss(model, data.test_ood, data.loss);
  row.val_loss = evaluate_loss(model, data.val_id, data.loss);
  if (data.loss == LossKind::SoftmaxCe) {
    row.id_acc = accuracy(model, data.test_id);
    row.ood_acc = accuracy(model, data.test_ood);
  }
  row.group_distances.clear();
  double sum = 0.0;
  for (std::size_t i = 0; i < model.group_count(); ++i) {
    const double dist = constraint_norm(
        distance_norm, model.groups()[i].tensor - model0.groups()[i].tensor);
    row.group_distances.push_back(dist);
    sum += dist;
  }
  row.mean_distance = sum / static_cast<double>(model.group_count());
}

MethodOutput run_method(const MethodSpec& method, const ShiftDataset& data, const Model& model0,
                        const FineTuneConfig& finetune, std::uint64_t seed,
                        ProjectionKind distance_norm) {
  if (model0.input_dim() != data.train_id.inputs.cols() || model0.output_dim() != data.output_dim) {
    throw ContractError("run_method: model architecture " + model0.describe() +
                        " does not match dataset dimensions");
  }
  const auto start = std::chrono::steady_clock::now();
  FineTuneConfig cfg = finetune;
  cfg.seed = seed;
  cfg.loss = data.loss;

  MethodOutput out{MetricsRow{}, model0, std::nullopt};
  out.metrics.seed = seed;
  out.metrics.method = method_kind_name(method);
  Model& model = out.model;

  try {
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, VanillaFt>) {
            fine_tune(model, data.train_id, cfg);
          } else if constexpr (std::is_same_v<M, LinearProbe>) {
            fine_tune(model, data.train_id, cfg, linear_probe_hooks(model));
          } else if constexpr (std::is_same_v<M, L2Sp>) {
            if (!(m.mu >= 0.0)) throw ContractError("l2sp: mu must be >= 0");
            FineTuneHooks hooks;
            hooks.adjust_gradients = [&model0, mu = m.mu](const Model& cur, std::vector<Tensor>& grads) {
              double penalty = 0.0;
              for (std::size_t i = 0; i < grads.size(); ++i) {
                const Tensor diff = cur.groups()[i].tensor - model0.groups()[i].tensor;
                penalty += mu * dot(diff, diff);
                for (std::size_t k = 0; k < diff.size(); ++k) grads[i][k] += 2.0 * mu * diff[k];
              }
              return penalty;
            };
            fine_tune(model, data.train_id, cfg, hooks);
          } else if constexpr (std::is_same_v<M, MarsSp>) {
            if (!(m.gamma >= 0.0)) throw ContractError("mars_sp: gamma must be >= 0");
            FineTuneHooks hooks;
            hooks.after_step = [&model0, gamma = m.gamma](Model& cur) {
              for (std::size_t i = 0; i < cur.group_count(); ++i) {
                auto& t = cur.groups()[i].tensor;
                t = project(ProjectionKind::Mars, model0.groups()[i].tensor, t, gamma).theta;
              }
            };
            fine_tune(model, data.train_id, cfg, hooks);
          } else if constexpr (std::is_same_v<M, LpFt>) {
            if (m.lp_epochs < 1 || m.lp_epochs >= cfg.epochs) {
              throw ContractError("lp_ft: lp_epochs must lie in [1, epochs)");
            }
            FineTuneConfig lp = cfg;
            lp.epochs = m.lp_epochs;
            fine_tune(model, data.train_id, lp, linear_probe_hooks(model));
            FineTuneConfig ft = cfg;
            ft.epochs = cfg.epochs - m.lp_epochs;
            fine_tune(model, data.train_id, ft);
          } else if constexpr (std::is_same_v<M, Interp>) {
            if (!(m.ratio >= 0.0 && m.ratio <= 1.0)) throw ContractError("interp: ratio must lie in [0, 1]");
            fine_tune(model, data.train_id, cfg);
            for (std::size_t i = 0; i < model.group_count(); ++i) {
              const Tensor& t0 = model0.groups()[i].tensor;
              Tensor& t = model.groups()[i].tensor;
              for (std::size_t k = 0; k < t.size(); ++k) t[k] = (1.0 - m.ratio) * t0[k] + m.ratio * t[k];
            }
          } else if constexpr (std::is_same_v<M, Tpgm>) {
            TpgmConfig tcfg = m.config;
            tcfg.model = cfg;
            TpgmResult r = tpgm_train(model0, data.train_id, data.val_id, tcfg);
            model = std::move(r.model);
            double sum = 0.0;
            for (std::size_t i = 0; i < r.radii.size(); ++i) sum += r.radii[i];
            out.metrics.mean_gamma = sum / static_cast<double>(r.radii.size());
            out.trace = std::move(r.trace);
          }
        },
        method);
    if (!is_finite_model(model)) throw NumericDomainError("parameters diverged");
    evaluate_into(out.metrics, model, model0, data, distance_norm);
    if (!std::isfinite(out.metrics.id_loss) || !std::isfinite(out.metrics.ood_loss)) {
      throw NumericDomainError("evaluation loss is not finite");
    }
  } catch (const NumericDomainError& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.metrics.status = std::string("failed: ") + e.what();
    out.metrics.id_loss = out.metrics.ood_loss = out.metrics.val_loss = nan;
    out.metrics.mean_distance = nan;
    out.metrics.id_acc.reset();
    out.metrics.ood_acc.reset();
  }
  out.metrics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

GroupSelectivitySpec::GroupSelectivitySpec() {
  tpgm.projection_kind = ProjectionKind::L2;
  tpgm.f_proj = ProjectionFrequency::every(1);
  tpgm.t_proj = 1;
  tpgm.model.loss = LossKind::Mse;
  tpgm.model.learning_rate = 0.05;
  tpgm.model.epochs = 300;
  tpgm.model.batch_size = 0;
}

GroupSelectivityResult run_group_selectivity(const GroupSelectivitySpec& spec, std::uint64_t seed) {
  const std::size_t d = spec.dim_a + spec.dim_b;
  Rng rng(stream_seed(seed, StreamTag::Dataset));
  const Tensor theta_star = rng.unit_vector(d);
  const Tensor dir_a = rng.unit_vector(spec.dim_a);
  const Tensor dir_b = rng.unit_vector(spec.dim_b);

  auto make_batch = [&](std::size_t n) {
    Batch b;
    b.inputs = rng.normal_matrix(n, d);
    b.targets = Tensor::zeros_matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      double y = 0.0;
      for (std::size_t k = 0; k < d; ++k) y += b.inputs(i, k) * theta_star[k];
      b.targets(i, 0) = y;
    }
    return b;
  };
  const Batch train = make_batch(spec.n_train);
  const Batch val = make_batch(spec.n_val);

  Model model0 = Model::linear_blocks({spec.dim_a, spec.dim_b});
  for (std::size_t k = 0; k < spec.dim_a; ++k) {
    model0.groups()[0].tensor[k] = theta_star[k] + spec.epsilon_a * dir_a[k];
  }
  for (std::size_t k = 0; k < spec.dim_b; ++k) {
    model0.groups()[1].tensor[k] = theta_star[spec.dim_a + k] + spec.epsilon_b * dir_b[k];
  }

  TpgmConfig cfg = spec.tpgm;
  cfg.model.seed = seed;
  const TpgmResult r = tpgm_train(model0, train, val, cfg);
  GroupSelectivityResult out;
  out.gamma_a = r.radii[0];
  out.gamma_b = r.radii[1];
  out.distance_a = constraint_norm(cfg.projection_kind,
                                   r.model.groups()[0].tensor - model0.groups()[0].tensor);
  out.distance_b = constraint_norm(cfg.projection_kind,
                                   r.model.groups()[1].tensor - model0.groups()[1].tensor);
  return out;
}

}  // namespace tpgm::bench
