#include "tpgm/tpgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tpgm/errors.hpp"

namespace tpgm {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::size_t> layer_order(const ModelSnapshot& groups) {
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return groups[a].layer_index < groups[b].layer_index;
  });
  return order;
}

void check_groups_aligned(const ModelSnapshot& a, const ModelSnapshot& b) {
  if (a.size() != b.size()) throw ContractError("model and pre-trained snapshot differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !a[i].tensor.same_shape(b[i].tensor)) {
      throw ContractError("group '" + b[i].name + "' does not match pre-trained group '" +
                          a[i].name + "'");
    }
  }
}

ProjectionEvent make_event(std::int64_t step, double train_loss, double val_loss,
                           const RadiusVector& radii, const ProjectAllResult& info) {
  ProjectionEvent ev;
  ev.step = step;
  ev.train_loss = train_loss;
  ev.val_loss = val_loss;
  ev.gammas.assign(radii.values().data().begin(), radii.values().data().end());
  ev.alphas = info.alphas;
  ev.distances = info.distances;
  return ev;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

ProjectionFrequency ProjectionFrequency::every(std::int64_t f) {
  if (f < 1) throw ContractError("f_proj must be >= 1");
  return ProjectionFrequency(f);
}

ProjectionFrequency ProjectionFrequency::once_at_end() { return ProjectionFrequency(0); }

bool ProjectionFrequency::fires(std::int64_t step, std::int64_t total_steps) const {
  if (period_ == 0) return step == total_steps - 1;
  return step % period_ == 0;
}

void TpgmConfig::validate() const {
  if (t_proj < 1) throw ContractError("T_proj must be >= 1");
  if (!(model.learning_rate > 0.0)) throw ContractError("model_lr must be > 0");
  if (!(radius_lr >= 0.0) || !std::isfinite(radius_lr)) {
    throw ContractError("radius_lr must be finite and >= 0");
  }
  if (!(tv_mu >= 0.0)) throw ContractError("tv_mu must be >= 0");
  if (!(radius_l2_mu >= 0.0)) throw ContractError("radius_l2_mu must be >= 0");
  if (!(gamma_init > 0.0)) throw ContractError("gamma_init must be > 0");
  if (model.epochs < 1) throw ContractError("epochs must be >= 1");
}

PenaltyValue tv_penalty(const std::vector<double>& alphas, const std::vector<int>& blocks,
                        double mu) {
  if (alphas.size() != blocks.size()) {
    throw ContractError("tv_penalty: one block id per ratio required");
  }
  PenaltyValue out;
  out.gradient.assign(alphas.size(), 0.0);
  if (mu == 0.0) return out;
  // Consecutive members of the same block, in the given (layer) order.
  std::vector<std::pair<int, std::size_t>> last_seen;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    auto it = std::find_if(last_seen.begin(), last_seen.end(),
                           [&](const auto& p) { return p.first == blocks[i]; });
    if (it == last_seen.end()) {
      last_seen.emplace_back(blocks[i], i);
      continue;
    }
    const std::size_t prev = it->second;
    const double diff = alphas[i] - alphas[prev];
    out.value += mu * std::abs(diff);
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out.gradient[i] += mu * sign;
    out.gradient[prev] -= mu * sign;
    it->second = i;
  }
  return out;
}

PenaltyValue radius_l2_penalty(const Tensor& radii, double mu) {
  if (!(mu >= 0.0)) throw ContractError("radius_l2_penalty: mu must be >= 0");
  PenaltyValue out;
  out.gradient.assign(radii.size(), 0.0);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    out.value += mu * radii[i] * radii[i];
    out.gradient[i] = 2.0 * mu * radii[i];
  }
  return out;
}

double projection_update(ValidationStream& val, const ModelSnapshot& pretrained,
                         const Model& current, RadiusVector& radii, const TpgmConfig& cfg) {
  cfg.validate();
  const ModelSnapshot raw = snapshot(current);
  check_groups_aligned(pretrained, raw);
  radii.check_alignment(pretrained);

  const std::vector<std::size_t> order = layer_order(pretrained);
  std::vector<int> ordered_blocks;
  for (std::size_t idx : order) ordered_blocks.push_back(pretrained[idx].block_id);

  Model projected = current;
  Batch fixed_batch;
  bool have_fixed = false;
  double last_loss = 0.0;

  for (int tau = 0; tau < cfg.t_proj; ++tau) {
    ProjectAllResult info;
    restore(projected, project_groups(cfg.projection_kind, pretrained, raw, radii, &info));

    if (cfg.resample_val || !have_fixed) {
      fixed_batch = val.next();
      have_fixed = true;
    }
    // Only dL/dtheta~ is used, to form dL/dgamma; no model update happens here.
    const LossAndGrads lg = loss_and_grads(projected, fixed_batch, cfg.model.loss);
    if (!std::isfinite(lg.loss)) throw NumericDomainError("non-finite validation loss");
    last_loss = lg.loss;

    std::vector<double> grads(radii.size(), 0.0);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      grads[i] = gamma_gradient(cfg.projection_kind, pretrained[i].tensor, raw[i].tensor,
                                radii[i], lg.grads[i]);
    }

    if (cfg.tv_mu > 0.0) {
      std::vector<double> ordered_alphas;
      for (std::size_t idx : order) {
        const double nu = info.nus[idx];
        ordered_alphas.push_back(nu == 0.0 ? 1.0 : std::min(1.0, radii[idx] / nu));
      }
      const PenaltyValue tv = tv_penalty(ordered_alphas, ordered_blocks, cfg.tv_mu);
      for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t idx = order[k];
        grads[idx] += tv.gradient[k] * alpha_gradient(radii[idx], info.nus[idx]);
      }
    }
    if (cfg.radius_l2_mu > 0.0) {
      const PenaltyValue l2 = radius_l2_penalty(radii.values(), cfg.radius_l2_mu);
      for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += l2.gradient[i];
    }
    radii.step(grads);
  }
  return last_loss;
}

TpgmResult tpgm_train(const Model& pretrained, const Batch& train, const Batch& val,
                      const TpgmConfig& cfg) {
  cfg.validate();
  train.validate();
  if (val.inputs.rank() != 2 || val.size() == 0) {
    throw ContractError("tpgm_train: validation set is empty");
  }
  val.validate();

  const ModelSnapshot theta0 = snapshot(pretrained);
  Model model = pretrained;
  OptimizerSettings radius_settings;
  radius_settings.kind = cfg.radius_optimizer;
  radius_settings.learning_rate = cfg.radius_lr;
  RadiusVector radii(theta0, cfg.gamma_init, radius_settings);

  TrainingTrace trace;
  for (const auto& g : theta0) {
    trace.group_names.push_back(g.name);
    trace.layer_index.push_back(g.layer_index);
    trace.block_id.push_back(g.block_id);
  }

  const std::int64_t steps = total_steps(train, cfg.model);
  MinibatchStream train_stream(train, cfg.model.batch_size,
                               stream_seed(cfg.model.seed, StreamTag::TrainBatches));
  ValidationStream val_stream(val, cfg.val_batch_size,
                              stream_seed(cfg.model.seed, StreamTag::ValidationBatches));
  Optimizer opt = make_model_optimizer(cfg.model, steps);
  trace.train_loss.reserve(static_cast<std::size_t>(steps));

  bool last_step_projected = false;
  for (std::int64_t t = 0; t < steps; ++t) {
    const double loss = model_step(model, train_stream.next(), cfg.model.loss, opt, t);
    trace.train_loss.push_back(loss);
    last_step_projected = false;
    if (!cfg.f_proj.fires(t, steps)) continue;

    if (!cfg.persist_radius_state) radii.reset_optimizer();
    const double val_loss = projection_update(val_stream, theta0, model, radii, cfg);
    ProjectAllResult info;
    restore(model, project_groups(cfg.projection_kind, theta0, snapshot(model), radii, &info));
    trace.events.push_back(make_event(t, loss, val_loss, radii, info));
    last_step_projected = true;
  }

  if (!last_step_projected) {
    // Enforce the current radii on the returned model without updating them.
    ProjectAllResult info;
    restore(model, project_groups(cfg.projection_kind, theta0, snapshot(model), radii, &info));
    const double val_loss = evaluate_loss(model, val, cfg.model.loss);
    trace.events.push_back(make_event(steps - 1, trace.train_loss.back(), val_loss, radii, info));
  }

  return TpgmResult{std::move(model), std::move(trace), std::move(radii)};
}

void write_trace_csv(std::ostream& out, const TrainingTrace& trace) {
  out << "step,event,group,layer_index,block_id,gamma,alpha,distance,train_loss,val_loss\n";
  std::size_t next_event = 0;
  for (std::size_t t = 0; t < trace.train_loss.size(); ++t) {
    out << t << ",train,,,,,,," << format_double(trace.train_loss[t]) << ",\n";
    while (next_event < trace.events.size() &&
           trace.events[next_event].step == static_cast<std::int64_t>(t)) {
      const auto& ev = trace.events[next_event++];
      for (std::size_t g = 0; g < trace.group_names.size(); ++g) {
        out << ev.step << ",proj," << trace.group_names[g] << ',' << trace.layer_index[g] << ','
            << trace.block_id[g] << ',' << format_double(ev.gammas[g]) << ','
            << format_double(ev.alphas[g]) << ',' << format_double(ev.distances[g]) << ','
            << format_double(ev.train_loss) << ',' << format_double(ev.val_loss) << '\n';
      }
    }
  }
}

TrainingTrace read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ContractError("trace CSV is empty");
  if (line != "step,event,group,layer_index,block_id,gamma,alpha,distance,train_loss,val_loss") {
    throw ContractError("trace CSV: unexpected header '" + line + "'");
  }
  TrainingTrace trace;
  std::size_t line_no = 1;
  auto parse = [&](const std::string& s, const char* column) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ContractError("trace CSV line " + std::to_string(line_no) + ": bad " + column +
                          " value '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 10) {
      throw ContractError("trace CSV line " + std::to_string(line_no) + ": expected 10 columns");
    }
    const auto step = static_cast<std::int64_t>(parse(cells[0], "step"));
    if (cells[1] == "train") {
      trace.train_loss.push_back(parse(cells[8], "train_loss"));
      continue;
    }
    if (cells[1] != "proj") {
      throw ContractError("trace CSV line " + std::to_string(line_no) + ": unknown event '" +
                          cells[1] + "'");
    }
    const std::string& name = cells[2];
    if (trace.events.empty() || trace.events.back().step != step ||
        (trace.events.back().gammas.size() == trace.group_names.size() &&
         !trace.group_names.empty() && trace.group_names.front() == name)) {
      ProjectionEvent ev;
      ev.step = step;
      ev.train_loss = parse(cells[8], "train_loss");
      ev.val_loss = parse(cells[9], "val_loss");
      trace.events.push_back(std::move(ev));
    }
    auto& ev = trace.events.back();
    if (trace.events.size() == 1) {
      trace.group_names.push_back(name);
      trace.layer_index.push_back(static_cast<int>(parse(cells[3], "layer_index")));
      trace.block_id.push_back(static_cast<int>(parse(cells[4], "block_id")));
    } else if (ev.gammas.size() >= trace.group_names.size() ||
               trace.group_names[ev.gammas.size()] != name) {
      throw ContractError("trace CSV line " + std::to_string(line_no) +
                          ": group order differs from the first event");
    }
    ev.gammas.push_back(parse(cells[5], "gamma"));
    ev.alphas.push_back(parse(cells[6], "alpha"));
    ev.distances.push_back(parse(cells[7], "distance"));
  }
  return trace;
}

}  // namespace tpgm
