#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "json_object.hpp"

#include "tpgm/bench.hpp"
#include "tpgm/errors.hpp"

namespace tpgm::bench {

namespace {

using nlohmann::json;
using detail::Obj;

LrSchedule parse_schedule(const std::string& s, const std::string& where) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "cosine") return LrSchedule::Cosine;
  throw ConfigError(where + ": expected constant or cosine, got '" + s + "'");
}

std::string schedule_name(LrSchedule s) { return s == LrSchedule::Cosine ? "cosine" : "constant"; }

ProjectionKind parse_norm(const std::string& s, const std::string& where) {
  if (s == "l2") return ProjectionKind::L2;
  if (s == "mars") return ProjectionKind::Mars;
  throw ConfigError(where + ": expected l2 or mars, got '" + s + "'");
}

std::string norm_name(ProjectionKind k) { return k == ProjectionKind::Mars ? "mars" : "l2"; }

FineTuneConfig parse_train(const json& j, const std::string& path, FineTuneConfig def) {
  Obj o(j, path);
  def.learning_rate = o.number("lr", def.learning_rate);
  def.epochs = static_cast<int>(o.integer("epochs", def.epochs));
  def.batch_size = o.count("batch_size", def.batch_size);
  def.schedule = parse_schedule(o.text("schedule", schedule_name(def.schedule)), o.path("schedule"));
  o.finish();
  if (!(def.learning_rate > 0.0) || !std::isfinite(def.learning_rate)) {
    throw ConfigError(path + ".lr: must be a positive finite number");
  }
  if (def.epochs < 1) throw ConfigError(path + ".epochs: must be >= 1");
  return def;
}

ShiftSpec parse_dataset(const json& j) {
  Obj o(j, "dataset");
  ShiftSpec s;
  const std::string task = o.text("task", "regression");
  if (task == "regression") {
    s.task = TaskKind::Regression;
  } else if (task == "classification") {
    s.task = TaskKind::Classification;
  } else {
    throw ConfigError("dataset.task: expected regression or classification, got '" + task + "'");
  }
  s.input_dim = o.count("input_dim", s.input_dim);
  s.hidden = o.count("hidden", s.hidden);
  s.span_dim = o.count("span_dim", s.span_dim);
  s.num_classes = o.count("num_classes", s.num_classes);
  s.teacher_scale = o.number("teacher_scale", s.teacher_scale);
  s.task_shift = o.number("task_shift", s.task_shift);
  s.label_noise = o.number("label_noise", s.label_noise);
  s.id_leak = o.number("id_leak", s.id_leak);
  s.ood_shift = o.number("ood_shift", s.ood_shift);
  s.ood_rotation = o.number("ood_rotation", s.ood_rotation);
  s.n_pretrain = o.count("n_pretrain", s.n_pretrain);
  s.n_train = o.count("n_train", s.n_train);
  s.n_val = o.count("n_val", s.n_val);
  s.n_test_id = o.count("n_test_id", s.n_test_id);
  s.n_test_ood = o.count("n_test_ood", s.n_test_ood);
  o.finish();
  s.validate();
  return s;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

/// Cartesian product of named sweep axes, first axis outermost.
struct Axis {
  std::string key;
  std::vector<double> values;
};

void expand(const std::vector<Axis>& axes, std::size_t depth, std::vector<double>& current,
            const std::function<void(const std::vector<double>&)>& emit) {
  if (depth == axes.size()) {
    emit(current);
    return;
  }
  for (double v : axes[depth].values) {
    current[depth] = v;
    expand(axes, depth + 1, current, emit);
  }
}

ProjectionFrequency parse_frequency(Obj& o) {
  if (!o.has("f_proj")) return ProjectionFrequency::every(1);
  const json& v = o.raw("f_proj");
  if (v.is_string()) {
    if (v.get<std::string>() == "once_at_end") return ProjectionFrequency::once_at_end();
    throw ConfigError(o.path("f_proj") + ": expected a positive integer or \"once_at_end\"");
  }
  const std::int64_t f = Obj::as_integer(v, o.path("f_proj"));
  if (f < 1) throw ConfigError(o.path("f_proj") + ": must be >= 1");
  return ProjectionFrequency::every(f);
}

MethodEntry parse_method(const json& j, std::size_t index, const FineTuneConfig& finetune) {
  const std::string path = "methods[" + std::to_string(index) + "]";
  Obj o(j, path);
  MethodEntry entry;
  entry.name = o.text("name", "");
  if (entry.name.empty()) throw ConfigError(path + ".name: required");
  if (entry.name.find_first_of(",\n\"/") != std::string::npos) {
    throw ConfigError(path + ".name: must not contain commas, quotes, slashes or newlines");
  }
  if (!o.has("kind")) throw ConfigError(path + ".kind: required");
  const std::string kind = o.text("kind", "");

  std::vector<Axis> axes;
  axes.push_back({"lr", o.numbers("lr", finetune.learning_rate)});
  TpgmConfig tpgm_base;
  if (kind == "vanilla_ft" || kind == "linear_probe") {
  } else if (kind == "l2sp") {
    axes.push_back({"mu", o.numbers("mu", L2Sp{}.mu)});
  } else if (kind == "mars_sp") {
    axes.push_back({"gamma", o.numbers("gamma", MarsSp{}.gamma)});
  } else if (kind == "lp_ft") {
    axes.push_back({"lp_epochs", o.numbers("lp_epochs", LpFt{}.lp_epochs)});
  } else if (kind == "interp") {
    axes.push_back({"ratio", o.numbers("ratio", Interp{}.ratio)});
  } else if (kind == "tpgm" || kind == "tpgm_c") {
    tpgm_base.projection_kind = parse_norm(o.text("projection", "l2"), o.path("projection"));
    tpgm_base.f_proj = parse_frequency(o);
    tpgm_base.t_proj = static_cast<int>(o.integer("t_proj", tpgm_base.t_proj));
    tpgm_base.gamma_init = o.number("gamma_init", tpgm_base.gamma_init);
    tpgm_base.val_batch_size = o.count("val_batch_size", tpgm_base.val_batch_size);
    tpgm_base.resample_val = o.boolean("resample_val", tpgm_base.resample_val);
    tpgm_base.persist_radius_state = o.boolean("persist_radius_state", tpgm_base.persist_radius_state);
    const std::string opt = o.text("radius_optimizer", "adam");
    if (opt == "adam") {
      tpgm_base.radius_optimizer = OptimizerKind::Adam;
    } else if (opt == "sgd") {
      tpgm_base.radius_optimizer = OptimizerKind::Sgd;
    } else {
      throw ConfigError(o.path("radius_optimizer") + ": expected adam or sgd, got '" + opt + "'");
    }
    axes.push_back({"radius_lr", o.numbers("radius_lr", tpgm_base.radius_lr)});
    axes.push_back({"tv_mu", o.numbers("tv_mu", 0.0)});
    if (kind == "tpgm_c") {
      if (!o.has("radius_l2_mu")) throw ConfigError(path + ".radius_l2_mu: required for tpgm_c");
      axes.push_back({"radius_l2_mu", o.numbers("radius_l2_mu", 0.0)});
    }
  } else {
    throw ConfigError(path + ".kind: unknown method kind '" + kind + "'");
  }
  o.finish();

  std::vector<double> current(axes.size());
  expand(axes, 0, current, [&](const std::vector<double>& v) {
    const double lr = v[0];
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(path + ".lr: must be a positive finite number");
    MethodSpec spec;
    if (kind == "vanilla_ft") {
      spec = VanillaFt{};
    } else if (kind == "linear_probe") {
      spec = LinearProbe{};
    } else if (kind == "l2sp") {
      if (!(v[1] >= 0.0)) throw ConfigError(path + ".mu: must be >= 0");
      spec = L2Sp{v[1]};
    } else if (kind == "mars_sp") {
      if (!(v[1] >= 0.0)) throw ConfigError(path + ".gamma: must be >= 0");
      spec = MarsSp{v[1]};
    } else if (kind == "lp_ft") {
      if (std::floor(v[1]) != v[1] || v[1] < 1 || v[1] >= finetune.epochs) {
        throw ConfigError(path + ".lp_epochs: must be an integer in [1, finetune.epochs)");
      }
      spec = LpFt{static_cast<int>(v[1])};
    } else if (kind == "interp") {
      if (!(v[1] >= 0.0 && v[1] <= 1.0)) throw ConfigError(path + ".ratio: must lie in [0, 1]");
      spec = Interp{v[1]};
    } else {
      TpgmConfig c = tpgm_base;
      c.radius_lr = v[1];
      c.tv_mu = v[2];
      if (kind == "tpgm_c") {
        c.radius_l2_mu = v[3];
        if (!(c.radius_l2_mu > 0.0)) throw ConfigError(path + ".radius_l2_mu: must be > 0 for tpgm_c");
      }
      try {
        c.validate();
      } catch (const ContractError& e) {
        throw ConfigError(path + ": " + e.what());
      }
      spec = Tpgm{c};
    }
    std::string label;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (!label.empty()) label += ';';
      label += axes[i].key + "=" + short_number(v[i]);
    }
    entry.candidates.push_back(spec);
    entry.candidate_labels.push_back(label);
    entry.candidate_lrs.push_back(lr);
  });
  return entry;
}

std::vector<std::uint64_t> parse_seeds(const json& v) {
  std::vector<std::uint64_t> seeds;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::int64_t s = Obj::as_integer(v[i], "seeds[" + std::to_string(i) + "]");
      if (s < 0) throw ConfigError("seeds[" + std::to_string(i) + "]: must be >= 0");
      seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else {
    Obj o(v, "seeds");
    const std::int64_t start = o.integer("start", 0);
    const std::int64_t count = o.integer("count", 1);
    o.finish();
    if (start < 0 || count < 1) throw ConfigError("seeds: need start >= 0 and count >= 1");
    for (std::int64_t i = 0; i < count; ++i) seeds.push_back(static_cast<std::uint64_t>(start + i));
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("seeds: duplicate seed");
  return seeds;
}

json train_json(const FineTuneConfig& c) {
  return {{"lr", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"schedule", schedule_name(c.schedule)}};
}

json method_json(const MethodSpec& m) {
  json j;
  j["kind"] = method_kind_name(m);
  std::visit(
      [&](const auto& s) {
        using M = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<M, L2Sp>) {
          j["mu"] = s.mu;
        } else if constexpr (std::is_same_v<M, MarsSp>) {
          j["gamma"] = s.gamma;
        } else if constexpr (std::is_same_v<M, LpFt>) {
          j["lp_epochs"] = s.lp_epochs;
        } else if constexpr (std::is_same_v<M, Interp>) {
          j["ratio"] = s.ratio;
        } else if constexpr (std::is_same_v<M, Tpgm>) {
          const TpgmConfig& c = s.config;
          j["projection"] = norm_name(c.projection_kind);
          if (c.f_proj.is_once_at_end()) {
            j["f_proj"] = "once_at_end";
          } else {
            j["f_proj"] = c.f_proj.period();
          }
          j["t_proj"] = c.t_proj;
          j["radius_lr"] = c.radius_lr;
          j["radius_optimizer"] = c.radius_optimizer == OptimizerKind::Adam ? "adam" : "sgd";
          j["tv_mu"] = c.tv_mu;
          j["radius_l2_mu"] = c.radius_l2_mu;
          j["gamma_init"] = c.gamma_init;
          j["val_batch_size"] = c.val_batch_size;
          j["resample_val"] = c.resample_val;
          j["persist_radius_state"] = c.persist_radius_state;
        }
      },
      m);
  return j;
}

}  // namespace

FineTuneConfig default_pretrain_config() {
  FineTuneConfig c;
  c.learning_rate = 0.05;
  c.epochs = 60;
  c.batch_size = 32;
  return c;
}

FineTuneConfig default_finetune_config() {
  FineTuneConfig c;
  c.learning_rate = 0.05;
  c.epochs = 60;
  c.batch_size = 32;
  return c;
}

std::string SuiteConfig::resolved_json() const {
  json j;
  j["name"] = name;
  const ShiftSpec& s = dataset;
  j["dataset"] = {{"task", s.task == TaskKind::Regression ? "regression" : "classification"},
                  {"input_dim", s.input_dim},
                  {"hidden", s.hidden},
                  {"span_dim", s.span_dim},
                  {"num_classes", s.num_classes},
                  {"teacher_scale", s.teacher_scale},
                  {"task_shift", s.task_shift},
                  {"label_noise", s.label_noise},
                  {"id_leak", s.id_leak},
                  {"ood_shift", s.ood_shift},
                  {"ood_rotation", s.ood_rotation},
                  {"n_pretrain", s.n_pretrain},
                  {"n_train", s.n_train},
                  {"n_val", s.n_val},
                  {"n_test_id", s.n_test_id},
                  {"n_test_ood", s.n_test_ood}};
  j["pretrain"] = train_json(pretrain);
  j["finetune"] = train_json(finetune);
  j["seeds"] = seeds;
  j["train_fractions"] = train_fractions;
  j["distance_norm"] = norm_name(distance_norm);
  j["selection"] = "val_id";
  json method_list = json::array();
  for (const auto& m : methods) {
    json entry;
    entry["name"] = m.name;
    json cands = json::array();
    for (std::size_t i = 0; i < m.candidates.size(); ++i) {
      json c = method_json(m.candidates[i]);
      c["lr"] = m.candidate_lrs[i];
      c["label"] = m.candidate_labels[i];
      cands.push_back(std::move(c));
    }
    entry["candidates"] = std::move(cands);
    method_list.push_back(std::move(entry));
  }
  j["methods"] = std::move(method_list);
  return j.dump();
}

std::string SuiteConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved_json()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SuiteConfig parse_suite_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  Obj root(doc, "");
  SuiteConfig cfg;
  cfg.name = root.text("name", cfg.name);

  if (root.has("selection")) {
    const std::string sel = root.text("selection", "val_id");
    if (sel != "val_id") {
      throw ConfigError("selection: hyperparameters may only be selected on ID validation data (val_id), got '" +
                        sel + "'");
    }
  }
  cfg.distance_norm = parse_norm(root.text("distance_norm", "l2"), "distance_norm");
  cfg.dataset = root.has("dataset") ? parse_dataset(root.raw("dataset")) : ShiftSpec{};
  cfg.dataset.validate();

  cfg.pretrain = root.has("pretrain") ? parse_train(root.raw("pretrain"), "pretrain", cfg.pretrain) : cfg.pretrain;
  cfg.finetune = root.has("finetune") ? parse_train(root.raw("finetune"), "finetune", cfg.finetune) : cfg.finetune;
  cfg.pretrain.loss = cfg.finetune.loss =
      cfg.dataset.task == TaskKind::Regression ? LossKind::Mse : LossKind::SoftmaxCe;

  cfg.seeds = root.has("seeds") ? parse_seeds(root.raw("seeds")) : std::vector<std::uint64_t>{0};
  if (root.has("train_fractions")) {
    cfg.train_fractions = root.numbers("train_fractions", 1.0);
    for (double f : cfg.train_fractions) {
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("train_fractions: each fraction must lie in (0, 1]");
    }
  }

  if (!root.has("methods")) throw ConfigError("methods: required");
  const json& methods = root.raw("methods");
  if (!methods.is_array() || methods.empty()) throw ConfigError("methods: expected a non-empty list");
  std::set<std::string> names;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    MethodEntry e = parse_method(methods[i], i, cfg.finetune);
    if (!names.insert(e.name).second) {
      throw ConfigError("methods[" + std::to_string(i) + "].name: duplicate name '" + e.name + "'");
    }
    cfg.methods.push_back(std::move(e));
  }

  if (root.has("output")) {
    Obj o(root.raw("output"), "output");
    cfg.results_file = o.text("results", cfg.results_file);
    cfg.selection_file = o.text("selection", cfg.selection_file);
    cfg.traces_dir = o.text("traces_dir", cfg.traces_dir);
    cfg.models_dir = o.text("models_dir", cfg.models_dir);
    cfg.write_traces = o.boolean("write_traces", cfg.write_traces);
    cfg.save_models = o.boolean("save_models", cfg.save_models);
    o.finish();
  }
  root.finish();
  return cfg;
}

SuiteConfig load_suite_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_suite_config(text.str());
}

}  // namespace tpgm::bench
