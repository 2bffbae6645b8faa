#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <ostream>

#include "tpgm/bench.hpp"
#include "tpgm/errors.hpp"
#include "tpgm/parallel.hpp"

namespace tpgm::bench {

namespace fs = std::filesystem;

namespace {

std::string fraction_tag(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

std::string run_stem(const std::string& method, std::uint64_t seed, double fraction) {
  return method + "_seed" + std::to_string(seed) + "_frac" + fraction_tag(fraction);
}

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

struct SeedData {
  ShiftDataset data;
  Model model0;
};

struct JobOutput {
  SuiteRun run;
  std::vector<SelectionRow> selection;
};

}  // namespace

SuiteResult run_suite(const SuiteConfig& cfg, const SuiteOptions& options) {
  std::vector<const MethodEntry*> methods;
  for (const auto& m : cfg.methods) {
    if (options.method_filter.empty() || m.name == options.method_filter) methods.push_back(&m);
  }
  if (methods.empty()) {
    throw ConfigError("method '" + options.method_filter + "' is not defined in the config");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  const std::string hash = cfg.hash();
  std::mutex log_mutex;
  auto log = [&](const std::string& msg) {
    if (options.quiet) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    std::cerr << msg << '\n';
  };

  std::vector<std::optional<SeedData>> per_seed(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    ShiftDataset data = gen_shift_dataset(cfg.dataset, seed);
    Model model0 = pretrain_model(cfg.dataset, data, cfg.pretrain, seed);
    log("pretrained seed " + std::to_string(seed));
    per_seed[i].emplace(SeedData{std::move(data), std::move(model0)});
  });
  if (!options.out_dir.empty() && cfg.save_models) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      const fs::path p = fs::path(options.out_dir) / cfg.models_dir /
                         ("pretrained_seed" + std::to_string(cfg.seeds[i]) + ".tpgm");
      fs::create_directories(p.parent_path());
      save_model(p.string(), per_seed[i]->model0);
    }
  }

  const std::size_t n_frac = cfg.train_fractions.size();
  const std::size_t n_jobs = methods.size() * cfg.seeds.size() * n_frac;
  std::vector<JobOutput> jobs(n_jobs);
  parallel_for(n_jobs, workers, [&](std::size_t j) {
    const MethodEntry& entry = *methods[j / (cfg.seeds.size() * n_frac)];
    const std::size_t si = (j / n_frac) % cfg.seeds.size();
    const double fraction = cfg.train_fractions[j % n_frac];
    const std::uint64_t seed = cfg.seeds[si];
    const SeedData& sd = *per_seed[si];
    const ShiftDataset data = fraction < 1.0 ? with_train_fraction(sd.data, fraction) : sd.data;

    std::optional<MethodOutput> best;
    std::size_t best_index = 0;
    std::vector<SelectionRow> rows;
    for (std::size_t c = 0; c < entry.candidates.size(); ++c) {
      FineTuneConfig ft = cfg.finetune;
      ft.learning_rate = entry.candidate_lrs[c];
      MethodOutput out = run_method(entry.candidates[c], data, sd.model0, ft, seed, cfg.distance_norm);
      rows.push_back({entry.name, seed, fraction, entry.candidate_labels[c], out.metrics.val_loss, false});
      const bool ok = out.metrics.status == "ok";
      const bool better = ok && (!best || best->metrics.status != "ok" ||
                                 out.metrics.val_loss < best->metrics.val_loss);
      if (!best || better) {
        best = std::move(out);
        best_index = c;
      }
    }
    rows[best_index].selected = true;

    JobOutput& slot = jobs[j];
    slot.run.method = entry.name;
    slot.run.seed = seed;
    slot.run.train_fraction = fraction;
    slot.run.metrics = std::move(best->metrics);
    slot.run.metrics.method = entry.name;
    slot.run.metrics.train_fraction = fraction;
    slot.run.metrics.config_hash = hash;
    slot.run.trace = std::move(best->trace);
    slot.selection = std::move(rows);
    if (!options.out_dir.empty() && cfg.save_models) {
      const fs::path p = fs::path(options.out_dir) / cfg.models_dir / (run_stem(entry.name, seed, fraction) + ".tpgm");
      fs::create_directories(p.parent_path());
      save_model(p.string(), best->model);
    }
    log(entry.name + " seed " + std::to_string(seed) + " fraction " + fraction_tag(fraction) + ": " +
        slot.run.metrics.status);
  });

  SuiteResult result;
  for (auto& j : jobs) {
    result.runs.push_back(std::move(j.run));
    for (auto& s : j.selection) result.selection.push_back(std::move(s));
  }
  auto key = [](const auto& r) { return std::tie(r.method, r.seed, r.train_fraction); };
  std::stable_sort(result.runs.begin(), result.runs.end(),
                   [&](const SuiteRun& a, const SuiteRun& b) { return key(a) < key(b); });
  std::stable_sort(result.selection.begin(), result.selection.end(),
                   [&](const SelectionRow& a, const SelectionRow& b) { return key(a) < key(b); });

  if (!options.out_dir.empty()) {
    const fs::path root(options.out_dir);
    {
      std::ofstream out = open_output(root / cfg.results_file);
      write_results_csv(out, result);
    }
    {
      std::ofstream out = open_output(root / cfg.selection_file);
      write_selection_csv(out, result);
    }
    {
      std::ofstream out = open_output(root / "config.resolved.json");
      out << cfg.resolved_json() << '\n';
    }
    if (cfg.write_traces) {
      for (const auto& r : result.runs) {
        if (!r.trace) continue;
        std::ofstream out = open_output(root / cfg.traces_dir / (run_stem(r.method, r.seed, r.train_fraction) + ".csv"));
        write_trace_csv(out, *r.trace);
      }
    }
  }
  return result;
}

void write_results_csv(std::ostream& out, const SuiteResult& result) {
  out << "method,seed,train_fraction,id_loss,ood_loss,id_acc,ood_acc,mean_distance,config_hash,status\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : result.runs) {
    const MetricsRow& m = r.metrics;
    std::string status = m.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << r.method << ',' << r.seed << ',' << format_double(r.train_fraction) << ','
        << format_double(m.id_loss) << ',' << format_double(m.ood_loss) << ',' << opt(m.id_acc) << ','
        << opt(m.ood_acc) << ',' << format_double(m.mean_distance) << ',' << m.config_hash << ','
        << status << '\n';
  }
}

void write_selection_csv(std::ostream& out, const SuiteResult& result) {
  out << "method,seed,train_fraction,candidate,val_loss,selected\n";
  for (const auto& s : result.selection) {
    out << s.method << ',' << s.seed << ',' << format_double(s.train_fraction) << ',' << s.candidate << ','
        << format_double(s.val_loss) << ',' << (s.selected ? 1 : 0) << '\n';
  }
}

}  // namespace tpgm::bench
