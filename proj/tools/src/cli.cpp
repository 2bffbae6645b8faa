#include "tpgm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include "tpgm/bench.hpp"
#include "tpgm/errors.hpp"
#include "tpgm/parallel.hpp"
#include "tpgm/theory.hpp"

namespace tpgm::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
  std::string method;
  bool quiet = false;
  std::string trace_file;
};

/// A numerical failure that has already been reported; maps to exit code 2.
struct RunFailed {};

std::ofstream open_under(const std::string& dir, const std::string& name) {
  const fs::path p = fs::path(dir) / name;
  fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  return f;
}

void require_config(const Options& o, const char* cmd) {
  if (o.config.empty()) throw ConfigError(std::string(cmd) + ": --config is required");
}

std::uint64_t seed_value(std::int64_t s) {
  if (s < 0) throw ConfigError("--seed: must be >= 0");
  return static_cast<std::uint64_t>(s);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  require_config(o, "bench");
  bench::SuiteConfig cfg = bench::load_suite_config(o.config);
  if (o.seed) cfg.seeds = {seed_value(*o.seed)};
  bench::SuiteOptions opts;
  opts.workers = default_worker_count();
  opts.method_filter = o.method;
  opts.out_dir = o.out.empty() ? "." : o.out;
  opts.quiet = o.quiet;
  const bench::SuiteResult result = bench::run_suite(cfg, opts);

  if (!o.quiet) {
    std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>> agg;
    for (const auto& r : result.runs) {
      if (r.metrics.status != "ok") continue;
      auto& a = agg[{r.method, r.train_fraction}];
      a.first.push_back(r.metrics.id_loss);
      a.second.push_back(r.metrics.ood_loss);
    }
    out << "method,train_fraction,runs,median_id_loss,median_ood_loss\n";
    for (const auto& [key, v] : agg) {
      out << key.first << ',' << bench::format_double(key.second) << ',' << v.first.size() << ','
          << bench::format_double(median(v.first)) << ',' << bench::format_double(median(v.second)) << '\n';
    }
    out << "wrote " << (fs::path(opts.out_dir) / cfg.results_file).string() << '\n';
  }
  bool failed = false;
  for (const auto& r : result.runs) {
    if (r.metrics.status == "ok") continue;
    err << "run failed: method " << r.method << " seed " << r.seed << " train_fraction "
        << bench::format_double(r.train_fraction) << ": " << r.metrics.status << '\n';
    failed = true;
  }
  if (failed) throw RunFailed{};
}

void cmd_theory(const Options& o, std::ostream& out, std::ostream& err) {
  require_config(o, "theory");
  theory::TheoryConfig cfg = theory::load_theory_config(o.config);
  if (o.seed) {
    const std::uint64_t s = seed_value(*o.seed);
    for (auto& seed : cfg.scan.seeds) seed += s;
    if (cfg.bounds) cfg.bounds->seed = s;
  }
  const std::string dir = o.out.empty() ? "." : o.out;
  const std::size_t workers = default_worker_count();
  const theory::ScanResult scan = theory::optimal_alpha_scan(cfg.scan, workers);
  {
    auto f = open_under(dir, "scan.csv");
    theory::write_scan_csv(f, scan);
  }
  {
    auto f = open_under(dir, "scan_summary.csv");
    theory::write_scan_summary_csv(f, scan);
  }
  if (!o.quiet) theory::write_scan_summary_csv(out, scan);

  if (cfg.bounds) {
    const theory::BoundCheckReport rep = theory::run_bound_checks(*cfg.bounds, workers);
    auto f = open_under(dir, "bound_checks.csv");
    f << "checks,violations,max_excess,tolerance\n"
      << rep.checks << ',' << rep.violations << ',' << bench::format_double(rep.max_excess) << ','
      << bench::format_double(rep.tolerance) << '\n';
    if (!o.quiet) {
      out << "bound checks: " << rep.checks << " checks, " << rep.violations
          << " violations, max excess " << bench::format_double(rep.max_excess) << '\n';
    }
    if (rep.violations > 0) {
      err << "pointwise bound violated in " << rep.violations << " of " << rep.checks
          << " checks (seed " << cfg.bounds->seed << ")\n";
      throw RunFailed{};
    }
  }
}

void cmd_lemmas(const Options& o, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = o.seed ? seed_value(*o.seed) : 0;
  const theory::LemmaReport rep = theory::run_lemma_checks(100, 20, seed);
  out << "problems " << rep.problems << '\n'
      << "lemma1_max_residual " << bench::format_double(rep.lemma1_max_residual) << '\n'
      << "lemma2_max_violation " << bench::format_double(rep.lemma2_max_violation) << '\n';
  if (!o.out.empty()) {
    auto f = open_under(o.out, "lemmas.csv");
    f << "seed,problems,lemma1_max_residual,lemma2_max_violation\n"
      << seed << ',' << rep.problems << ',' << bench::format_double(rep.lemma1_max_residual) << ','
      << bench::format_double(rep.lemma2_max_violation) << '\n';
  }
  if (rep.lemma1_max_residual >= 1e-8 || rep.lemma2_max_violation >= 1e-12) {
    err << "lemma check exceeded tolerance (seed " << seed << ")\n";
    throw RunFailed{};
  }
}

void cmd_trace(const Options& o, std::ostream& out) {
  std::ifstream in(o.trace_file);
  if (!in) throw ConfigError("trace: cannot open " + o.trace_file);
  const TrainingTrace trace = read_trace_csv(in);
  const auto rows = summarize_trace(trace);
  write_block_summary_csv(out, rows);
  if (!o.out.empty()) {
    auto f = open_under(o.out, "trace_summary.csv");
    write_block_summary_csv(f, rows);
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trainable projected fine-tuning experiments", "tpgm"};
  app.require_subcommand(1);
  Options o;
  std::int64_t seed = 0;

  auto common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };
  CLI::App* bench = app.add_subcommand("bench", "Run a benchmark suite");
  common(bench, true);
  bench->add_option("--method", o.method, "Only run this method entry");
  CLI::App* theory = app.add_subcommand("theory", "Optimal-ratio scan and bound checks");
  common(theory, true);
  CLI::App* lemmas = app.add_subcommand("lemmas", "Check the in-span lemmas on random problems");
  common(lemmas, false);
  CLI::App* trace = app.add_subcommand("trace", "Summarize a radius trace CSV per block");
  common(trace, false);
  trace->add_option("file", o.trace_file, "Trace CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed")) o.seed = seed;
  }

  try {
    if (bench->parsed()) cmd_bench(o, out, err);
    if (theory->parsed()) cmd_theory(o, out, err);
    if (lemmas->parsed()) cmd_lemmas(o, out, err);
    if (trace->parsed()) cmd_trace(o, out);
  } catch (const RunFailed&) {
    return 2;
  } catch (const NumericDomainError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DegenerateInputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace tpgm::cli
