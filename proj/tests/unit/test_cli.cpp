#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "tpgm/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "tpgm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = tpgm::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallSuite = R"({"name": "cli", "seeds": [0, 1],
  "dataset": {"n_pretrain": 200, "n_train": 40, "n_val": 20, "n_test_id": 50, "n_test_ood": 50},
  "pretrain": {"lr": 0.05, "epochs": 3, "batch_size": 32},
  "finetune": {"lr": 0.05, "epochs": 2, "batch_size": 16},
  "methods": [{"name": "vanilla_ft", "kind": "vanilla_ft"}, {"name": "tpgm", "kind": "tpgm"}]})";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  const Outcome missing = run({"bench"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("--config") != std::string::npos);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"trace"}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("bad configs exit with 1 and name the problem") {
  const fs::path dir = tpgm::testing::fresh_dir(TPGM_TEST_TMP, "cli_bad");
  const fs::path cfg = write_file(dir, "bad.json", R"({"methods": [{"name": "x", "kind": "mars_sp", "gama": 1}]})");
  const Outcome r = run({"bench", "--config", cfg.string(), "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("methods[0].gama") != std::string::npos);
  CHECK(run({"bench", "--config", (dir / "nope.json").string()}).code == 1);
  CHECK(run({"theory", "--config", cfg.string()}).code == 1);
}

TEST_CASE("lemmas") {
  const fs::path dir = tpgm::testing::fresh_dir(TPGM_TEST_TMP, "cli_lemmas");
  const Outcome r = run({"lemmas", "--seed", "7", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("lemma1_max_residual") != std::string::npos);
  CHECK(r.out.find("lemma2_max_violation") != std::string::npos);
  CHECK(fs::exists(dir / "lemmas.csv"));
}

TEST_CASE("theory writes its tables under --out") {
  const fs::path dir = tpgm::testing::fresh_dir(TPGM_TEST_TMP, "cli_theory");
  const fs::path cfg = write_file(dir, "scan.json", R"({"d": 12, "n": 6, "samples": 200, "seeds": [0, 1],
      "epsilons": [0, 1], "alphas": {"count": 5}, "bound_checks": {"problems": 20, "samples": 10, "max_d": 16}})");
  const fs::path out = dir / "out";
  const Outcome r = run({"theory", "--config", cfg.string(), "--out", out.string(), "--quiet"});
  CHECK(r.code == 0);
  CHECK(fs::exists(out / "scan.csv"));
  CHECK(fs::exists(out / "bound_checks.csv"));
  const std::string summary = slurp(out / "scan_summary.csv");
  CHECK(summary.rfind("epsilon,alpha_star,mean_loss\n0,0,0\n", 0) == 0);
}

TEST_CASE("bench then trace") {
  const fs::path dir = tpgm::testing::fresh_dir(TPGM_TEST_TMP, "cli_bench");
  const fs::path cfg = write_file(dir, "suite.json", kSmallSuite);
  const fs::path out = dir / "out";
  const Outcome r = run({"bench", "--config", cfg.string(), "--out", out.string(), "--quiet"});
  CHECK(r.code == 0);
  const std::string results = slurp(out / "results.csv");
  CHECK(std::count(results.begin(), results.end(), '\n') == 1 + 4);
  CHECK(fs::exists(out / "selection.csv"));
  CHECK(fs::exists(out / "config.resolved.json"));

  const Outcome one_seed = run({"bench", "--config", cfg.string(), "--out", (dir / "s5").string(),
                                "--quiet", "--seed", "5", "--method", "tpgm"});
  CHECK(one_seed.code == 0);
  const std::string filtered = slurp(dir / "s5" / "results.csv");
  CHECK(std::count(filtered.begin(), filtered.end(), '\n') == 2);
  CHECK(filtered.find("tpgm,5,") != std::string::npos);

  fs::path trace_file;
  for (const auto& e : fs::directory_iterator(out / "traces")) trace_file = e.path();
  REQUIRE_FALSE(trace_file.empty());
  const Outcome t = run({"trace", trace_file.string(), "--out", (dir / "summary").string()});
  CHECK(t.code == 0);
  CHECK(t.out.rfind("block_id,groups,mean_gamma,mean_alpha,mean_distance\n", 0) == 0);
  CHECK(slurp(dir / "summary" / "trace_summary.csv") == t.out);
  CHECK(run({"trace", (dir / "missing.csv").string()}).code == 1);
}

TEST_CASE("diverging runs exit with 2") {
  const fs::path dir = tpgm::testing::fresh_dir(TPGM_TEST_TMP, "cli_diverge");
  std::string text = kSmallSuite;
  const std::string ft = R"("lr": 0.05, "epochs": 2)";
  text.replace(text.find(ft), ft.size(), R"("lr": 1e30, "epochs": 2)");
  const fs::path cfg = write_file(dir, "suite.json", text);
  const Outcome r = run({"bench", "--config", cfg.string(), "--out", dir.string(), "--quiet"});
  CHECK(r.code == 2);
  CHECK(r.err.find("failed") != std::string::npos);
  CHECK(fs::exists(dir / "results.csv"));
}

TEST_CASE("trace summary averages the last event per block") {
  tpgm::TrainingTrace trace;
  trace.group_names = {"a", "b", "c"};
  trace.layer_index = {0, 1, 2};
  trace.block_id = {0, 0, 1};
  trace.train_loss = {1.0, 0.5};
  tpgm::ProjectionEvent first{0, 1.0, 1.0, {9, 9, 9}, {1, 1, 1}, {9, 9, 9}};
  tpgm::ProjectionEvent last{1, 0.5, 0.4, {1, 3, 5}, {0.2, 0.4, 1.0}, {1, 2, 4}};
  trace.events = {first, last};
  const auto rows = tpgm::cli::summarize_trace(trace);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].groups == 2);
  CHECK(rows[0].mean_gamma == 2.0);
  CHECK(rows[0].mean_alpha == doctest::Approx(0.3));
  CHECK(rows[0].mean_distance == 1.5);
  CHECK(rows[1].block_id == 1);
  CHECK(rows[1].mean_gamma == 5.0);
}
