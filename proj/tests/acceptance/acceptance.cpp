#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "test_support.hpp"
#include "tpgm/bench.hpp"
#include "tpgm/numerics.hpp"
#include "tpgm/parallel.hpp"
#include "tpgm/projection.hpp"
#include "tpgm/theory.hpp"

using namespace tpgm;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string details;
};

int failures = 0;

void criterion(int id, const char* name, double budget_seconds, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < budget_seconds;
  const bool pass = v.pass && in_time;
  failures += !pass;
  std::printf("[%s] %2d %s (%s; %.1f s of %.0f s)\n", pass ? "PASS" : "FAIL", id, name, v.details.c_str(), secs,
              budget_seconds);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bench::SuiteConfig suite(const std::string& file) {
  return bench::load_suite_config((fs::path(TPGM_CONFIG_DIR) / file).string());
}

bench::SuiteResult run(const bench::SuiteConfig& cfg) {
  return bench::run_suite(cfg, {default_worker_count(), "", "", true});
}

bool within_one_ulp(double a, double b) {
  return a == b || std::nextafter(a, b) == b;
}

Tensor random_shape(Rng& rng, double scale) {
  const std::size_t rows = 1 + rng.below(64);
  if (rng.below(4) == 0) return rng.normal_vector(rows, scale);
  return rng.normal_matrix(rows, 1 + rng.below(64), scale);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Relative path -> bytes for every file under dir.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

Verdict projection_fuzz() {
  Rng rng(101);
  std::size_t violations = 0, not_idempotent = 0, cases = 0;
  for (int k = 0; k < 10000; ++k) {
    const Tensor theta0 = random_shape(rng, std::pow(10.0, rng.uniform(-3.0, 3.0)));
    const Tensor theta_t = theta0 + testing::random_like(rng, theta0, std::pow(10.0, rng.uniform(-4.0, 4.0)));
    const double gamma = std::pow(10.0, rng.uniform(-5.0, 5.0));
    for (ProjectionKind kind : {ProjectionKind::L2, ProjectionKind::Mars}) {
      ++cases;
      const Projection p = project(kind, theta0, theta_t, gamma);
      if (constraint_norm(kind, p.theta - theta0) > gamma * (1 + 1e-12) + 1e-15) ++violations;
      const Projection again = project(kind, theta0, p.theta, gamma);
      for (std::size_t i = 0; i < p.theta.size(); ++i) {
        if (!within_one_ulp(again.theta[i], p.theta[i])) {
          ++not_idempotent;
          break;
        }
      }
    }
  }
  return {violations == 0 && not_idempotent == 0,
          fmt("%zu cases, %zu constraint violations, %zu non-idempotent", cases, violations, not_idempotent)};
}

Verdict gamma_gradient_check() {
  Rng rng(202);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  while (checked < 1000) {
    const Tensor theta0 = testing::random_tensor(rng, 8);
    const Tensor theta_t = theta0 + testing::random_like(rng, theta0);
    const ProjectionKind kind = checked % 2 ? ProjectionKind::Mars : ProjectionKind::L2;
    const double nu = constraint_norm(kind, theta_t - theta0);
    const double gamma = rng.uniform(0.0, 2.0) * nu;
    // stay clear of the kink at gamma = nu and of the h-neighbourhood of zero
    if (std::abs(nu - gamma) <= 1e-3 * nu || gamma < 1e-4) continue;
    const Tensor w = testing::random_like(rng, theta0);
    auto loss = [&](const Tensor& t) {
      double s = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i) s += w[i] * std::sin(t[i]) + 0.5 * t[i] * t[i];
      return s;
    };
    const Tensor at = project(kind, theta0, theta_t, gamma).theta;
    Tensor up = Tensor::zeros_like(at);
    for (std::size_t i = 0; i < at.size(); ++i) up[i] = w[i] * std::cos(at[i]) + at[i];
    const double analytic = gamma_gradient(kind, theta0, theta_t, gamma, up);
    const double h = 1e-5;
    const double fd = testing::central_difference(
        [&](double g) { return loss(project(kind, theta0, theta_t, g).theta); }, gamma, h);
    if (!testing::fd_agrees(analytic, fd, loss(at), h)) ++bad;
    worst = std::max(worst, testing::relative_error(analytic, fd));
    ++checked;
  }
  return {bad == 0, fmt("%zu configurations, %zu mismatches, max relative error %.2e", checked, bad, worst)};
}

Verdict model_gradient_check() {
  Rng rng(303);
  std::size_t models = 0;
  int bad = 0;
  for (LossKind loss : {LossKind::Mse, LossKind::SoftmaxCe, LossKind::L2Residual}) {
    for (int k = 0; k < 300; ++k, ++models) {
      const testing::ModelCase c = testing::random_mlp_case(rng, loss);
      bad += testing::fd_mismatches(c.model, c.batch, loss, 1e-6);
    }
  }
  return {bad == 0, fmt("%zu models over 3 losses, %d mismatching entries", models, bad)};
}

Verdict pointwise_bound() {
  theory::BoundCheckConfig cfg;
  cfg.problems = 1000;
  cfg.samples_per_problem = 100;
  cfg.max_d = 64;
  cfg.seed = 404;
  const theory::BoundCheckReport r = theory::run_bound_checks(cfg, default_worker_count());
  return {r.violations == 0,
          fmt("%zu checks, %zu violations, max lhs - rhs %.3e", r.checks, r.violations, r.max_excess)};
}

Verdict lemmas() {
  const theory::LemmaReport r = theory::run_lemma_checks(100, 20, 505);
  return {r.lemma1_max_residual < 1e-8 && r.lemma2_max_violation < 1e-12,
          fmt("%zu problems, lemma 1 residual %.2e, lemma 2 violation %.2e", r.problems,
              r.lemma1_max_residual, r.lemma2_max_violation)};
}

Verdict alpha_trend() {
  const theory::TheoryConfig cfg = theory::load_theory_config((fs::path(TPGM_CONFIG_DIR) / "eps_scan.json").string());
  const theory::ScanResult r = theory::optimal_alpha_scan(cfg.scan, default_worker_count());
  bool monotone = true;
  std::string stars;
  for (std::size_t i = 0; i < r.summary.size(); ++i) {
    if (i > 0 && r.summary[i].alpha_star < r.summary[i - 1].alpha_star) monotone = false;
    stars += fmt("%s%.2f", i ? " " : "", r.summary[i].alpha_star);
  }
  const bool zero_first = !r.summary.empty() && r.summary[0].epsilon == 0.0 && r.summary[0].alpha_star == 0.0;
  return {zero_first && monotone && cfg.scan.seeds.size() >= 20 && cfg.scan.alphas.size() == 21,
          fmt("%zu seeds, alpha* = %s", cfg.scan.seeds.size(), stars.c_str())};
}

Verdict group_selectivity() {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const bench::GroupSelectivityResult r = bench::run_group_selectivity(bench::GroupSelectivitySpec{}, seed);
    wins += r.gamma_a < r.gamma_b;
  }
  return {wins >= 18, fmt("gamma_A < gamma_B in %d of 20 seeds", wins)};
}

Verdict ood_trend() {
  const bench::SuiteResult r = run(suite("ood_trend.json"));
  std::map<std::string, std::vector<double>> id, ood;
  std::size_t seeds = 0;
  for (const auto& run : r.runs) {
    id[run.method].push_back(run.metrics.id_loss);
    ood[run.method].push_back(run.metrics.ood_loss);
    seeds = std::max(seeds, id[run.method].size());
  }
  const double t_ood = median(ood["tpgm"]), v_ood = median(ood["vanilla_ft"]);
  const double t_id = median(id["tpgm"]), v_id = median(id["vanilla_ft"]);
  return {seeds == 20 && t_ood <= v_ood && t_id <= 1.05 * v_id,
          fmt("%zu seeds, median ood tpgm %.4f vs vanilla %.4f, median id tpgm %.4f vs vanilla %.4f", seeds, t_ood,
              v_ood, t_id, v_id)};
}

Verdict data_size() {
  const bench::SuiteConfig cfg = suite("data_fraction.json");
  const bench::SuiteResult r = run(cfg);
  std::map<std::uint64_t, std::map<double, double>> gamma;
  for (const auto& run : r.runs) {
    if (run.method == "tpgm" && run.metrics.mean_gamma) gamma[run.seed][run.train_fraction] = *run.metrics.mean_gamma;
  }
  int wins = 0;
  for (const auto& [seed, g] : gamma) wins += g.at(0.1) < g.at(1.0);
  return {gamma.size() == 20 && wins >= 18, fmt("gamma(0.1) < gamma(1.0) in %d of %zu seeds", wins, gamma.size())};
}

Verdict tpgm_c() {
  const bench::SuiteConfig cfg = suite("tpgm_c_sweep.json");
  std::map<std::string, double> mu;
  for (const auto& m : cfg.methods) mu[m.name] = std::get<bench::Tpgm>(m.candidates.front()).config.radius_l2_mu;
  const bench::SuiteResult r = run(cfg);
  std::map<double, std::vector<double>> dist;
  for (const auto& run : r.runs) dist[mu.at(run.method)].push_back(run.metrics.mean_distance);
  bool nonincreasing = true;
  double prev = std::numeric_limits<double>::infinity();
  std::string shown;
  for (const auto& [m, d] : dist) {
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    nonincreasing = nonincreasing && mean <= prev;
    prev = mean;
    shown += fmt("%s%g:%.4f", shown.empty() ? "" : " ", m, mean);
  }
  return {dist.size() == 4 && nonincreasing, fmt("mean distance by mu %s", shown.c_str())};
}

Verdict equivalences() {
  const bench::SuiteConfig cfg = suite("ood_trend.json");
  std::size_t mismatches = 0;
  std::vector<std::uint64_t> seed_list(cfg.seeds.begin(), cfg.seeds.begin() + 10);
  std::vector<std::size_t> per_seed(seed_list.size(), 0);
  parallel_for(seed_list.size(), default_worker_count(), [&](std::size_t k) {
    const std::uint64_t seed = seed_list[k];
    const bench::ShiftDataset data = bench::gen_shift_dataset(cfg.dataset, seed);
    const Model m0 = bench::pretrain_model(cfg.dataset, data, cfg.pretrain, seed);
    const bench::MethodOutput vanilla = bench::run_method(bench::VanillaFt{}, data, m0, cfg.finetune, seed);
    bench::Tpgm huge;
    huge.config.model = cfg.finetune;
    huge.config.gamma_init = 1e300;
    std::size_t bad = 0;
    auto check = [&](const bench::MetricsRow& a, const bench::MetricsRow& b) {
      bad += !(a.id_loss == b.id_loss && a.ood_loss == b.ood_loss && a.val_loss == b.val_loss &&
               a.mean_distance == b.mean_distance);
    };
    check(bench::run_method(huge, data, m0, cfg.finetune, seed).metrics, vanilla.metrics);
    check(bench::run_method(bench::MarsSp{1e300}, data, m0, cfg.finetune, seed).metrics, vanilla.metrics);
    check(bench::run_method(bench::Interp{1.0}, data, m0, cfg.finetune, seed).metrics, vanilla.metrics);
    bench::MetricsRow pre;
    bench::evaluate_into(pre, m0, m0, data, cfg.distance_norm);
    check(bench::run_method(bench::Interp{0.0}, data, m0, cfg.finetune, seed).metrics, pre);
    per_seed[k] = bad;
  });
  for (std::size_t b : per_seed) mismatches += b;
  return {mismatches == 0, fmt("%zu seeds x 4 equivalences, %zu mismatches", seed_list.size(), mismatches)};
}

Verdict determinism() {
  bench::SuiteConfig cfg = suite("default_suite.json");
  cfg.seeds.resize(5);
  const fs::path a = testing::fresh_dir(TPGM_TEST_TMP, "determinism_w1");
  const fs::path b = testing::fresh_dir(TPGM_TEST_TMP, "determinism_w3");
  const fs::path c = testing::fresh_dir(TPGM_TEST_TMP, "determinism_w1_again");
  bench::run_suite(cfg, {1, "", a.string(), true});
  bench::run_suite(cfg, {3, "", b.string(), true});
  bench::run_suite(cfg, {1, "", c.string(), true});
  const auto ta = tree(a), tb = tree(b), tc = tree(c);
  std::size_t differing = 0;
  for (const auto& [name, bytes] : ta) {
    differing += !tb.contains(name) || tb.at(name) != bytes || !tc.contains(name) || tc.at(name) != bytes;
  }
  const bool same_listing = ta.size() == tb.size() && ta.size() == tc.size();
  return {same_listing && differing == 0 && ta.contains("results.csv"),
          fmt("%zu files compared across workers 1, 3 and a rerun, %zu differ", ta.size(), differing)};
}

}  // namespace

int main() {
  criterion(1, "projection constraint fuzz", 10, projection_fuzz);
  criterion(2, "radius gradient vs finite differences", 10, gamma_gradient_check);
  criterion(3, "model gradients vs finite differences", 30, model_gradient_check);
  criterion(4, "pointwise OOD bound", 120, pointwise_bound);
  criterion(5, "in-span lemmas", 10, lemmas);
  criterion(6, "optimal ratio grows with pre-training error", 180, alpha_trend);
  criterion(7, "group selectivity of learned radii", 60, group_selectivity);
  criterion(8, "OOD trend against vanilla fine-tuning", 300, ood_trend);
  criterion(9, "radii shrink with less data", 300, data_size);
  criterion(10, "radius penalty pulls towards pre-trained model", 180, tpgm_c);
  criterion(11, "degenerate equivalences", 60, equivalences);
  criterion(12, "determinism across reruns and worker counts", 120, determinism);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
