#include "tpgm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "tpgm/errors.hpp"
#include "tpgm/parallel.hpp"
#include "tpgm/rng.hpp"

namespace tpgm::theory {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double norm2(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

constexpr int kMaxResample = 100;

}  // namespace

LinearProblem gen_problem(std::size_t d, std::size_t n, double epsilon, std::uint64_t seed) {
  if (n < 1 || n >= d) {
    throw ContractError("gen_problem: need 1 <= n < d, got n=" + std::to_string(n) +
                        ", d=" + std::to_string(d));
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ContractError("gen_problem: epsilon must be finite and >= 0");
  }
  Rng rng(seed);
  LinearProblem p;
  p.d = d;
  p.n = n;
  p.epsilon = epsilon;
  p.seed = seed;
  p.theta_star = rng.unit_vector(d);
  const Tensor u = rng.unit_vector(d);
  p.theta0 = p.theta_star;
  if (epsilon > 0.0) p.theta0 += epsilon * u;

  for (int attempt = 0;; ++attempt) {
    p.x_train = rng.normal_matrix(d, n);
    try {
      p.svd = thin_svd(p.x_train);
      const double cond = p.svd.singular_value(0) / p.svd.singular_value(n - 1);
      if (cond <= kMaxConditionNumber) break;
    } catch (const DegenerateInputError&) {
      // resample below
    }
    if (attempt >= kMaxResample) {
      throw DegenerateInputError("gen_problem: could not draw a well-conditioned training matrix");
    }
  }
  p.y_train = matvec_transposed(p.x_train, p.theta_star);
  p.min_norm = min_norm_solution(p.svd, p.y_train);
  return p;
}

Tensor projected_model(const LinearProblem& problem, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("projected_model: alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  Tensor out = problem.theta0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += alpha * (problem.min_norm[i] - problem.theta0[i]);
  }
  return out;
}

void TestDistribution::validate() const {
  if (!(s_par >= 0.0) || !(s_perp >= 0.0)) throw ContractError("test distribution scales must be >= 0");
  if (s_par == 0.0 && s_perp == 0.0) throw ContractError("test distribution scales are both zero");
}

std::vector<Tensor> draw_test_inputs(const LinearProblem& problem, const TestDistribution& dist,
                                     std::size_t count) {
  dist.validate();
  Rng rng(dist.seed);
  std::vector<Tensor> xs;
  xs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const Tensor g_par = rng.normal_vector(problem.n, dist.s_par);
    const Tensor g_full = rng.normal_vector(problem.d, dist.s_perp);
    Tensor x = matvec(problem.svd.U, g_par);
    x += out_of_span_residual(g_full, problem.svd);
    xs.push_back(std::move(x));
  }
  return xs;
}

BoundCheck pointwise_bound_check(const LinearProblem& problem, double alpha, const Tensor& x) {
  const Tensor model = projected_model(problem, alpha);
  const ComplementaryCoords cc = complementary_coords(x, problem.svd);
  BoundCheck out;
  out.lhs = std::abs(dot(model, x) - dot(problem.theta_star, x));
  const double shift = norm2(problem.min_norm - problem.theta0);
  out.rhs = (1.0 - alpha) * problem.epsilon * norm2(cc.tau) +
            (problem.epsilon + alpha * shift) * cc.tau_perp_norm;
  return out;
}

McEstimate expected_loss_mc(const LinearProblem& problem, double alpha,
                            const std::vector<Tensor>& samples) {
  if (samples.empty()) throw ContractError("expected_loss_mc: need at least one sample");
  const Tensor model = projected_model(problem, alpha);
  const double shift = norm2(problem.min_norm - problem.theta0);
  double sum = 0.0;
  double sum_sq = 0.0;
  double tau_sum = 0.0;
  double perp_sum = 0.0;
  for (const Tensor& x : samples) {
    const double loss = std::abs(dot(model, x) - dot(problem.theta_star, x));
    sum += loss;
    sum_sq += loss * loss;
    const ComplementaryCoords cc = complementary_coords(x, problem.svd);
    tau_sum += norm2(cc.tau);
    perp_sum += cc.tau_perp_norm;
  }
  const double count = static_cast<double>(samples.size());
  McEstimate est;
  est.mean = sum / count;
  const double var = samples.size() > 1
                         ? std::max(0.0, (sum_sq - count * est.mean * est.mean) / (count - 1.0))
                         : 0.0;
  est.std_error = std::sqrt(var / count);
  est.tau_bar = tau_sum / count;
  est.tau_perp_bar = perp_sum / count;
  est.bound_rhs = (1.0 - alpha) * problem.epsilon * est.tau_bar +
                  (problem.epsilon + alpha * shift) * est.tau_perp_bar;
  return est;
}

McEstimate expected_loss_mc(const LinearProblem& problem, double alpha,
                            const TestDistribution& dist, std::size_t count) {
  return expected_loss_mc(problem, alpha, draw_test_inputs(problem, dist, count));
}

double verify_lemma1(const LinearProblem& problem, std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    // theta = min-norm solution + U_perp beta_perp for an arbitrary beta_perp.
    const double scale = std::exp(rng.uniform(-3.0, 3.0));
    Tensor theta = problem.min_norm;
    theta += out_of_span_residual(rng.normal_vector(problem.d, scale), problem.svd);
    const Tensor tau = rng.normal_vector(problem.n);
    const Tensor u_tau = matvec(problem.svd.U, tau);
    worst = std::max(worst, std::abs(dot(theta - problem.theta_star, u_tau)));
  }
  return worst;
}

double verify_lemma2(const LinearProblem& problem, std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const Tensor tau = rng.normal_vector(problem.n);
    worst = std::max(worst, norm2(matvec(problem.svd.U, tau)) - norm2(tau));
  }
  return worst;
}

double verify_complement_pythagoras(const LinearProblem& problem, std::size_t trials,
                                    std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const Tensor x = rng.normal_vector(problem.d);
    const ComplementaryCoords cc = complementary_coords(x, problem.svd);
    const double xx = dot(x, x);
    const double gap = cc.tau_perp_norm * cc.tau_perp_norm - (xx - dot(cc.tau, cc.tau));
    worst = std::max(worst, std::abs(gap) / xx);
  }
  return worst;
}

BoundCheckReport run_bound_checks(const BoundCheckConfig& cfg, std::size_t workers) {
  if (cfg.max_d < 2) throw ContractError("bound checks need max_d >= 2");
  struct Partial {
    std::size_t checks = 0;
    std::size_t violations = 0;
    double max_excess = -INFINITY;
  };
  std::vector<Partial> parts(cfg.problems);
  const double tol = BoundCheckReport{}.tolerance;
  parallel_for(cfg.problems, workers, [&](std::size_t i) {
    Rng rng(derive_seed(cfg.seed, i));
    const std::size_t d = 2 + rng.below(cfg.max_d - 1);
    const std::size_t n = 1 + rng.below(d - 1);
    const double eps = rng.uniform(0.0, cfg.max_epsilon);
    const LinearProblem problem = gen_problem(d, n, eps, rng.next_u64());
    TestDistribution dist{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.next_u64()};
    const auto xs = draw_test_inputs(problem, dist, cfg.samples_per_problem);
    Partial& part = parts[i];
    for (double alpha : cfg.alphas) {
      for (const Tensor& x : xs) {
        const BoundCheck b = pointwise_bound_check(problem, alpha, x);
        ++part.checks;
        part.max_excess = std::max(part.max_excess, b.lhs - b.rhs);
        if (b.lhs > b.rhs + tol) ++part.violations;
      }
    }
  });
  BoundCheckReport report;
  report.max_excess = -INFINITY;
  for (const auto& p : parts) {
    report.checks += p.checks;
    report.violations += p.violations;
    report.max_excess = std::max(report.max_excess, p.max_excess);
  }
  return report;
}

LemmaReport run_lemma_checks(std::size_t problems, std::size_t trials, std::uint64_t seed) {
  LemmaReport report;
  report.problems = problems;
  for (std::size_t i = 0; i < problems; ++i) {
    Rng rng(derive_seed(seed, i));
    const std::size_t d = 2 + rng.below(63);
    const std::size_t n = 1 + rng.below(d - 1);
    const LinearProblem problem = gen_problem(d, n, rng.uniform(0.0, 2.0), rng.next_u64());
    const std::uint64_t check_seed = rng.next_u64();
    report.lemma1_max_residual =
        std::max(report.lemma1_max_residual, verify_lemma1(problem, trials, check_seed));
    report.lemma2_max_violation =
        std::max(report.lemma2_max_violation, verify_lemma2(problem, trials, check_seed));
  }
  return report;
}

void ScanConfig::validate() const {
  if (n < 1 || n >= d) throw ConfigError("theory.n: need 1 <= n < d");
  if (epsilons.empty()) throw ConfigError("theory.epsilons: must be nonempty");
  if (alphas.empty()) throw ConfigError("theory.alphas: must be nonempty");
  if (seeds.empty()) throw ConfigError("theory.seeds: must be nonempty");
  if (samples < 1) throw ConfigError("theory.samples: must be >= 1");
  if (!std::is_sorted(epsilons.begin(), epsilons.end())) {
    throw ConfigError("theory.epsilons: must be sorted ascending");
  }
  if (!std::is_sorted(alphas.begin(), alphas.end())) {
    throw ConfigError("theory.alphas: must be sorted ascending");
  }
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("theory.alphas: values must lie in [0, 1]");
  }
  for (double e : epsilons) {
    if (!(e >= 0.0)) throw ConfigError("theory.epsilons: values must be >= 0");
  }
  TestDistribution{s_par, s_perp, 0}.validate();
}

ScanResult optimal_alpha_scan(const ScanConfig& cfg, std::size_t workers) {
  cfg.validate();
  const std::size_t ne = cfg.epsilons.size();
  const std::size_t ns = cfg.seeds.size();
  const std::size_t na = cfg.alphas.size();
  ScanResult result;
  result.cells.resize(ne * ns * na);

  parallel_for(ne * ns, workers, [&](std::size_t job) {
    const std::size_t ie = job / ns;
    const std::size_t is = job % ns;
    const std::uint64_t seed = cfg.seeds[is];
    const LinearProblem problem = gen_problem(cfg.d, cfg.n, cfg.epsilons[ie], seed);
    // Same test inputs for every epsilon and alpha of a seed.
    const TestDistribution dist{cfg.s_par, cfg.s_perp, derive_seed(seed, 0x7e57)};
    const auto xs = draw_test_inputs(problem, dist, cfg.samples);
    for (std::size_t ia = 0; ia < na; ++ia) {
      ScanCell& cell = result.cells[(ie * ns + is) * na + ia];
      cell.epsilon = cfg.epsilons[ie];
      cell.seed = seed;
      cell.alpha = cfg.alphas[ia];
      cell.estimate = expected_loss_mc(problem, cfg.alphas[ia], xs);
    }
  });

  for (std::size_t ie = 0; ie < ne; ++ie) {
    ScanSummaryRow row;
    row.epsilon = cfg.epsilons[ie];
    double best = INFINITY;
    for (std::size_t ia = 0; ia < na; ++ia) {
      double mean = 0.0;
      for (std::size_t is = 0; is < ns; ++is) {
        mean += result.cells[(ie * ns + is) * na + ia].estimate.mean;
      }
      mean /= static_cast<double>(ns);
      if (mean < best) {
        best = mean;
        row.alpha_star = cfg.alphas[ia];
        row.mean_loss = mean;
      }
    }
    result.summary.push_back(row);
  }
  return result;
}

void write_scan_csv(std::ostream& out, const ScanResult& result) {
  out << "epsilon,seed,alpha,mc_loss,mc_stderr,bound_rhs\n";
  for (const auto& c : result.cells) {
    out << fmt(c.epsilon) << ',' << c.seed << ',' << fmt(c.alpha) << ',' << fmt(c.estimate.mean)
        << ',' << fmt(c.estimate.std_error) << ',' << fmt(c.estimate.bound_rhs) << '\n';
  }
}

void write_scan_summary_csv(std::ostream& out, const ScanResult& result) {
  out << "epsilon,alpha_star,mean_loss\n";
  for (const auto& r : result.summary) {
    out << fmt(r.epsilon) << ',' << fmt(r.alpha_star) << ',' << fmt(r.mean_loss) << '\n';
  }
}

}  // namespace tpgm::theory
