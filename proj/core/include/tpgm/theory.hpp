#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tpgm/numerics.hpp"
#include "tpgm/tensor.hpp"

namespace tpgm::theory {

/// Over-parameterized noiseless linear regression: y = theta_star^T x,
/// n < d training columns, and a pre-trained theta0 at distance epsilon.
struct LinearProblem {
  std::size_t d = 0;
  std::size_t n = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  Tensor theta_star;  // d
  Tensor theta0;      // d, ||theta0 - theta_star|| = epsilon
  Tensor x_train;     // d x n
  Tensor y_train;     // n
  SvdFactors svd;
  Tensor min_norm;    // U Sigma^-1 V^T y_train
};

/// Condition-number guard for the sampled training matrix.
inline constexpr double kMaxConditionNumber = 1e8;

/// theta_star is a normalized Gaussian, theta0 = theta_star + epsilon * u with
/// u uniform on the sphere, x_train Gaussian (resampled while its condition
/// number exceeds kMaxConditionNumber). For a fixed seed the draws do not
/// depend on epsilon.
LinearProblem gen_problem(std::size_t d, std::size_t n, double epsilon, std::uint64_t seed);

/// theta0 + alpha * (theta - theta0) with theta the minimum-norm minimizer.
Tensor projected_model(const LinearProblem& problem, double alpha);

/// Test inputs x = U (s_par g_n) + s_perp (I - U U^T) g_d with Gaussian g.
struct TestDistribution {
  double s_par = 1.0;
  double s_perp = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<Tensor> draw_test_inputs(const LinearProblem& problem, const TestDistribution& dist,
                                     std::size_t count);

struct BoundCheck {
  double lhs = 0.0;  // |theta~^T x - theta_star^T x|
  double rhs = 0.0;  // (1-a) eps ||tau|| + (eps + a ||theta - theta0||) ||tau_perp||
};

BoundCheck pointwise_bound_check(const LinearProblem& problem, double alpha, const Tensor& x);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double tau_bar = 0.0;       // empirical E||tau||
  double tau_perp_bar = 0.0;  // empirical E||tau_perp||
  double bound_rhs = 0.0;     // expectation bound with the empirical means
};

McEstimate expected_loss_mc(const LinearProblem& problem, double alpha,
                            const std::vector<Tensor>& samples);
McEstimate expected_loss_mc(const LinearProblem& problem, double alpha,
                            const TestDistribution& dist, std::size_t count);

/// max |(theta - theta_star)^T U tau| over random tau and random out-of-span
/// components added to the minimum-norm solution.
double verify_lemma1(const LinearProblem& problem, std::size_t trials, std::uint64_t seed);

/// max over random tau of ||U tau|| - ||tau||.
double verify_lemma2(const LinearProblem& problem, std::size_t trials, std::uint64_t seed);

/// Out-of-span counterpart of lemma 2 without materializing U_perp:
/// max | ||x - U U^T x||^2 - (||x||^2 - ||U^T x||^2) | / ||x||^2 over random x.
double verify_complement_pythagoras(const LinearProblem& problem, std::size_t trials,
                                    std::uint64_t seed);

struct BoundCheckConfig {
  std::size_t problems = 1000;
  std::size_t samples_per_problem = 100;
  std::size_t max_d = 64;
  double max_epsilon = 2.0;
  std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t seed = 0;
};

struct BoundCheckReport {
  std::size_t checks = 0;
  std::size_t violations = 0;   // lhs > rhs + tolerance
  double max_excess = 0.0;      // max(lhs - rhs)
  double tolerance = 1e-9;
};

BoundCheckReport run_bound_checks(const BoundCheckConfig& cfg, std::size_t workers = 1);

struct LemmaReport {
  std::size_t problems = 0;
  double lemma1_max_residual = 0.0;
  double lemma2_max_violation = 0.0;
};

/// verify_lemma1/2 over `problems` random problems (d in [2, 64], n < d).
LemmaReport run_lemma_checks(std::size_t problems, std::size_t trials, std::uint64_t seed);

struct ScanConfig {
  std::size_t d = 32;
  std::size_t n = 16;
  std::vector<double> epsilons;
  std::vector<double> alphas;  // sorted ascending
  std::vector<std::uint64_t> seeds;
  std::size_t samples = 2000;
  double s_par = 1.0;
  double s_perp = 1.0;

  void validate() const;
};

struct ScanCell {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  McEstimate estimate;
};

struct ScanSummaryRow {
  double epsilon = 0.0;
  double alpha_star = 0.0;
  double mean_loss = 0.0;  // seed-averaged loss at alpha_star
};

struct ScanResult {
  std::vector<ScanCell> cells;  // ordered by (epsilon, seed, alpha)
  std::vector<ScanSummaryRow> summary;
};

/// For each epsilon, averages the Monte-Carlo loss over seeds and picks the
/// arg-min alpha on the grid; ties go to the smaller alpha.
ScanResult optimal_alpha_scan(const ScanConfig& cfg, std::size_t workers = 1);

/// Columns: epsilon,seed,alpha,mc_loss,mc_stderr,bound_rhs
void write_scan_csv(std::ostream& out, const ScanResult& result);
/// Columns: epsilon,alpha_star,mean_loss
void write_scan_summary_csv(std::ostream& out, const ScanResult& result);

/// Document read by the `theory` command: a scan plus optional bound checks.
struct TheoryConfig {
  ScanConfig scan;
  std::optional<BoundCheckConfig> bounds;
};

/// Grids may be lists or {"start", "stop", "step"}; "alphas" also accepts
/// {"count": k} for k evenly spaced points on [0, 1].
TheoryConfig parse_theory_config(const std::string& json_text);
TheoryConfig load_theory_config(const std::string& path);

}  // namespace tpgm::theory
