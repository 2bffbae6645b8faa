#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tpgm/models.hpp"
#include "tpgm/projection.hpp"
#include "tpgm/tpgm.hpp"
#include "tpgm/training.hpp"

namespace tpgm::bench {

enum class TaskKind { Regression, Classification };

/// Synthetic covariate-shift task.
///
/// A k-dimensional "pre-training span" S of R^d is drawn along with a tanh MLP
/// teacher. Labels depend on the in-span part P_S x only, so out-of-span input
/// energy is a nuisance. Pre-training and ID inputs lie in S plus an `id_leak`
/// fraction of out-of-span energy. The fine-tuning teacher is the pre-training
/// teacher with every weight perturbed by `task_shift` (relative to its init
/// scale). OOD inputs move a further `ood_shift` of their energy out of S and
/// are rotated by `ood_rotation` radians in a plane mixing S with its
/// complement.
struct ShiftSpec {
  TaskKind task = TaskKind::Regression;
  std::size_t input_dim = 16;
  std::size_t hidden = 32;
  std::size_t span_dim = 12;
  std::size_t num_classes = 4;
  double teacher_scale = 1.5;
  double task_shift = 0.3;
  double label_noise = 0.5;
  double id_leak = 0.1;
  double ood_shift = 0.5;
  double ood_rotation = 0.3;
  std::size_t n_pretrain = 2000;
  std::size_t n_train = 300;
  std::size_t n_val = 100;
  std::size_t n_test_id = 1000;
  std::size_t n_test_ood = 1000;
  double train_fraction = 1.0;

  void validate() const;
};

struct ShiftDataset {
  Batch pretrain;
  Batch train_id;
  Batch val_id;
  Batch test_id;
  Batch test_ood;
  /// Row indices of each split within the generated ID pool.
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
  std::vector<std::size_t> test_rows;
  Tensor span_basis;  // d x k, orthonormal columns
  std::size_t output_dim = 1;
  LossKind loss = LossKind::Mse;
};

/// Deterministic per seed.
ShiftDataset gen_shift_dataset(const ShiftSpec& spec, std::uint64_t seed);

/// First floor(fraction * n) rows of train_id; other splits unchanged.
ShiftDataset with_train_fraction(const ShiftDataset& data, double fraction);

/// Out-of-span energy fraction ||(I - P_S) x||^2 / ||x||^2, averaged over rows.
double out_of_span_energy(const Batch& batch, const Tensor& span_basis);

/// Student architecture for a dataset: d -> hidden -> output, tanh.
Model make_student(const ShiftSpec& spec, std::uint64_t seed);

/// Fits a freshly initialized student on the pre-training split.
Model pretrain_model(const ShiftSpec& spec, const ShiftDataset& data, const FineTuneConfig& cfg,
                     std::uint64_t seed);

struct VanillaFt {};
struct LinearProbe {};
struct L2Sp {
  double mu = 1e-2;
};
struct MarsSp {
  double gamma = 1.0;
};
struct LpFt {
  int lp_epochs = 1;
};
struct Interp {
  double ratio = 0.5;
};
struct Tpgm {
  TpgmConfig config;
};

using MethodSpec = std::variant<VanillaFt, LinearProbe, L2Sp, MarsSp, LpFt, Interp, Tpgm>;

std::string method_kind_name(const MethodSpec& m);

struct MetricsRow {
  std::string method;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  double id_loss = 0.0;
  double ood_loss = 0.0;
  std::optional<double> id_acc;
  std::optional<double> ood_acc;
  double val_loss = 0.0;
  double mean_distance = 0.0;
  std::vector<double> group_distances;
  std::optional<double> mean_gamma;  // TPGM only
  std::string config_hash;
  std::string status = "ok";
  double wall_seconds = 0.0;
};

struct MethodOutput {
  MetricsRow metrics;
  Model model;
  std::optional<TrainingTrace> trace;
};

/// Trains `method` from model0 on data.train_id and evaluates every split.
/// Divergence is reported through metrics.status rather than thrown.
MethodOutput run_method(const MethodSpec& method, const ShiftDataset& data, const Model& model0,
                        const FineTuneConfig& finetune, std::uint64_t seed,
                        ProjectionKind distance_norm = ProjectionKind::L2);

/// Model evaluation used for every row.
void evaluate_into(MetricsRow& row, const Model& model, const Model& model0,
                   const ShiftDataset& data, ProjectionKind distance_norm);

/// One configured method; each swept parameter expands into candidates.
struct MethodEntry {
  std::string name;
  std::vector<MethodSpec> candidates;
  std::vector<std::string> candidate_labels;
  std::vector<double> candidate_lrs;  // fine-tune learning rate per candidate
};

/// Training settings used when a suite omits "pretrain" / "finetune".
FineTuneConfig default_pretrain_config();
FineTuneConfig default_finetune_config();

struct SuiteConfig {
  std::string name = "suite";
  ShiftSpec dataset;
  FineTuneConfig pretrain = default_pretrain_config();
  FineTuneConfig finetune = default_finetune_config();
  std::vector<MethodEntry> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<double> train_fractions = {1.0};
  ProjectionKind distance_norm = ProjectionKind::L2;
  bool write_traces = true;
  bool save_models = true;
  std::string results_file = "results.csv";
  std::string selection_file = "selection.csv";
  std::string traces_dir = "traces";
  std::string models_dir = "models";

  /// Canonical JSON of the fully resolved configuration.
  std::string resolved_json() const;
  /// FNV-1a 64 of resolved_json(), as 16 hex digits.
  std::string hash() const;
};

/// Parses and validates a suite document. Unknown keys are rejected with their
/// path, e.g. "methods[1].gama".
SuiteConfig parse_suite_config(const std::string& json_text);
SuiteConfig load_suite_config(const std::string& path);

struct SelectionRow {
  std::string method;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  std::string candidate;
  double val_loss = 0.0;
  bool selected = false;
};

struct SuiteRun {
  std::string method;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;
  MetricsRow metrics;
  std::optional<TrainingTrace> trace;
};

struct SuiteResult {
  std::vector<SuiteRun> runs;  // sorted by (method, seed, train_fraction)
  std::vector<SelectionRow> selection;
};

struct SuiteOptions {
  std::size_t workers = 1;
  std::string method_filter;  // empty = all
  std::string out_dir;        // empty = do not write files
  bool quiet = true;
};

SuiteResult run_suite(const SuiteConfig& cfg, const SuiteOptions& options);

/// Columns: method,seed,train_fraction,id_loss,ood_loss,id_acc,ood_acc,mean_distance,config_hash,status
void write_results_csv(std::ostream& out, const SuiteResult& result);
void write_selection_csv(std::ostream& out, const SuiteResult& result);

/// Two feature groups with separately chosen pre-training error; the
/// learned radii show which group the validation data lets move.
struct GroupSelectivitySpec {
  std::size_t dim_a = 20;
  std::size_t dim_b = 20;
  std::size_t n_train = 30;
  std::size_t n_val = 30;
  double epsilon_a = 0.0;
  double epsilon_b = 2.0;
  TpgmConfig tpgm;

  GroupSelectivitySpec();
};

struct GroupSelectivityResult {
  double gamma_a = 0.0;
  double gamma_b = 0.0;
  double distance_a = 0.0;
  double distance_b = 0.0;
};

GroupSelectivityResult run_group_selectivity(const GroupSelectivitySpec& spec, std::uint64_t seed);

std::string format_double(double v);

}  // namespace tpgm::bench
