#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "axis/adapt.hpp"
#include "axis/config.hpp"
#include "axis/merge.hpp"
#include "axis/net.hpp"

namespace axis::bench {

// Synthetic task family: shared Gaussian class prototypes, per-task
// random plane rotations plus per-class prototype shifts. Tasks are
// related (shared prototypes) but distinct (own transform).
struct FamilyConfig {
  std::size_t tasks = 6;
  std::size_t input_dim = 64;
  std::size_t classes = 8;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 500;
  std::uint64_t seed = 42;
  double prototype_scale = 1.0;
  double noise_std = 2.0;
  double prototype_shift = 1.0;
  std::size_t rotation_planes = 16;
  double rotation_angle = 0.4;
  // Optional extra shared structure: a low-rank input rotation common to
  // every task but absent from the pre-training distribution. The planes
  // are family-wide, the angle varies per task:
  // angle_t = shared_rotation_angle * (1 + spread * u_t), u_t uniform in
  // [-1, 1]. Off by default.
  std::size_t shared_rotation_planes = 0;
  double shared_rotation_angle = 0.8;
  double shared_rotation_spread = 0.6;
  // Family-wide class displacement: every prototype moves by
  // m_t * sign_c * v along one shared unit direction v, with the
  // intensity m_t = concept_shift_scale * (1 + spread * u_t) varying per
  // task. The matching weight correction is low-rank, so sources share
  // transferable structure whose per-task magnitude must be learned.
  double concept_shift_scale = 6.0;
  double concept_shift_spread = 1.0;
  bool force_identical = false;  // sanity mode: all tasks share task 0's transform
};

// Plane rotations applied in order (task-specific ones first, then the
// family-shared ones), plus per-class prototype shifts.
struct TaskTransform {
  struct PlaneRotation {
    std::size_t i = 0;
    std::size_t j = 0;
    double angle = 0.0;
    bool operator==(const PlaneRotation&) const = default;
  };
  std::vector<PlaneRotation> rotations;
  std::vector<double> shifts;  // classes x input_dim, row-major

  bool operator==(const TaskTransform&) const = default;
};

struct TaskData {
  Dataset train;
  Dataset test;
  TaskTransform transform;
};

struct TaskFamily {
  std::vector<TaskData> tasks;
  FamilyConfig config;
  Matrix prototypes;  // classes x input_dim
};

TaskFamily gen_tasks(const FamilyConfig& cfg);

// Samples from the untransformed prototype distribution (the pre-training
// distribution); stream names keep draws independent of the task draws.
Dataset base_dataset(const TaskFamily& family, std::size_t samples,
                     const std::string& stream);

// Full-parameter SGD; throws DivergenceDetected on non-finite loss.
ParamSet sgd_full(const MlpSpec& spec, const ParamSet& start,
                  const Dataset& data, const TrainConfig& cfg);

struct FinetuneResult {
  std::vector<TaskVector> vectors;
  std::vector<std::string> warnings;  // sources that diverged or undershot
};

// Fine-tunes every task from theta_pre and returns the task vectors;
// sources below 0.9 train accuracy are flagged, diverged sources are
// flagged and contribute a zero vector.
FinetuneResult finetune_sources(const TaskFamily& family,
                                const ParamSet& theta_pre, const MlpSpec& spec,
                                const TrainConfig& cfg);

struct BenchConfig {
  FamilyConfig family;
  std::vector<std::size_t> hidden_dims = {64, 32};

  std::size_t pretrain_samples = 4000;
  std::size_t pretrain_epochs = 4;
  double pretrain_lr = 0.05;
  std::size_t pretrain_batch = 32;

  std::size_t finetune_epochs = 10;
  double finetune_lr = 0.05;
  std::size_t finetune_batch = 32;

  std::string strategy = "top";
  std::string k = "0.10";
  double rank_tol = 1e-10;
  bool skip_final_svd = false;
  bool rescale = true;

  double n_fraction = 0.10;
  std::size_t epochs = 10;
  double lr = 0.1;
  std::size_t batch_size = 32;

  std::vector<std::size_t> source_counts;  // empty = 1..T-1
  double train_fraction = 1.0;
  std::string perturbation = "none";  // corrupt_one | prune_all | patch_dropout
  double corrupt_ratio = 0.5;
  std::size_t corrupt_index = 0;
  double prune_sparsity = 0.95;
  std::size_t patch_size = 8;
  double patch_fraction = 0.3;
  bool measure_time = true;  // false writes 0 wall times (byte-stable reports)

  static BenchConfig from_config(const Config& cfg);
  MlpSpec mlp_spec() const;
  std::map<std::string, std::string> echo() const;
};

struct RunRow {
  std::string target;
  std::size_t num_sources = 0;
  std::string strategy;
  std::string k;
  double n_fraction = 0.0;
  std::string perturbation;
  double zero_shot_acc = 0.0;
  double adapted_acc = 0.0;  // NaN for zero-shot baselines
  double wall_time_s = 0.0;
  std::size_t learnable_params = 0;
};

struct RunReport {
  std::vector<RunRow> rows;
  std::map<std::string, std::string> config_echo;
};

// Intermediates exposed for artifact export and tests.
struct BenchArtifacts {
  std::vector<TaskVector> task_vectors;
  std::vector<std::string> finetune_warnings;
};

// For each target: pre-trained and arithmetic-mean-merge zero-shot
// baselines, then merge -> optional rescale -> split -> train -> evaluate
// for every requested source count, sources taken in fixed task order.
RunReport leave_one_out(const TaskFamily& family, const ParamSet& theta_pre,
                        const MlpSpec& spec, const BenchConfig& cfg,
                        BenchArtifacts* artifacts = nullptr);

void write_report_csv(const RunReport& report, const std::string& path);
void write_report_json(const RunReport& report, const std::string& path);

// Orchestrates a full run: generate, pretrain, leave-one-out, write
// report.csv / report.json (and containers when export_artifacts).
void run_bench(const BenchConfig& cfg, const std::string& out_dir,
               bool export_artifacts);

}  // namespace axis::bench
