#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dat/config.hpp"
#include "dat/metrics.hpp"
#include "dat/trainer.hpp"

namespace dat {

struct ExperimentData {
  DatasetHandle train;
  DatasetHandle test;
  DatasetHandle ood;
  DatasetHandle ood_test;
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

// Architecture with input shape and class count taken from the data.
ArchitectureSpec resolve_architecture(const ExperimentConfig& cfg, const ExperimentData& data);

// Root for run directories: $DAT_RUNS_DIR, else ./runs.
std::filesystem::path runs_root();

// Builds the FID embedder named by eval.embedder. trained_probe trains a
// small plain classifier on the training set (cached in `cache_dir` when set).
FeatureEmbedder make_embedder(const ExperimentConfig& cfg, const ExperimentData& data,
                              const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

// Class-balanced samples generated from OOD test points by ascent on the joint energy.
Tensor generate_samples(const EnergyModel& model, const ExperimentConfig& cfg, const ExperimentData& data,
                        SamplingMode mode = SamplingMode::Ancestral);

// Metric groups: robust, fid, ood, calibration, counterfactual, sampling, energy.
const std::vector<std::string>& metric_groups();

struct EvalOutput {
  std::vector<MetricReport> reports;
  CalibrationReport calibration;
  std::vector<CounterfactualPoint> counterfactual;
  Tensor samples;  // ancestral generations (fid group)
};

EvalOutput evaluate_model(const EnergyModel& model, const ExperimentConfig& cfg, const ExperimentData& data,
                          const FeatureEmbedder& embedder, const std::set<std::string>& groups, long step);

struct TrainSummary {
  std::filesystem::path run_dir;
  std::optional<CheckpointInfo> stage1;  // selected stage-one checkpoint
  std::optional<CheckpointInfo> stage2;  // selected stage-two checkpoint
  std::vector<StepRecord> stage2_log;
  std::size_t stage2_bce_evaluations = 0;
};

// Runs the configured stages into `run_dir`: config.snapshot,
// checkpoints/step_*.ckpt, logs/train.csv, logs/eval.csv, summary.json.
// Step numbers continue across stages.
TrainSummary run_training(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// Evaluates a checkpoint, appending rows to `out_dir`/logs/eval.csv and
// writing plots into `out_dir`/plots.
EvalOutput run_evaluation(const std::filesystem::path& checkpoint, const ExperimentConfig& cfg,
                          const std::set<std::string>& groups, const std::filesystem::path& out_dir);

// Ablation suites: augmentation, ood_size, loss_weights, t_steps.
const std::vector<std::string>& ablation_suites();
std::vector<std::pair<std::string, std::vector<std::string>>> ablation_variants(const std::string& suite);
std::string ablation_csv_header();

// Trains and evaluates every variant; writes `out_dir`/<suite>.csv and returns its path.
std::filesystem::path run_ablation(const std::string& suite, const ExperimentConfig& base,
                                   const std::filesystem::path& out_dir);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Numerical verification suite; writes analysis/*.csv under `out_dir`.
std::vector<VerifyCheck> run_verification(const std::filesystem::path& out_dir, std::uint64_t seed = 0);

}  // namespace dat
