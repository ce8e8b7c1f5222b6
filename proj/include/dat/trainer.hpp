#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dat/attacks.hpp"
#include "dat/data.hpp"
#include "dat/metrics.hpp"
#include "dat/model.hpp"
#include "dat/objectives.hpp"

namespace dat {

// Non-finite loss or parameters; training stops with a diagnostic.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { One, Two };
enum class SamplingMode { Ancestral, Marginal };

std::string to_string(Stage stage);
std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& s);
std::string to_string(GenerativeGradient g);
GenerativeGradient generative_gradient_from_string(const std::string& s);

struct OptimizerSpec {
  double lr = 0.05;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  std::string schedule = "constant";  // constant | cosine

  double rate(long step, long total) const;
};

struct StagePlan {
  Stage stage = Stage::One;
  NormMode norm_mode = NormMode::BatchStats;
  LossTermWeights weights{1.0, 0.0};
  AttackSpec classification = default_classification_attack();
  AttackSpec generative = default_generative_attack();
  SamplingMode sampling = SamplingMode::Ancestral;
  bool random_t = false;  // draw T uniformly from [1, generative.steps] per batch
  GenerativeGradient gradient = GenerativeGradient::Scaled;
  OptimizerSpec optimizer;
  long steps = 500;
  double ema_decay = 0.99;
  long checkpoint_every = 100;
  StreamSizes batch;
  std::string strong_policy = "none";
  std::string mild_policy = "none";
  std::uint64_t seed = 0;

  // Stage One needs w_bce = 0 and BatchStats; Stage Two needs FrozenStats.
  void validate() const;
  nlohmann::json to_json() const;
  static StagePlan from_json(const nlohmann::json& j);
  std::string hash() const;
};

StagePlan default_stage1_plan();
StagePlan default_stage2_plan();

struct StepRecord {
  long step = 0;
  double loss_total = 0.0;
  double loss_atce = 0.0;
  double loss_bce = 0.0;
};

struct TrainState {
  TrainState() : model(Shape{1}, 2) {}
  explicit TrainState(Network m) : model(std::move(m)) {}

  Network model;
  EmaShadow ema;
  std::vector<double> velocity;
  long step = 0;         // steps taken in this stage
  long step_offset = 0;  // steps of earlier stages in the same run
  Stage stage = Stage::One;
  std::string plan_hash;
  nlohmann::json streams;       // DualStream state
  std::string label_rng;        // LabelSampler state
  std::string schedule_rng;     // random-T draws
  std::map<std::string, double> metrics;
};

// Binary container: magic, version, JSON header, raw parameter/buffer/EMA/velocity blobs.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

struct CheckpointInfo {
  long step = 0;  // run-wide step
  std::filesystem::path path;
  std::map<std::string, double> metrics;  // "fid", "robust_accuracy", ...
};

enum class SelectCriterion { BestFid, BestRobust, Last };
SelectCriterion select_criterion_from_string(const std::string& s);

// Lowest fid / highest robust accuracy / latest step; ties go to the earliest step.
const CheckpointInfo& select_checkpoint(const std::vector<CheckpointInfo>& stream, SelectCriterion criterion);

// Evaluates a model at a checkpoint step; returned reports go to logs/eval.csv
// and feed checkpoint selection.
using Evaluator = std::function<std::vector<MetricReport>(const Network& model, long step)>;

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;  // logs and checkpoints are written when set
  Evaluator evaluator;
  bool evaluate_ema = true;  // evaluator sees EMA weights, else raw weights
  std::function<void(long step, Network& model)> on_step;
  long stop_after = -1;  // stop once this many total steps are done (for resume tests)
  long step_offset = 0;  // added to step numbers in logs, checkpoint names and metrics
};

struct StageResult {
  TrainState state;
  std::vector<StepRecord> log;
  std::vector<CheckpointInfo> checkpoints;
  std::vector<TrainState> snapshots;  // parallel to checkpoints
  std::size_t bce_evaluations = 0;
  std::size_t degenerate_steps = 0;
};

// One training stage. Holds the streams, optimizer and EMA between steps.
class Trainer {
 public:
  Trainer(StagePlan plan, const DatasetHandle& data, const DatasetHandle& ood, Network model);
  // Continues from `state`, restoring streams and RNGs.
  Trainer(StagePlan plan, const DatasetHandle& data, const DatasetHandle& ood, TrainState state);

  StepRecord step();
  const TrainState& state() const { return state_; }
  // Current stream and RNG positions folded into the state.
  TrainState snapshot() const;
  Network& model() { return state_.model; }
  Network evaluation_model(bool ema) const;
  std::size_t bce_evaluations() const { return bce_evaluations_; }
  std::size_t degenerate_steps() const { return degenerate_steps_; }

 private:
  void prepare();

  StagePlan plan_;
  const DatasetHandle& data_;
  const DatasetHandle& ood_;
  TrainState state_;
  DualStream streams_;
  LabelSampler labels_;
  Rng schedule_rng_;
  std::size_t bce_evaluations_ = 0;
  std::size_t degenerate_steps_ = 0;
};

// Adversarial training with batch statistics; no generative term.
StageResult run_stage1(const StagePlan& plan, const DatasetHandle& data, Network model,
                       const RunOptions& options = {});

// Joint objective with frozen normalization statistics, starting from `stage1`
// (its EMA weights when present).
StageResult run_stage2(const StagePlan& plan, const TrainState& stage1, const DatasetHandle& data,
                       const DatasetHandle& ood, const RunOptions& options = {});

// Resumes an interrupted stage from a checkpoint and runs it to plan.steps.
StageResult resume_stage(const StagePlan& plan, const TrainState& checkpoint, const DatasetHandle& data,
                         const DatasetHandle& ood, const RunOptions& options = {});

std::string train_csv_header();
std::string train_csv_row(const StepRecord& r);

}  // namespace dat
