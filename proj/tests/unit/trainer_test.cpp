#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dat/energy.hpp"
#include "dat/trainer.hpp"
#include "test_support.hpp"

using namespace dat;
using namespace dat::testing;
namespace fs = std::filesystem;

namespace {

struct Desk {
  DatasetHandle data = load_dataset({"two_moons_id", "train", 256, 1});
  DatasetHandle ood = load_dataset({"ring_ood", "train", 128, 1});
};

const Desk& desk() {
  static const Desk d;
  return d;
}

Network desk_model(std::uint64_t seed = 0) {
  ArchitectureSpec a;
  a.hidden = {16, 16};
  a.seed = seed;
  return build_network(a);
}

StagePlan plan1(long steps = 20) {
  StagePlan p = default_stage1_plan();
  p.steps = steps;
  p.checkpoint_every = 5;
  p.classification.eps = 0.3;
  p.classification.step_size = 0.06;
  p.classification.steps = 3;
  p.classification.clamp01 = false;
  p.generative.clamp01 = false;
  p.batch = {32, 32, 32};
  p.seed = 3;
  return p;
}

StagePlan plan2(long steps = 20) {
  StagePlan p = plan1(steps);
  p.stage = Stage::Two;
  p.norm_mode = NormMode::FrozenStats;
  p.weights = {1.0, 1.0};
  p.generative.steps = 5;
  p.optimizer.lr = 0.01;
  p.seed = 4;
  return p;
}

const TrainState& stage1_state() {
  static const TrainState s = run_stage1(plan1(), desk().data, desk_model()).state;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dat_trainer_test_" + name);
  fs::remove_all(d);
  return d;
}

std::vector<double> params_of(const Network& m) { return {m.parameters().begin(), m.parameters().end()}; }

}  // namespace

TEST(StagePlan, StageInvariants) {
  StagePlan p = default_stage1_plan();
  EXPECT_NO_THROW(p.validate());
  p.weights.bce = 1.0;
  EXPECT_THROW(p.validate(), DomainError);
  StagePlan q = default_stage2_plan();
  EXPECT_NO_THROW(q.validate());
  EXPECT_EQ(q.norm_mode, NormMode::FrozenStats);
  q.norm_mode = NormMode::BatchStats;
  EXPECT_THROW(q.validate(), DomainError);
  StagePlan r = default_stage1_plan();
  r.classification.eps.reset();
  EXPECT_THROW(r.validate(), DomainError);
}

TEST(StagePlan, JsonRoundTripAndHash) {
  StagePlan p = plan2();
  p.random_t = true;
  p.sampling = SamplingMode::Marginal;
  p.gradient = GenerativeGradient::Reference;
  p.optimizer.schedule = "cosine";
  p.strong_policy = "autoaugment_like";
  const StagePlan r = StagePlan::from_json(p.to_json());
  EXPECT_EQ(r.to_json(), p.to_json());
  EXPECT_EQ(r.hash(), p.hash());
  r.validate();
  StagePlan q = p;
  q.optimizer.lr = 0.02;
  EXPECT_NE(q.hash(), p.hash());
}

TEST(Optimizer, CosineSchedule) {
  OptimizerSpec o;
  o.lr = 0.1;
  EXPECT_DOUBLE_EQ(o.rate(50, 100), 0.1);
  o.schedule = "cosine";
  EXPECT_DOUBLE_EQ(o.rate(0, 100), 0.1);
  EXPECT_NEAR(o.rate(50, 100), 0.05, 1e-15);
  EXPECT_NEAR(o.rate(100, 100), 0.0, 1e-15);
}

TEST(Trainer, NesterovStepByHand) {
  // one step on a linear model with no attack movement against a hand-computed update
  const Desk& d = desk();
  ArchitectureSpec a;
  a.kind = "linear";
  a.seed = 2;
  Network m = build_network(a);
  StagePlan p = plan1(2);
  p.classification.eps = 0.0;
  p.optimizer.lr = 0.1;
  p.optimizer.momentum = 0.9;
  p.optimizer.weight_decay = 0.01;
  Trainer tr(p, d.data, d.data, m);
  DualStream s(d.data, d.data, AugmentationPolicy::parse("none"), AugmentationPolicy::parse("none"), p.batch,
               mix_seed(p.seed, 10));
  std::vector<double> w = params_of(m), v(w.size(), 0.0);
  for (int t = 0; t < 2; ++t) {
    const StreamBatch b = s.next_classification();
    const LossGrad g = at_ce_loss_grad(with_parameters(m, w), b.x_strong, b.labels);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.grad[i] + 0.01 * w[i];
      v[i] = 0.9 * v[i] + gi;
      w[i] -= 0.1 * (gi + 0.9 * v[i]);
    }
    tr.step();
  }
  const auto got = params_of(tr.model());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(got[i], w[i], 1e-14);
  // EMA after two updates from the initial weights
  const auto init = params_of(m);
  (void)init;
  EXPECT_EQ(tr.state().step, 2);
}

TEST(Stage1, NeverEvaluatesGenerativeTerm) {
  const StageResult r = run_stage1(plan1(10), desk().data, desk_model());
  EXPECT_EQ(r.bce_evaluations, 0u);
  for (const auto& rec : r.log) EXPECT_EQ(rec.loss_bce, 0.0);
  EXPECT_EQ(r.state.model.norm_mode(), NormMode::BatchStats);
  EXPECT_NE(r.state.model.buffer_hash(), desk_model().buffer_hash());
}

TEST(Stage1, RejectsBadSetups) {
  StagePlan p = plan1();
  p.classification.clamp01 = true;
  EXPECT_THROW(run_stage1(p, desk().data, desk_model()), DomainError);
  ArchitectureSpec a;
  a.classes = 3;
  EXPECT_THROW(run_stage1(plan1(), desk().data, build_network(a)), DomainError);
  EXPECT_THROW(run_stage1(plan2(), desk().data, desk_model()), DomainError);
}

TEST(Stage1, ZeroGenerativeWeightStage2MatchesContinuedAdversarialTraining) {
  const Desk& d = desk();
  StagePlan p = plan2(50);
  p.weights = {1.0, 0.0};
  const StageResult r = run_stage2(p, stage1_state(), d.data, d.ood);
  EXPECT_EQ(r.bce_evaluations, 0u);

  // reference: plain adversarial training with frozen statistics from the same start
  Network m = with_parameters(stage1_state().model, stage1_state().ema.values());
  m.set_norm_mode(NormMode::FrozenStats);
  DualStream s(d.data, d.ood, AugmentationPolicy::parse("none"), AugmentationPolicy::parse("none"), p.batch,
               mix_seed(p.seed, 10));
  std::vector<double> v(m.parameters().size(), 0.0);
  for (long t = 0; t < 50; ++t) {
    const StreamBatch b = s.next_classification();
    AttackSpec a = p.classification;
    a.seed = mix_seed(p.seed, 1000 + static_cast<std::uint64_t>(t));
    const Tensor adv = pgd_classification_attack(m, b.x_strong, b.labels, a).final;
    const LossGrad g = at_ce_loss_grad(m, adv, b.labels);
    auto w = m.parameters();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.grad[i] + p.optimizer.weight_decay * w[i];
      v[i] = p.optimizer.momentum * v[i] + gi;
      w[i] -= p.optimizer.lr * (gi + p.optimizer.momentum * v[i]);
    }
  }
  const auto got = params_of(r.state.model);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], m.parameters()[i], 1e-6);
}

TEST(Stage2, StartsFromStage1EmaWeights) {
  StagePlan p = plan2(1);
  Network seen = desk_model();
  RunOptions o;
  bool checked = false;
  // parameters after step 1 differ, so check the starting point through a zero learning rate
  p.optimizer.lr = 1e-300;
  o.on_step = [&](long, Network& m) {
    const auto ema = stage1_state().ema.values();
    for (std::size_t i = 0; i < ema.size(); ++i) EXPECT_NEAR(m.parameters()[i], ema[i], 1e-12);
    EXPECT_EQ(m.buffer_hash(), stage1_state().model.buffer_hash());
    checked = true;
  };
  run_stage2(p, stage1_state(), desk().data, desk().ood, o);
  EXPECT_TRUE(checked);
}

TEST(Stage2, BufferStatisticsConstantOverEpoch) {
  StagePlan p = plan2(12);  // 12 x 32 > 256 samples: more than one epoch of the data stream
  const auto h = stage1_state().model.buffer_hash();
  RunOptions o;
  long steps = 0;
  o.on_step = [&](long, Network& m) {
    EXPECT_EQ(m.buffer_hash(), h);
    ++steps;
  };
  const StageResult r = run_stage2(p, stage1_state(), desk().data, desk().ood, o);
  EXPECT_EQ(steps, 12);
  EXPECT_EQ(r.bce_evaluations, 12u);
  EXPECT_EQ(r.state.model.buffer_hash(), h);
}

TEST(Stage2, ForcedBatchStatsIsContractViolation) {
  RunOptions o;
  o.on_step = [](long step, Network& m) {
    if (step == 2) m.set_norm_mode(NormMode::BatchStats);
  };
  EXPECT_THROW(run_stage2(plan2(5), stage1_state(), desk().data, desk().ood, o), ContractViolation);
}

TEST(Stage2, RequiresAccumulatedStatistics) {
  TrainState fresh(desk_model());
  EXPECT_THROW(run_stage2(plan2(2), fresh, desk().data, desk().ood), DomainError);
}

TEST(Stage2, FrozenEnergyIndependentOfBatch) {
  const StageResult r = run_stage2(plan2(3), stage1_state(), desk().data, desk().ood);
  const Tensor x = desk().data.samples.slice(0, 1);
  const Tensor batch = concat(x, desk().ood.samples.slice(0, 31));
  const double alone = marginal_energy(logits(r.state.model, x))(0);
  const double inside = marginal_energy(logits(r.state.model, batch))(0);
  EXPECT_EQ(alone, inside);
}

TEST(Stage2, ZeroSamplingStepsDiscriminatesRawOod) {
  StagePlan p = plan2(1);
  p.generative.steps = 0;
  const Network start = with_parameters(stage1_state().model, stage1_state().ema.values());
  Network frozen = start;
  frozen.set_norm_mode(NormMode::FrozenStats);
  DualStream s(desk().data, desk().ood, AugmentationPolicy::parse("none"), AugmentationPolicy::parse("none"), p.batch,
               mix_seed(p.seed, 10));
  const StreamBatch b = s.next();
  const double expect = bce_generative_loss(frozen, b.x_mild, b.x0_mild);
  const StageResult r = run_stage2(p, stage1_state(), desk().data, desk().ood);
  EXPECT_EQ(r.log.at(0).loss_bce, expect);
}

TEST(Stage2, DivergenceAborts) {
  StagePlan p = plan2(5);
  p.optimizer.lr = 1e305;
  EXPECT_THROW(run_stage2(p, stage1_state(), desk().data, desk().ood), TrainingDivergence);
}

TEST(Checkpoint, RoundTrip) {
  const fs::path dir = fresh_dir("roundtrip");
  fs::create_directories(dir);
  TrainState s = stage1_state();
  s.step_offset = 7;
  s.metrics["fid"] = 1.25;
  s.velocity.assign(s.model.parameters().size(), 0.5);
  save_checkpoint(s, dir / "a.ckpt");
  const TrainState r = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(params_of(r.model), params_of(s.model));
  EXPECT_EQ(r.model.buffer_hash(), s.model.buffer_hash());
  EXPECT_EQ(std::vector<double>(r.ema.values().begin(), r.ema.values().end()),
            std::vector<double>(s.ema.values().begin(), s.ema.values().end()));
  EXPECT_EQ(r.ema.decay(), s.ema.decay());
  EXPECT_EQ(r.velocity, s.velocity);
  EXPECT_EQ(r.step, s.step);
  EXPECT_EQ(r.step_offset, 7);
  EXPECT_EQ(r.plan_hash, s.plan_hash);
  EXPECT_EQ(r.metrics, s.metrics);
  EXPECT_EQ(r.stage, s.stage);
  EXPECT_EQ(to_json(*r.model.architecture()), to_json(*s.model.architecture()));
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));
}

TEST(Checkpoint, CorruptFiles) {
  const fs::path dir = fresh_dir("corrupt");
  fs::create_directories(dir);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DomainError);
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), DomainError);
  save_checkpoint(stage1_state(), dir / "good.ckpt");
  const auto size = fs::file_size(dir / "good.ckpt");
  fs::resize_file(dir / "good.ckpt", size - 100);
  EXPECT_THROW(load_checkpoint(dir / "good.ckpt"), DomainError);
}

TEST(Resume, Stage1MidCheckpointReproducesFinalWeights) {
  const fs::path full = fresh_dir("s1_full"), part = fresh_dir("s1_part");
  RunOptions o;
  o.run_dir = full;
  const StageResult a = run_stage1(plan1(12), desk().data, desk_model(), o);
  o.run_dir = part;
  o.stop_after = 7;
  const StageResult b = run_stage1(plan1(12), desk().data, desk_model(), o);
  ASSERT_EQ(b.state.step, 7);
  const TrainState mid = load_checkpoint(part / "checkpoints" / "step_0000005.ckpt");
  RunOptions r;
  const StageResult c = resume_stage(plan1(12), mid, desk().data, desk().ood, r);
  EXPECT_EQ(params_of(c.state.model), params_of(a.state.model));
  EXPECT_EQ(c.state.model.buffer_hash(), a.state.model.buffer_hash());
}

TEST(Resume, Stage2WithRandomTReproducesFinalWeights) {
  StagePlan p = plan2(10);
  p.random_t = true;
  RunOptions o;
  o.step_offset = 20;
  const StageResult a = run_stage2(p, stage1_state(), desk().data, desk().ood, o);
  const fs::path part = fresh_dir("s2_part");
  o.run_dir = part;
  o.stop_after = 6;
  run_stage2(p, stage1_state(), desk().data, desk().ood, o);
  const TrainState mid = load_checkpoint(part / "checkpoints" / "step_0000025.ckpt");
  EXPECT_EQ(mid.step, 5);
  EXPECT_EQ(mid.step_offset, 20);
  const StageResult c = resume_stage(p, mid, desk().data, desk().ood);
  EXPECT_EQ(params_of(c.state.model), params_of(a.state.model));
  EXPECT_EQ(c.checkpoints.back().step, 30);
  StagePlan other = p;
  other.optimizer.lr = 0.5;
  EXPECT_THROW(resume_stage(other, mid, desk().data, desk().ood), DomainError);
}

TEST(Logs, CsvFilesUseGlobalSteps) {
  const fs::path dir = fresh_dir("logs");
  RunOptions o;
  o.run_dir = dir;
  o.step_offset = 100;
  o.evaluator = [](const Network&, long step) {
    return std::vector<MetricReport>{{step, "robust_accuracy", 0.5, "-", "-", 10, 0}};
  };
  run_stage2(plan2(5), stage1_state(), desk().data, desk().ood, o);
  std::ifstream train(dir / "logs" / "train.csv"), eval(dir / "logs" / "eval.csv");
  std::string line;
  std::getline(train, line);
  EXPECT_EQ(line, "step,loss_total,loss_atce,loss_bce");
  std::getline(train, line);
  EXPECT_EQ(line.substr(0, 4), "101,");
  std::getline(eval, line);
  EXPECT_EQ(line, MetricReport::csv_header());
  std::getline(eval, line);
  EXPECT_EQ(line, "105,robust_accuracy,0.5,-,-,10,0");
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "step_0000105.ckpt"));
}

TEST(Selection, Rules) {
  auto info = [](long step, std::map<std::string, double> m) { return CheckpointInfo{step, {}, std::move(m)}; };
  const std::vector<CheckpointInfo> one{info(5, {{"fid", 3.0}})};
  EXPECT_EQ(select_checkpoint(one, SelectCriterion::BestFid).step, 5);
  const std::vector<CheckpointInfo> seq{info(1, {{"fid", 10}}), info(2, {{"fid", 7}}), info(3, {{"fid", 9}})};
  EXPECT_EQ(&select_checkpoint(seq, SelectCriterion::BestFid), &seq[1]);
  const std::vector<CheckpointInfo> tie{info(4, {{"fid", 2}}), info(8, {{"fid", 2}})};
  EXPECT_EQ(select_checkpoint(tie, SelectCriterion::BestFid).step, 4);
  const std::vector<CheckpointInfo> rob{info(1, {{"robust_accuracy", 0.5}}), info(2, {{"robust_accuracy", 0.7}}),
                                        info(3, {{"robust_accuracy", 0.7}})};
  EXPECT_EQ(select_checkpoint(rob, SelectCriterion::BestRobust).step, 2);
  EXPECT_EQ(select_checkpoint(rob, SelectCriterion::Last).step, 3);
  EXPECT_THROW(select_checkpoint({}, SelectCriterion::Last), DomainError);
  EXPECT_THROW(select_checkpoint(rob, SelectCriterion::BestFid), DomainError);
  EXPECT_EQ(select_criterion_from_string("best_fid"), SelectCriterion::BestFid);
  EXPECT_THROW(select_criterion_from_string("worst"), DomainError);
}
