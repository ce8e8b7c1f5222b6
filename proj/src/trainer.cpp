#include "dat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace dat {
namespace fs = std::filesystem;

std::string to_string(Stage stage) { return stage == Stage::One ? "one" : "two"; }

std::string to_string(SamplingMode mode) { return mode == SamplingMode::Ancestral ? "ancestral" : "marginal"; }

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "ancestral") return SamplingMode::Ancestral;
  if (s == "marginal") return SamplingMode::Marginal;
  throw DomainError("unknown sampling mode '" + s + "'");
}

std::string to_string(GenerativeGradient g) { return g == GenerativeGradient::Scaled ? "scaled" : "reference"; }

GenerativeGradient generative_gradient_from_string(const std::string& s) {
  if (s == "scaled") return GenerativeGradient::Scaled;
  if (s == "reference") return GenerativeGradient::Reference;
  throw DomainError("unknown generative gradient '" + s + "'");
}

double OptimizerSpec::rate(long step, long total) const {
  if (schedule == "constant" || total <= 0) return lr;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * t));
}

void StagePlan::validate() const {
  weights.validate();
  classification.validate();
  generative.validate();
  if (stage == Stage::One) {
    if (weights.bce != 0.0) throw DomainError("stage one requires loss.w_bce = 0");
    if (norm_mode != NormMode::BatchStats) throw DomainError("stage one requires norm_mode = batch_stats");
  } else if (norm_mode != NormMode::FrozenStats) {
    throw DomainError("stage two requires norm_mode = frozen_stats");
  }
  if (!classification.eps) throw DomainError("classification attack needs attack.eps");
  if (classification.objective != AttackObjective::CrossEntropy) {
    throw DomainError("classification attack objective must be cross_entropy");
  }
  if (generative.objective != AttackObjective::NegJointEnergy && generative.objective != AttackObjective::NegMarginalEnergy) {
    throw DomainError("generative attack objective must be an energy objective");
  }
  if (!(optimizer.lr > 0.0)) throw DomainError("lr must be > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) throw DomainError("momentum must be in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0)) throw DomainError("weight_decay must be >= 0");
  if (optimizer.schedule != "constant" && optimizer.schedule != "cosine") {
    throw DomainError("schedule must be constant or cosine");
  }
  if (steps < 0) throw DomainError("steps must be >= 0");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw DomainError("ema_decay must be in (0, 1)");
  if (checkpoint_every <= 0) throw DomainError("checkpoint_every must be > 0");
  if (batch.classification == 0 || batch.data == 0 || batch.ood == 0) throw DomainError("batch sizes must be > 0");
  AugmentationPolicy::parse(strong_policy);
  AugmentationPolicy::parse(mild_policy);
}

nlohmann::json StagePlan::to_json() const {
  return {{"stage", to_string(stage)},
          {"norm_mode", to_string(norm_mode)},
          {"w_atce", weights.atce},
          {"w_bce", weights.bce},
          {"classification", classification.to_json()},
          {"generative", generative.to_json()},
          {"sampling", to_string(sampling)},
          {"random_t", random_t},
          {"gradient", to_string(gradient)},
          {"optimizer",
           {{"lr", optimizer.lr},
            {"momentum", optimizer.momentum},
            {"nesterov", optimizer.nesterov},
            {"weight_decay", optimizer.weight_decay},
            {"schedule", optimizer.schedule}}},
          {"steps", steps},
          {"ema_decay", ema_decay},
          {"checkpoint_every", checkpoint_every},
          {"batch", {batch.classification, batch.data, batch.ood}},
          {"strong_policy", strong_policy},
          {"mild_policy", mild_policy},
          {"seed", seed}};
}

StagePlan StagePlan::from_json(const nlohmann::json& j) {
  StagePlan p;
  p.stage = j.at("stage") == "one" ? Stage::One : Stage::Two;
  p.norm_mode = norm_mode_from_string(j.at("norm_mode"));
  p.weights = {j.at("w_atce"), j.at("w_bce")};
  p.classification = AttackSpec::from_json(j.at("classification"));
  p.generative = AttackSpec::from_json(j.at("generative"));
  p.sampling = sampling_mode_from_string(j.at("sampling"));
  p.random_t = j.at("random_t");
  p.gradient = generative_gradient_from_string(j.at("gradient"));
  const auto& o = j.at("optimizer");
  p.optimizer = {o.at("lr"), o.at("momentum"), o.at("nesterov"), o.at("weight_decay"), o.at("schedule")};
  p.steps = j.at("steps");
  p.ema_decay = j.at("ema_decay");
  p.checkpoint_every = j.at("checkpoint_every");
  const auto& b = j.at("batch");
  p.batch = {b.at(0), b.at(1), b.at(2)};
  p.strong_policy = j.at("strong_policy");
  p.mild_policy = j.at("mild_policy");
  p.seed = j.at("seed");
  return p;
}

std::string StagePlan::hash() const { return hex64(fnv1a(to_json().dump())); }

StagePlan default_stage1_plan() { return StagePlan{}; }

StagePlan default_stage2_plan() {
  StagePlan p;
  p.stage = Stage::Two;
  p.norm_mode = NormMode::FrozenStats;
  p.weights = {1.0, 1.0};
  p.optimizer.lr = 0.01;
  return p;
}

// Checkpoint container ------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DomainError("truncated checkpoint");
  return v;
}

void write_blob(std::ostream& os, std::span<const double> v) {
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_blob(std::istream& is, std::size_t n) {
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DomainError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& path) {
  if (!state.model.architecture()) throw DomainError("only networks built from an architecture can be saved");
  nlohmann::json header{{"architecture", dat::to_json(*state.model.architecture())},
                        {"norm_mode", to_string(state.model.norm_mode())},
                        {"plan_hash", state.plan_hash},
                        {"step", state.step},
                        {"step_offset", state.step_offset},
                        {"stage", to_string(state.stage)},
                        {"streams", state.streams},
                        {"label_rng", state.label_rng},
                        {"schedule_rng", state.schedule_rng},
                        {"metrics", state.metrics},
                        {"ema_decay", state.ema.decay()},
                        {"sizes",
                         {state.model.parameters().size(), state.model.buffers().size(), state.ema.values().size(),
                          state.velocity.size()}}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DomainError("cannot write checkpoint " + path.string());
    const std::string text = header.dump();
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint64_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_blob(os, state.model.parameters());
    write_blob(os, state.model.buffers());
    write_blob(os, state.ema.values());
    write_blob(os, state.velocity);
  }
  fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DomainError(path.string() + " is not a checkpoint");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion) throw DomainError("unsupported checkpoint version " + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw DomainError("truncated checkpoint");
  const auto header = nlohmann::json::parse(text);
  const auto sizes = header.at("sizes").get<std::vector<std::size_t>>();

  TrainState s{build_network(architecture_from_json(header.at("architecture")))};
  if (s.model.parameters().size() != sizes[0] || s.model.buffers().size() != sizes[1]) {
    throw DomainError("checkpoint does not match its architecture");
  }
  const auto params = read_blob(is, sizes[0]);
  const auto buffers = read_blob(is, sizes[1]);
  std::copy(params.begin(), params.end(), s.model.parameters().begin());
  std::copy(buffers.begin(), buffers.end(), s.model.mutable_buffers().begin());
  s.model.set_norm_mode(norm_mode_from_string(header.at("norm_mode")));
  s.ema = EmaShadow(params, header.at("ema_decay").get<double>());
  s.ema.mutable_values() = read_blob(is, sizes[2]);
  s.velocity = read_blob(is, sizes[3]);
  s.step = header.at("step");
  s.step_offset = header.value("step_offset", 0L);
  s.stage = header.at("stage") == "one" ? Stage::One : Stage::Two;
  s.plan_hash = header.at("plan_hash");
  s.streams = header.at("streams");
  s.label_rng = header.at("label_rng");
  s.schedule_rng = header.at("schedule_rng");
  s.metrics = header.at("metrics").get<std::map<std::string, double>>();
  return s;
}

SelectCriterion select_criterion_from_string(const std::string& s) {
  if (s == "best_fid") return SelectCriterion::BestFid;
  if (s == "best_robust") return SelectCriterion::BestRobust;
  if (s == "last") return SelectCriterion::Last;
  throw DomainError("unknown checkpoint criterion '" + s + "'");
}

const CheckpointInfo& select_checkpoint(const std::vector<CheckpointInfo>& stream, SelectCriterion criterion) {
  if (stream.empty()) throw DomainError("no checkpoints to select from");
  auto score = [&](const CheckpointInfo& c) -> std::optional<double> {
    const char* key = criterion == SelectCriterion::BestFid ? "fid" : "robust_accuracy";
    auto it = c.metrics.find(key);
    if (it == c.metrics.end()) return std::nullopt;
    return criterion == SelectCriterion::BestFid ? it->second : -it->second;
  };
  const CheckpointInfo* best = nullptr;
  std::optional<double> best_score;
  for (const auto& c : stream) {
    if (criterion == SelectCriterion::Last) {
      if (!best || c.step > best->step) best = &c;
      continue;
    }
    const auto s = score(c);
    if (!s) continue;
    if (!best || *s < *best_score || (*s == *best_score && c.step < best->step)) {
      best = &c;
      best_score = s;
    }
  }
  if (!best) throw DomainError("no checkpoint carries the metric needed for selection");
  return *best;
}

// Trainer ---------------------------------------------------------------------

Trainer::Trainer(StagePlan plan, const DatasetHandle& data, const DatasetHandle& ood, Network model)
    : Trainer(plan, data, ood, TrainState{std::move(model)}) {}

Trainer::Trainer(StagePlan plan, const DatasetHandle& data, const DatasetHandle& ood, TrainState state)
    : plan_(std::move(plan)),
      data_(data),
      ood_(ood),
      state_(std::move(state)),
      streams_(data, ood, AugmentationPolicy::parse(plan_.strong_policy), AugmentationPolicy::parse(plan_.mild_policy),
               plan_.batch, mix_seed(plan_.seed, 10)),
      labels_(data.labels, mix_seed(plan_.seed, 11)),
      schedule_rng_(mix_seed(plan_.seed, 12)) {
  prepare();
}

void Trainer::prepare() {
  plan_.validate();
  if (!data_.unit_range && (plan_.classification.clamp01 || (plan_.weights.bce > 0.0 && plan_.generative.clamp01))) {
    throw DomainError("attack.clamp01 is set but " + data_.name + " is not confined to [0, 1]");
  }
  if (state_.model.num_classes() != data_.num_classes) {
    throw DomainError("model has " + std::to_string(state_.model.num_classes()) + " classes, data has " +
                      std::to_string(data_.num_classes));
  }
  const std::string hash = plan_.hash();
  const bool resuming = state_.plan_hash == hash && !state_.streams.is_null();
  if (resuming) {
    streams_.restore(state_.streams);
    labels_.restore(state_.label_rng);
    set_rng_state(schedule_rng_, state_.schedule_rng);
  } else {
    state_.step = 0;
    state_.plan_hash = hash;
    state_.ema = EmaShadow(state_.model.parameters(), plan_.ema_decay);
    state_.velocity.assign(state_.model.parameters().size(), 0.0);
    state_.metrics.clear();
  }
  state_.stage = plan_.stage;
  state_.model.set_norm_mode(plan_.norm_mode);
  state_.model.require_norm_mode(plan_.stage == Stage::Two ? std::optional(NormMode::FrozenStats) : std::nullopt);
}

TrainState Trainer::snapshot() const {
  TrainState s = state_;
  s.streams = streams_.state();
  s.label_rng = labels_.state();
  s.schedule_rng = rng_state(schedule_rng_);
  return s;
}

Network Trainer::evaluation_model(bool ema) const {
  Network m = ema ? with_parameters(state_.model, state_.ema.values()) : state_.model;
  m.require_norm_mode(std::nullopt);
  m.set_norm_mode(NormMode::FrozenStats);
  return m;
}

StepRecord Trainer::step() {
  Network& model = state_.model;
  const long t = state_.step;
  const bool generative = plan_.weights.bce > 0.0;

  CombinedBatch batch;
  StreamBatch draw = generative ? streams_.next() : streams_.next_classification();
  AttackSpec cls = plan_.classification;
  cls.seed = mix_seed(plan_.seed, 1000 + static_cast<std::uint64_t>(t));
  batch.x_adv = pgd_classification_attack(model, draw.x_strong, draw.labels, cls).final;
  batch.labels = std::move(draw.labels);

  if (generative) {
    AttackSpec gen = plan_.generative;
    gen.seed = mix_seed(plan_.seed, 2000 + static_cast<std::uint64_t>(t));
    if (plan_.random_t && gen.steps > 1) {
      gen.steps = std::uniform_int_distribution<int>(1, gen.steps)(schedule_rng_);
    }
    Labels y_prime;
    if (plan_.sampling == SamplingMode::Ancestral) {
      gen.objective = AttackObjective::NegJointEnergy;
      y_prime = labels_.sample(draw.x0_mild.batch());
    } else {
      gen.objective = AttackObjective::NegMarginalEnergy;
    }
    Trajectory traj = pgd_energy_sample(model, draw.x0_mild, gen, y_prime);
    degenerate_steps_ += traj.total_degenerate();
    batch.x_data = std::move(draw.x_mild);
    batch.x_contrastive = std::move(traj.final);
  }

  CombinedLoss loss = combined_loss(model, batch, plan_.weights, plan_.gradient, plan_.norm_mode == NormMode::BatchStats);
  if (loss.bce_evaluated) ++bce_evaluations_;
  const bool finite = std::isfinite(loss.total) &&
                      std::all_of(loss.grad.begin(), loss.grad.end(), [](double g) { return std::isfinite(g); });
  if (!finite) {
    std::ostringstream os;
    os << "training diverged at step " << t << " (stage " << to_string(plan_.stage) << "): loss_atce=" << loss.atce
       << " loss_bce=" << loss.bce;
    throw TrainingDivergence(os.str());
  }

  // SGD with Nesterov momentum and coupled weight decay.
  const double lr = plan_.optimizer.rate(t, plan_.steps);
  const double mu = plan_.optimizer.momentum;
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = loss.grad[i] + plan_.optimizer.weight_decay * params[i];
    state_.velocity[i] = mu * state_.velocity[i] + g;
    g = plan_.optimizer.nesterov ? g + mu * state_.velocity[i] : state_.velocity[i];
    params[i] -= lr * g;
  }
  if (!std::all_of(params.begin(), params.end(), [](double p) { return std::isfinite(p); })) {
    throw TrainingDivergence("training diverged at step " + std::to_string(t) + ": non-finite parameters");
  }
  state_.ema.update(params);
  ++state_.step;
  return {state_.step, loss.total, loss.atce, loss.bce};
}

// Stage drivers ---------------------------------------------------------------

std::string train_csv_header() { return "step,loss_total,loss_atce,loss_bce"; }

std::string train_csv_row(const StepRecord& r) {
  return std::to_string(r.step) + ',' + format_double(r.loss_total) + ',' + format_double(r.loss_atce) + ',' +
         format_double(r.loss_bce);
}

namespace {

void append_line(const fs::path& path, const std::string& header, const std::string& line) {
  const bool fresh = !fs::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw DomainError("cannot write " + path.string());
  if (fresh) os << header << '\n';
  os << line << '\n';
}

std::string step_name(long step) {
  std::ostringstream os;
  os << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
  return os.str();
}

StageResult drive(Trainer& trainer, const StagePlan& plan, const RunOptions& options) {
  StageResult result;
  if (options.run_dir) {
    fs::create_directories(*options.run_dir / "logs");
    fs::create_directories(*options.run_dir / "checkpoints");
  }
  auto checkpoint = [&]() {
    TrainState snap = trainer.snapshot();
    snap.step_offset = options.step_offset;
    const long global = options.step_offset + snap.step;
    CheckpointInfo info{global, {}, {}};
    if (options.evaluator) {
      const Network eval_model = trainer.evaluation_model(options.evaluate_ema);
      for (const auto& r : options.evaluator(eval_model, global)) {
        info.metrics[r.metric] = r.value;
        if (options.run_dir) {
          append_line(*options.run_dir / "logs" / "eval.csv", MetricReport::csv_header(), r.csv_row());
        }
      }
    }
    snap.metrics = info.metrics;
    if (options.run_dir) {
      info.path = *options.run_dir / "checkpoints" / step_name(global);
      save_checkpoint(snap, info.path);
    }
    result.checkpoints.push_back(info);
    result.snapshots.push_back(std::move(snap));
  };

  while (trainer.state().step < plan.steps) {
    if (options.stop_after >= 0 && trainer.state().step >= options.stop_after) break;
    const StepRecord r = trainer.step();
    result.log.push_back(r);
    if (options.run_dir) {
      StepRecord g = r;
      g.step += options.step_offset;
      append_line(*options.run_dir / "logs" / "train.csv", train_csv_header(), train_csv_row(g));
    }
    if (options.on_step) options.on_step(r.step, trainer.model());
    if (r.step % plan.checkpoint_every == 0 || r.step == plan.steps) checkpoint();
  }
  if (result.checkpoints.empty() || result.checkpoints.back().step != options.step_offset + trainer.state().step) {
    checkpoint();
  }
  result.state = trainer.snapshot();
  result.bce_evaluations = trainer.bce_evaluations();
  result.degenerate_steps = trainer.degenerate_steps();
  return result;
}

}  // namespace

StageResult run_stage1(const StagePlan& plan, const DatasetHandle& data, Network model, const RunOptions& options) {
  if (plan.stage != Stage::One) throw DomainError("run_stage1 needs a stage one plan");
  Trainer trainer(plan, data, data, std::move(model));
  return drive(trainer, plan, options);
}

StageResult run_stage2(const StagePlan& plan, const TrainState& stage1, const DatasetHandle& data,
                       const DatasetHandle& ood, const RunOptions& options) {
  if (plan.stage != Stage::Two) throw DomainError("run_stage2 needs a stage two plan");
  if (stage1.model.buffers().size() > 0 &&
      std::all_of(stage1.model.buffers().begin(), stage1.model.buffers().end(), [](double v) { return v == 0.0 || v == 1.0; })) {
    throw DomainError("stage one checkpoint has no accumulated normalization statistics");
  }
  Network start = stage1.ema.values().empty() ? stage1.model : with_parameters(stage1.model, stage1.ema.values());
  Trainer trainer(plan, data, ood, std::move(start));
  return drive(trainer, plan, options);
}

StageResult resume_stage(const StagePlan& plan, const TrainState& checkpoint, const DatasetHandle& data,
                         const DatasetHandle& ood, const RunOptions& options) {
  if (checkpoint.plan_hash != plan.hash()) throw DomainError("checkpoint was produced by a different plan");
  Trainer trainer(plan, data, plan.stage == Stage::One ? data : ood, checkpoint);
  RunOptions o = options;
  o.step_offset = checkpoint.step_offset;
  return drive(trainer, plan, o);
}

}  // namespace dat
