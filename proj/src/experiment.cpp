#include "dat/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dat/analysis.hpp"
#include "dat/energy.hpp"
#include "dat/plot.hpp"

namespace dat {
namespace fs = std::filesystem;

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  ExperimentData d;
  d.train = load_dataset(cfg.id);
  DatasetSpec test = cfg.id;
  test.split = "test";
  test.size = cfg.test_size;
  d.test = load_dataset(test);
  d.ood = load_dataset(cfg.ood);
  DatasetSpec ood_test = cfg.ood;
  ood_test.split = "test";
  ood_test.size = std::max(cfg.eval.n_gen, cfg.eval.ood_n);
  d.ood_test = load_dataset(ood_test);
  if (d.train.num_classes < 2) throw DomainError("data.id must be a labelled dataset with at least 2 classes");
  if (d.ood.sample_shape() != d.train.sample_shape()) {
    throw DomainError("data.ood samples " + shape_string(d.ood.sample_shape()) + " do not match data.id samples " +
                      shape_string(d.train.sample_shape()));
  }
  return d;
}

ArchitectureSpec resolve_architecture(const ExperimentConfig& cfg, const ExperimentData& data) {
  ArchitectureSpec a = cfg.arch;
  a.input_shape = data.train.sample_shape();
  a.classes = data.train.num_classes;
  return a;
}

fs::path runs_root() {
  if (const char* env = std::getenv("DAT_RUNS_DIR"); env && *env) return env;
  return "runs";
}

namespace {

AttackSpec with_range(AttackSpec s, const ExperimentData& data) {
  s.clamp01 = data.train.unit_range;
  return s;
}

}  // namespace

FeatureEmbedder make_embedder(const ExperimentConfig& cfg, const ExperimentData& data,
                              const std::optional<fs::path>& cache_dir) {
  if (cfg.eval.embedder == "identity_flatten") return FeatureEmbedder::identity_flatten();
  const fs::path cached = cache_dir ? *cache_dir / "probe.ckpt" : fs::path();
  TrainState probe;
  if (cache_dir && fs::exists(cached)) {
    probe = load_checkpoint(cached);
  } else {
    ArchitectureSpec arch = resolve_architecture(cfg, data);
    arch.seed = mix_seed(cfg.seed, 77);
    StagePlan plan;
    plan.steps = cfg.eval.probe_steps;
    plan.seed = mix_seed(cfg.seed, 78);
    plan.classification.steps = 0;
    plan.classification.eps = 0.0;
    plan.classification.clamp01 = data.train.unit_range;
    plan.generative.clamp01 = data.train.unit_range;
    plan.checkpoint_every = std::max(1L, plan.steps);
    plan.batch = cfg.stage1.batch;
    StageResult r = run_stage1(plan, data.train, build_network(arch));
    probe = std::move(r.state);
    if (cache_dir) save_checkpoint(probe, cached);
  }
  Network net = with_parameters(probe.model, probe.ema.values());
  return FeatureEmbedder::trained_probe(net, net.num_layers() - 1);
}

Tensor generate_samples(const EnergyModel& model, const ExperimentConfig& cfg, const ExperimentData& data,
                        SamplingMode mode) {
  const Tensor x0 = take(data.ood_test, cfg.eval.n_gen).samples;
  AttackSpec g;
  g.steps = cfg.eval.gen_steps;
  g.step_size = cfg.eval.gen_step_size;
  g.clamp01 = data.train.unit_range;
  if (mode == SamplingMode::Ancestral) {
    g.objective = AttackObjective::NegJointEnergy;
    return pgd_energy_sample(model, x0, g, balanced_labels(x0.batch(), model.num_classes())).final;
  }
  g.objective = AttackObjective::NegMarginalEnergy;
  return pgd_energy_sample(model, x0, g).final;
}

const std::vector<std::string>& metric_groups() {
  static const std::vector<std::string> groups{"robust", "fid", "ood", "calibration", "counterfactual", "sampling",
                                               "energy"};
  return groups;
}

EvalOutput evaluate_model(const EnergyModel& model, const ExperimentConfig& cfg, const ExperimentData& data,
                          const FeatureEmbedder& embedder, const std::set<std::string>& groups, long step) {
  for (const auto& g : groups) {
    if (std::find(metric_groups().begin(), metric_groups().end(), g) == metric_groups().end()) {
      throw DomainError("unknown metric group '" + g + "'");
    }
  }
  if (embedder.name() == "identity_flatten" && data.train.sample_shape().size() == 3 &&
      shape_numel(data.train.sample_shape()) > 64 && (groups.count("fid") || groups.count("counterfactual"))) {
    throw DomainError("identity_flatten embedder is meant for low-dimensional data; use trained_probe for images");
  }
  EvalOutput out;
  auto report = [&](const std::string& metric, double value, const std::string& emb, const std::string& attack,
                    std::size_t n) { out.reports.push_back({step, metric, value, emb, attack, n, cfg.seed}); };
  const GaussianSummary* train_summary = nullptr;
  GaussianSummary train_stats;
  auto reference = [&]() -> const GaussianSummary& {
    if (!train_summary) {
      train_stats = summarize(embedder.embed(data.train.samples));
      train_summary = &train_stats;
    }
    return *train_summary;
  };

  if (groups.count("robust")) {
    const AttackSpec atk = with_range(cfg.eval.attack, data);
    report("clean_accuracy", clean_accuracy(model, data.test.samples, data.test.labels), "-", "-", data.test.size());
    report("robust_accuracy", robust_accuracy(model, data.test.samples, data.test.labels, atk), "-", atk.hash(),
           data.test.size());
  }
  if (groups.count("fid")) {
    out.samples = generate_samples(model, cfg, data, SamplingMode::Ancestral);
    report("fid", fid(summarize(embedder.embed(out.samples)), reference()), embedder.name(), "-", out.samples.batch());
    report("inception_score", inception_score(conditional_probs(logits(model, out.samples))), "-", "-",
           out.samples.batch());
  }
  if (groups.count("ood")) {
    const Tensor ood = take(data.ood_test, cfg.eval.ood_n).samples;
    AttackSpec adv;
    adv.steps = cfg.eval.ood_steps;
    adv.step_size = cfg.eval.ood_step_size;
    adv.eps = cfg.eval.ood_eps;
    adv.clamp01 = data.train.unit_range;
    for (OodScore fn : {OodScore::NegEnergy, OodScore::MaxConfidence}) {
      const auto id_scores = ood_scores(model, data.test.samples, fn);
      report("auroc_" + to_string(fn) + "_clean", ood_auroc(id_scores, ood_scores(model, ood, fn)), "-", "-",
             ood.batch());
      report("auroc_" + to_string(fn) + "_adversarial", ood_auroc(id_scores, ood_scores(model, ood, fn, adv)), "-",
             adv.hash(), ood.batch());
    }
  }
  if (groups.count("calibration")) {
    out.calibration = ece(conditional_probs(logits(model, data.test.samples)), data.test.labels, cfg.eval.ece_bins);
    report("ece", out.calibration.ece, "-", "-", data.test.size());
  }
  if (groups.count("counterfactual")) {
    const int target = cfg.eval.cf_target;
    if (target < 0 || static_cast<std::size_t>(target) >= model.num_classes()) {
      throw DomainError("eval.cf_target is not a valid class");
    }
    std::vector<std::size_t> src_rows;
    for (std::size_t i = 0; i < data.train.size() && src_rows.size() < cfg.eval.cf_n; ++i)
      if (data.train.labels[i] != target) src_rows.push_back(i);
    const auto ref_rows = data.train.indices_of(target);
    AttackSpec base;
    base.steps = cfg.eval.attack.steps;
    base.step_size = cfg.eval.attack.step_size;
    base.clamp01 = data.train.unit_range;
    out.counterfactual = counterfactual_fid(model, data.train.batch(src_rows), data.train.batch(ref_rows), target,
                                            cfg.eval.cf_eps, embedder, base);
    for (const auto& p : out.counterfactual) {
      report("cf_fid_eps" + format_double(p.eps), p.fid, embedder.name(), "-", src_rows.size());
      report("cf_confidence_eps" + format_double(p.eps), p.confidence, "-", "-", src_rows.size());
    }
  }
  if (groups.count("sampling")) {
    AttackSpec g;
    g.steps = cfg.eval.gen_steps;
    g.step_size = cfg.eval.gen_step_size;
    g.clamp01 = data.train.unit_range;
    const Tensor x0 = take(data.ood_test, cfg.eval.n_gen).samples;
    const auto cmp = compare_sampling_strategies(model, x0, data.train.samples, data.train.labels, g, embedder,
                                                 mix_seed(cfg.seed, 90));
    report("fid_ancestral", cmp.fid_ancestral, embedder.name(), "-", cmp.n);
    report("fid_marginal", cmp.fid_marginal, embedder.name(), "-", cmp.n);
  }
  if (groups.count("energy")) {
    const Vector e_id = marginal_energy(logits(model, data.test.samples));
    const Vector e_ood = marginal_energy(logits(model, data.ood_test.samples));
    report("energy_gap", e_ood.mean() - e_id.mean(), "-", "-", data.test.size() + data.ood_test.size());
  }
  return out;
}

namespace {

void write_text(const fs::path& path, const std::string& text) { plot::write_file(path, text); }

nlohmann::json info_json(const CheckpointInfo& c) {
  return {{"step", c.step}, {"path", c.path.string()}, {"metrics", c.metrics}};
}

Network evaluation_network(const TrainState& state, const std::string& weights) {
  Network m = weights == "ema" && !state.ema.values().empty() ? with_parameters(state.model, state.ema.values())
                                                              : state.model;
  m.require_norm_mode(std::nullopt);
  m.set_norm_mode(NormMode::FrozenStats);
  return m;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

void training_curve_plot(const fs::path& train_csv, const fs::path& out) {
  const auto rows = read_csv(train_csv);
  if (rows.size() < 2) return;
  plot::Series atce{"loss_atce", {}, {}}, bce{"loss_bce", {}, {}};
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 4) continue;
    const double s = std::stod(rows[i][0]);
    atce.x.push_back(s);
    atce.y.push_back(std::stod(rows[i][2]));
    bce.x.push_back(s);
    bce.y.push_back(std::stod(rows[i][3]));
  }
  plot::write_file(out, plot::chart({"Training losses", "step", "loss"}, {atce, bce}));
}

}  // namespace

TrainSummary run_training(const ExperimentConfig& cfg, const fs::path& run_dir) {
  cfg.validate();
  const ExperimentData data = load_experiment_data(cfg);
  const ArchitectureSpec arch = resolve_architecture(cfg, data);
  fs::create_directories(run_dir / "logs");
  fs::create_directories(run_dir / "checkpoints");
  write_text(run_dir / "config.snapshot", to_text(cfg));
  for (const char* f : {"logs/train.csv", "logs/eval.csv"}) fs::remove(run_dir / f);

  const FeatureEmbedder embedder = make_embedder(cfg, data, run_dir);
  TrainSummary summary;
  summary.run_dir = run_dir;

  TrainState stage1;
  if (cfg.stages == "two") {
    if (!fs::exists(cfg.stage1_checkpoint)) {
      throw DomainError("run.stage1_checkpoint '" + cfg.stage1_checkpoint + "' does not exist");
    }
    stage1 = load_checkpoint(cfg.stage1_checkpoint);
  } else {
    RunOptions o;
    o.run_dir = run_dir;
    o.evaluate_ema = cfg.eval.weights == "ema";
    o.evaluator = [&](const Network& m, long step) {
      return evaluate_model(m, cfg, data, embedder, {"robust"}, step).reports;
    };
    StageResult r = run_stage1(cfg.stage1, data.train, build_network(arch), o);
    const auto& chosen = select_checkpoint(r.checkpoints, select_criterion_from_string(cfg.select1));
    summary.stage1 = chosen;
    stage1 = r.snapshots[static_cast<std::size_t>(&chosen - r.checkpoints.data())];
  }

  if (cfg.stages != "one") {
    RunOptions o;
    o.run_dir = run_dir;
    o.evaluate_ema = cfg.eval.weights == "ema";
    o.step_offset = cfg.stages == "two" ? stage1.step_offset + stage1.step : cfg.stage1.steps;
    o.evaluator = [&](const Network& m, long step) {
      return evaluate_model(m, cfg, data, embedder, {"robust", "fid"}, step).reports;
    };
    StageResult r = run_stage2(cfg.stage2, stage1, data.train, data.ood, o);
    summary.stage2 = select_checkpoint(r.checkpoints, select_criterion_from_string(cfg.select2));
    summary.stage2_log = r.log;
    summary.stage2_bce_evaluations = r.bce_evaluations;
  }

  nlohmann::json j{{"name", cfg.name}, {"seed", cfg.seed}, {"stages", cfg.stages}, {"embedder", embedder.name()}};
  if (summary.stage1) j["stage1"] = info_json(*summary.stage1);
  if (summary.stage2) j["stage2"] = info_json(*summary.stage2);
  write_text(run_dir / "summary.json", j.dump(2) + "\n");
  return summary;
}

EvalOutput run_evaluation(const fs::path& checkpoint, const ExperimentConfig& cfg, const std::set<std::string>& groups,
                          const fs::path& out_dir) {
  const TrainState state = load_checkpoint(checkpoint);
  const ExperimentData data = load_experiment_data(cfg);
  const Network model = evaluation_network(state, cfg.eval.weights);
  if (model.num_classes() != data.train.num_classes || model.input_shape() != data.train.sample_shape()) {
    throw DomainError("checkpoint does not match the configured data");
  }
  const FeatureEmbedder embedder = make_embedder(cfg, data, out_dir);
  EvalOutput out = evaluate_model(model, cfg, data, embedder, groups, state.step_offset + state.step);

  fs::create_directories(out_dir / "logs");
  const fs::path csv = out_dir / "logs" / "eval.csv";
  const bool fresh = !fs::exists(csv);
  {
    std::ofstream os(csv, std::ios::app);
    if (!os) throw DomainError("cannot write " + csv.string());
    if (fresh) os << MetricReport::csv_header() << '\n';
    for (const auto& r : out.reports) os << r.csv_row() << '\n';
  }

  const fs::path plots = out_dir / "plots";
  const std::string tag = "step_" + std::to_string(state.step_offset + state.step);
  if (groups.count("calibration")) {
    std::vector<double> upper, acc, conf;
    for (const auto& b : out.calibration.bins) {
      upper.push_back(b.upper);
      acc.push_back(b.accuracy);
      conf.push_back(b.confidence);
    }
    plot::write_file(plots / (tag + "_reliability.svg"), plot::reliability(upper, acc, conf, "Reliability diagram"));
  }
  if (groups.count("counterfactual")) {
    plot::Series fid_s{"class-wise FID", {}, {}}, conf_s{"target confidence", {}, {}};
    for (const auto& p : out.counterfactual) {
      fid_s.x.push_back(p.eps);
      fid_s.y.push_back(p.fid);
      conf_s.x.push_back(p.eps);
      conf_s.y.push_back(p.confidence);
    }
    plot::write_file(plots / (tag + "_counterfactual_fid.svg"), plot::chart({"Counterfactual FID", "eps", "FID"}, {fid_s}));
    plot::write_file(plots / (tag + "_counterfactual_confidence.svg"),
                     plot::chart({"Counterfactual confidence", "eps", "p(target)"}, {conf_s}));
  }
  if (groups.count("fid") && data.train.sample_shape() == Shape{2, 1, 1}) {
    plot::Series real{"data", {}, {}, true}, gen{"generated", {}, {}, true};
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      real.x.push_back(data.train.samples[2 * i]);
      real.y.push_back(data.train.samples[2 * i + 1]);
    }
    for (std::size_t i = 0; i < out.samples.batch(); ++i) {
      gen.x.push_back(out.samples[2 * i]);
      gen.y.push_back(out.samples[2 * i + 1]);
    }
    plot::write_file(plots / (tag + "_samples.svg"), plot::chart({"Generated samples", "x1", "x2", true}, {real, gen}));
  }
  if (fs::exists(out_dir / "logs" / "train.csv")) {
    training_curve_plot(out_dir / "logs" / "train.csv", plots / "training_curve.svg");
  }
  return out;
}

const std::vector<std::string>& ablation_suites() {
  static const std::vector<std::string> suites{"augmentation", "ood_size", "loss_weights", "t_steps"};
  return suites;
}

std::vector<std::pair<std::string, std::vector<std::string>>> ablation_variants(const std::string& suite) {
  const std::string strong = "\"autoaugment_like+gaussian_jitter(0.05)\"";
  if (suite == "augmentation") {
    return {{"uniform_strong", {"data.strong_policy=" + strong, "data.mild_policy=" + strong}},
            {"decoupled", {"data.strong_policy=" + strong, "data.mild_policy=\"gaussian_jitter(0.02)\""}},
            {"none_for_generative", {"data.strong_policy=" + strong, "data.mild_policy=\"none\""}}};
  }
  if (suite == "ood_size") {
    return {{"ood_10", {"data.ood_size=10"}}, {"ood_100", {"data.ood_size=100"}}, {"ood_1000", {"data.ood_size=1000"}}};
  }
  if (suite == "loss_weights") {
    return {{"w1.0_1.0", {"loss.w_atce=1.0", "loss.w_bce=1.0"}},
            {"w0.6_1.4", {"loss.w_atce=0.6", "loss.w_bce=1.4"}},
            {"w1.4_0.6", {"loss.w_atce=1.4", "loss.w_bce=0.6"}}};
  }
  if (suite == "t_steps") {
    return {{"T5", {"gen.steps=5"}}, {"T10", {"gen.steps=10"}}, {"T20", {"gen.steps=20"}}, {"T40", {"gen.steps=40"}}};
  }
  throw DomainError("unknown ablation suite '" + suite + "'");
}

std::string ablation_csv_header() { return "suite,variant," + MetricReport::csv_header(); }

fs::path run_ablation(const std::string& suite, const ExperimentConfig& base, const fs::path& out_dir) {
  const auto variants = ablation_variants(suite);
  fs::create_directories(out_dir);
  const fs::path csv = out_dir / (suite + ".csv");
  std::ofstream os(csv);
  if (!os) throw DomainError("cannot write " + csv.string());
  os << ablation_csv_header() << '\n';
  for (const auto& [name, overrides] : variants) {
    ExperimentConfig cfg = base;
    cfg.name = base.name + "_" + suite + "_" + name;
    cfg.stages = "both";
    apply_overrides(cfg, overrides);
    const fs::path dir = out_dir / suite / name;
    const TrainSummary s = run_training(cfg, dir);
    const ExperimentData data = load_experiment_data(cfg);
    const TrainState state = load_checkpoint(s.stage2->path);
    const Network model = evaluation_network(state, cfg.eval.weights);
    const FeatureEmbedder embedder = make_embedder(cfg, data, dir);
    const auto out = evaluate_model(model, cfg, data, embedder, {"robust", "fid", "energy"}, s.stage2->step);
    for (const auto& r : out.reports) os << suite << ',' << name << ',' << r.csv_row() << '\n';
  }
  return csv;
}

std::vector<VerifyCheck> run_verification(const fs::path& out_dir, std::uint64_t seed) {
  const fs::path dir = out_dir / "analysis";
  fs::create_directories(dir);
  std::vector<VerifyCheck> checks;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_batch = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = normal(rng);
    return t;
  };
  auto random_labels = [&](std::size_t n, std::size_t k) {
    Labels y(n);
    for (auto& v : y) v = std::uniform_int_distribution<int>(0, static_cast<int>(k) - 1)(rng);
    return y;
  };

  // Scaled generative gradient against the BCE loss gradient.
  {
    std::ofstream os(dir / "gradient_identity.csv");
    os << "arch,seed,rel_error,max_scale_sum_error\n";
    double worst = 0.0, worst_sum = 0.0;
    for (const std::string kind : {"mlp", "convnet"}) {
      for (std::uint64_t s = 0; s < 3; ++s) {
        ArchitectureSpec a;
        a.kind = kind;
        a.seed = mix_seed(seed, s);
        a.input_shape = kind == "mlp" ? Shape{2, 1, 1} : Shape{1, 6, 6};
        a.classes = 3;
        a.hidden = kind == "mlp" ? std::vector<std::size_t>{16, 16} : std::vector<std::size_t>{4, 4};
        Network net = build_network(a);
        net.set_norm_mode(NormMode::FrozenStats);
        Shape bs = a.input_shape;
        bs.insert(bs.begin(), 6);
        const Tensor xd = random_batch(bs), xc = random_batch(bs);
        const ParamVector g = bce_generative_loss_grad(net, xd, xc).grad;
        const ParamVector sg = scaled_ebm_gradient(net, xd, xc);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          num += (g[i] + sg[i]) * (g[i] + sg[i]);
          den += g[i] * g[i];
        }
        const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
        const Vector e = marginal_energy(logits(net, xd));
        const auto sf = scale_factors(std::vector<double>(e.data(), e.data() + e.size()));
        double sum_err = 0.0;
        for (std::size_t i = 0; i < sf.alpha.size(); ++i) sum_err = std::max(sum_err, std::abs(sf.alpha[i] + sf.beta[i] - 1.0));
        worst = std::max(worst, rel);
        worst_sum = std::max(worst_sum, sum_err);
        os << kind << ',' << s << ',' << format_double(rel) << ',' << format_double(sum_err) << '\n';
      }
    }
    checks.push_back({"gradient_identity", worst < 1e-5 && worst_sum < 1e-7,
                      "max rel error " + format_double(worst) + ", max |alpha+beta-1| " + format_double(worst_sum)});
  }

  // Four-term expansion of the squared input-gradient norm.
  {
    std::ofstream os(dir / "decomposition.csv");
    os << "trial,classes,residual,direct\n";
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      ArchitectureSpec a;
      a.seed = mix_seed(seed, 100 + static_cast<std::uint64_t>(trial));
      a.input_shape = {4, 1, 1};
      a.classes = 2 + static_cast<std::size_t>(trial % 4);
      a.hidden = {12, 12};
      a.activation = trial % 2 ? "tanh" : "silu";
      Network net = build_network(a);
      net.set_norm_mode(NormMode::FrozenStats);
      const Tensor x = random_batch({5, 4, 1, 1});
      const auto terms = gradient_decomposition(net, x, random_labels(5, a.classes));
      double res = 0.0, direct = 0.0;
      for (const auto& t : terms) {
        res = std::max(res, t.residual());
        direct = std::max(direct, t.direct);
      }
      worst = std::max(worst, res);
      os << trial << ',' << a.classes << ',' << format_double(res) << ',' << format_double(direct) << '\n';
    }
    checks.push_back({"gradient_decomposition", worst < 1e-6, "max residual " + format_double(worst)});
  }

  // First-order expansion of the inner maximum.
  {
    ArchitectureSpec a;
    a.seed = mix_seed(seed, 300);
    a.input_shape = {2, 1, 1};
    a.classes = 2;
    a.hidden = {16, 16};
    a.batch_norm = false;
    const Network net = build_network(a);
    const Tensor x = random_batch({8, 2, 1, 1});
    const Labels y = random_labels(8, 2);
    const auto rows = verify_first_order_expansion(net, x, y, {0.04, 0.02, 0.01}, {100, 10, seed});
    std::ofstream os(dir / "first_order.csv");
    os << "eps,ce,grad_norm,linear,inner_max,rel_error,gap\n";
    for (const auto& r : rows) {
      os << format_double(r.eps) << ',' << format_double(r.ce) << ',' << format_double(r.grad_norm) << ','
         << format_double(r.linear) << ',' << format_double(r.inner_max) << ',' << format_double(r.rel_error) << ','
         << format_double(r.gap) << '\n';
    }
    const bool decreasing = rows[0].rel_error > rows[1].rel_error && rows[1].rel_error > rows[2].rel_error;
    checks.push_back({"first_order_expansion", decreasing,
                      "relative error " + format_double(rows[0].rel_error) + " > " + format_double(rows[1].rel_error) +
                          " > " + format_double(rows[2].rel_error)});
  }

  std::ofstream os(dir / "summary.csv");
  os << "check,passed,detail\n";
  for (const auto& c : checks) os << c.name << ',' << (c.passed ? "pass" : "fail") << ",\"" << c.detail << "\"\n";
  return checks;
}

}  // namespace dat
