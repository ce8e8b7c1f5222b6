#include <chrono>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dat/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kDivergence = 3;

std::set<std::string> parse_groups(const std::string& text) {
  std::set<std::string> out;
  std::stringstream ss(text);
  std::string g;
  while (std::getline(ss, g, ',')) {
    if (g == "all") {
      out.insert(dat::metric_groups().begin(), dat::metric_groups().end());
    } else if (!g.empty()) {
      out.insert(g);
    }
  }
  return out;
}

// Finds the config.snapshot of the run a checkpoint belongs to.
fs::path snapshot_for(const fs::path& checkpoint) {
  const fs::path run = fs::absolute(checkpoint).parent_path().parent_path();
  return run / "config.snapshot";
}

int train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out) {
  dat::ExperimentConfig cfg = dat::load_config(config_path);
  dat::apply_overrides(cfg, overrides);
  const fs::path run_dir = out.empty() ? dat::runs_root() / cfg.name : fs::path(out);
  const auto start = std::chrono::steady_clock::now();
  const dat::TrainSummary s = dat::run_training(cfg, run_dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "run directory: " << run_dir.string() << '\n';
  if (s.stage1) std::cout << "stage one: selected step " << s.stage1->step << '\n';
  if (s.stage2) {
    std::cout << "stage two: selected step " << s.stage2->step;
    for (const auto& [k, v] : s.stage2->metrics) std::cout << "  " << k << '=' << dat::format_double(v);
    std::cout << '\n';
  }
  std::cout << "elapsed: " << secs << " s\n";
  return kOk;
}

int eval(const std::string& checkpoint, const std::string& metrics, const std::string& config_path,
         const std::vector<std::string>& overrides, const std::string& out) {
  const fs::path cfg_path = config_path.empty() ? snapshot_for(checkpoint) : fs::path(config_path);
  dat::ExperimentConfig cfg = dat::load_config(cfg_path);
  dat::apply_overrides(cfg, overrides);
  const fs::path out_dir = out.empty() ? fs::absolute(checkpoint).parent_path().parent_path() : fs::path(out);
  const auto result = dat::run_evaluation(checkpoint, cfg, parse_groups(metrics), out_dir);
  for (const auto& r : result.reports) std::cout << r.metric << ' ' << dat::format_double(r.value) << '\n';
  std::cout << "appended " << result.reports.size() << " rows to " << (out_dir / "logs" / "eval.csv").string() << '\n';
  return kOk;
}

int ablate(const std::string& suite, const std::string& config_path, const std::vector<std::string>& overrides,
           const std::string& out) {
  dat::ExperimentConfig cfg = dat::load_config(config_path);
  dat::apply_overrides(cfg, overrides);
  const fs::path out_dir = out.empty() ? dat::runs_root() / ("ablate_" + cfg.name) : fs::path(out);
  const fs::path csv = dat::run_ablation(suite, cfg, out_dir);
  std::cout << "wrote " << csv.string() << '\n';
  return kOk;
}

int verify(const std::string& out, std::uint64_t seed) {
  const fs::path out_dir = out.empty() ? dat::runs_root() / "verify" : fs::path(out);
  bool ok = true;
  for (const auto& c : dat::run_verification(out_dir, seed)) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.passed;
  }
  std::cout << "tables in " << (out_dir / "analysis").string() << '\n';
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual adversarial training experiments"};
  app.require_subcommand(1);

  std::string config, checkpoint, metrics = "all", suite, out;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train", "Train the configured stages");
  train_cmd->add_option("config", config, "Experiment config file")->required();
  train_cmd->add_option("--set", overrides, "Override a key, e.g. --set stage2.steps=100");
  train_cmd->add_option("--out", out, "Run directory (default $DAT_RUNS_DIR/<run.name>)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--metrics", metrics, "Comma-separated groups: robust,fid,ood,calibration,counterfactual,sampling,energy,all");
  eval_cmd->add_option("--config", config, "Config (default: the run's config.snapshot)");
  eval_cmd->add_option("--set", overrides, "Override a key");
  eval_cmd->add_option("--out", out, "Output directory (default: the checkpoint's run directory)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation suite");
  ablate_cmd->add_option("suite", suite, "augmentation | ood_size | loss_weights | t_steps")
      ->required()
      ->check(CLI::IsMember(dat::ablation_suites()));
  ablate_cmd->add_option("--config", config, "Base config")->required();
  ablate_cmd->add_option("--set", overrides, "Override a key in the base config");
  ablate_cmd->add_option("--out", out, "Output directory");

  auto* verify_cmd = app.add_subcommand("verify", "Run the numerical verification suite");
  verify_cmd->add_option("--out", out, "Output directory");
  verify_cmd->add_option("--seed", seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) return train(config, overrides, out);
    if (*eval_cmd) return eval(checkpoint, metrics, config, overrides, out);
    if (*ablate_cmd) return ablate(suite, config, overrides, out);
    if (*verify_cmd) return verify(out, seed);
  } catch (const dat::TrainingDivergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const dat::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
