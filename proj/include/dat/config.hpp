#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dat/data.hpp"
#include "dat/model.hpp"
#include "dat/trainer.hpp"

namespace dat {

// Unknown key, malformed value or violated constraint in an experiment config.
class ConfigError : public DomainError {
 public:
  using DomainError::DomainError;
};

struct EvalConfig {
  std::size_t n_gen = 500;  // generated samples for FID / IS
  int gen_steps = 20;
  double gen_step_size = 0.05;
  AttackSpec attack = default_classification_attack();  // robust accuracy
  double ood_eps = 1.0;
  int ood_steps = 10;
  double ood_step_size = 0.2;
  std::size_t ood_n = 1024;
  int ece_bins = 10;
  std::string weights = "ema";  // ema | raw
  std::string embedder = "identity_flatten";  // identity_flatten | trained_probe
  long probe_steps = 300;
  std::vector<double> cf_eps{0.0, 0.25, 0.5, 1.0};
  int cf_target = 1;
  std::size_t cf_n = 200;
};

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string stages = "both";  // both | one | two
  std::string stage1_checkpoint;  // stage two starts here when set

  DatasetSpec id{"two_moons_id"};
  DatasetSpec ood{"ring_ood"};
  std::size_t test_size = 0;

  ArchitectureSpec arch;
  StagePlan stage1 = default_stage1_plan();
  StagePlan stage2 = default_stage2_plan();
  std::string select1 = "best_robust";
  std::string select2 = "best_fid";
  EvalConfig eval;

  // Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
};

// Flat "[section]" / "key = value" text. Values are numbers, true/false,
// double-quoted strings, comma-separated number lists, or none.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies "section.key=value" overrides in order.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

// Full text form with every key; parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& cfg);

// Documented keys in file order.
std::vector<std::string> config_keys();

}  // namespace dat
