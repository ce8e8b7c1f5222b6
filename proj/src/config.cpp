#include "dat/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dat {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); }

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad(key, "expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    bad(key, "expected an integer, got '" + v + "'");
  }
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long n = to_long(key, v);
  if (n < 0) bad(key, "must be >= 0");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

std::string to_str(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') bad(key, "expected a double-quoted string, got '" + v + "'");
  return v.substr(1, v.size() - 2);
}

std::optional<double> to_opt_double(const std::string& key, const std::string& v) {
  if (v == "none") return std::nullopt;
  return to_double(key, v);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.empty()) bad(key, "expected a comma-separated list");
  return out;
}

std::string quote(const std::string& s) { return '"' + s + '"'; }
std::string num(double v) { return format_double(v); }
std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : "none"; }
std::string boolean(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) out += format_double(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

// Keys shared by both stage plans write into both.
template <typename F>
void both(ExperimentConfig& c, F f) {
  f(c.stage1);
  f(c.stage2);
}

std::vector<Entry> stage_entries(const std::string& s, StagePlan ExperimentConfig::*plan, std::string ExperimentConfig::*select) {
  using C = ExperimentConfig;
  return {
      {s + ".steps", [=](const C& c) { return std::to_string((c.*plan).steps); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).steps = to_long(k, v); }},
      {s + ".lr", [=](const C& c) { return num((c.*plan).optimizer.lr); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).optimizer.lr = to_double(k, v); }},
      {s + ".momentum", [=](const C& c) { return num((c.*plan).optimizer.momentum); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).optimizer.momentum = to_double(k, v); }},
      {s + ".nesterov", [=](const C& c) { return boolean((c.*plan).optimizer.nesterov); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).optimizer.nesterov = to_bool(k, v); }},
      {s + ".weight_decay", [=](const C& c) { return num((c.*plan).optimizer.weight_decay); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).optimizer.weight_decay = to_double(k, v); }},
      {s + ".schedule", [=](const C& c) { return quote((c.*plan).optimizer.schedule); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).optimizer.schedule = to_str(k, v); }},
      {s + ".ema_decay", [=](const C& c) { return num((c.*plan).ema_decay); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).ema_decay = to_double(k, v); }},
      {s + ".checkpoint_every", [=](const C& c) { return std::to_string((c.*plan).checkpoint_every); },
       [=](C& c, const std::string& k, const std::string& v) { (c.*plan).checkpoint_every = to_long(k, v); }},
      {s + ".select", [=](const C& c) { return quote(c.*select); },
       [=](C& c, const std::string& k, const std::string& v) { c.*select = to_str(k, v); }},
  };
}

const std::vector<Entry>& registry() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e = {
        {"run.name", [](const C& c) { return quote(c.name); }, [](C& c, S k, S v) { c.name = to_str(k, v); }},
        {"run.seed", [](const C& c) { return std::to_string(c.seed); },
         [](C& c, S k, S v) { c.seed = static_cast<std::uint64_t>(to_size(k, v)); }},
        {"run.stages", [](const C& c) { return quote(c.stages); }, [](C& c, S k, S v) { c.stages = to_str(k, v); }},
        {"run.stage1_checkpoint", [](const C& c) { return quote(c.stage1_checkpoint); },
         [](C& c, S k, S v) { c.stage1_checkpoint = to_str(k, v); }},

        {"data.id", [](const C& c) { return quote(c.id.name); }, [](C& c, S k, S v) { c.id.name = to_str(k, v); }},
        {"data.ood", [](const C& c) { return quote(c.ood.name); }, [](C& c, S k, S v) { c.ood.name = to_str(k, v); }},
        {"data.id_size", [](const C& c) { return std::to_string(c.id.size); },
         [](C& c, S k, S v) { c.id.size = to_size(k, v); }},
        {"data.ood_size", [](const C& c) { return std::to_string(c.ood.size); },
         [](C& c, S k, S v) { c.ood.size = to_size(k, v); }},
        {"data.test_size", [](const C& c) { return std::to_string(c.test_size); },
         [](C& c, S k, S v) { c.test_size = to_size(k, v); }},
        {"data.noise", [](const C& c) { return num(c.id.noise); }, [](C& c, S k, S v) { c.id.noise = to_double(k, v); }},
        {"data.strong_policy", [](const C& c) { return quote(c.stage2.strong_policy); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.strong_policy = to_str(k, v); }); }},
        {"data.mild_policy", [](const C& c) { return quote(c.stage2.mild_policy); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.mild_policy = to_str(k, v); }); }},
        {"data.batch", [](const C& c) { return std::to_string(c.stage2.batch.classification); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.batch.classification = to_size(k, v); }); }},
        {"data.gen_batch", [](const C& c) { return std::to_string(c.stage2.batch.data); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.batch.data = to_size(k, v); }); }},
        {"data.ood_batch", [](const C& c) { return std::to_string(c.stage2.batch.ood); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.batch.ood = to_size(k, v); }); }},

        {"model.kind", [](const C& c) { return quote(c.arch.kind); }, [](C& c, S k, S v) { c.arch.kind = to_str(k, v); }},
        {"model.hidden", [](const C& c) { return list(c.arch.hidden); },
         [](C& c, S k, S v) {
           c.arch.hidden.clear();
           for (double h : to_list(k, v)) {
             if (h < 1 || h != static_cast<double>(static_cast<std::size_t>(h))) bad(k, "widths must be positive integers");
             c.arch.hidden.push_back(static_cast<std::size_t>(h));
           }
         }},
        {"model.activation", [](const C& c) { return quote(c.arch.activation); },
         [](C& c, S k, S v) { c.arch.activation = to_str(k, v); }},
        {"model.batch_norm", [](const C& c) { return boolean(c.arch.batch_norm); },
         [](C& c, S k, S v) { c.arch.batch_norm = to_bool(k, v); }},

        {"attack.steps", [](const C& c) { return std::to_string(c.stage2.classification.steps); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.classification.steps = static_cast<int>(to_long(k, v)); }); }},
        {"attack.step_size", [](const C& c) { return num(c.stage2.classification.step_size); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.classification.step_size = to_double(k, v); }); }},
        {"attack.eps", [](const C& c) { return opt(c.stage2.classification.eps); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.classification.eps = to_opt_double(k, v); }); }},
        {"attack.objective", [](const C& c) { return quote(to_string(c.stage2.classification.objective)); },
         [](C& c, S k, S v) {
           const auto o = attack_objective_from_string(to_str(k, v));
           both(c, [&](StagePlan& p) { p.classification.objective = o; });
         }},
        {"attack.step_rule", [](const C& c) { return quote(to_string(c.stage2.classification.step_rule)); },
         [](C& c, S k, S v) {
           const auto r = step_rule_from_string(to_str(k, v));
           both(c, [&](StagePlan& p) { p.classification.step_rule = r; });
         }},
        {"attack.clamp01", [](const C& c) { return boolean(c.stage2.classification.clamp01); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.classification.clamp01 = to_bool(k, v); }); }},
        {"attack.init_noise", [](const C& c) { return num(c.stage2.classification.init_noise); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.classification.init_noise = to_double(k, v); }); }},
        {"attack.keep_best", [](const C& c) { return boolean(c.stage2.classification.keep_best); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.classification.keep_best = to_bool(k, v); }); }},

        {"gen.steps", [](const C& c) { return std::to_string(c.stage2.generative.steps); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.generative.steps = static_cast<int>(to_long(k, v)); }); }},
        {"gen.step_size", [](const C& c) { return num(c.stage2.generative.step_size); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.generative.step_size = to_double(k, v); }); }},
        {"gen.eps", [](const C& c) { return opt(c.stage2.generative.eps); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.generative.eps = to_opt_double(k, v); }); }},
        {"gen.step_rule", [](const C& c) { return quote(to_string(c.stage2.generative.step_rule)); },
         [](C& c, S k, S v) {
           const auto r = step_rule_from_string(to_str(k, v));
           both(c, [&](StagePlan& p) { p.generative.step_rule = r; });
         }},
        {"gen.clamp01", [](const C& c) { return boolean(c.stage2.generative.clamp01); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.generative.clamp01 = to_bool(k, v); }); }},
        {"gen.random_t", [](const C& c) { return boolean(c.stage2.random_t); },
         [](C& c, S k, S v) { both(c, [&](StagePlan& p) { p.random_t = to_bool(k, v); }); }},
        {"gen.sampling", [](const C& c) { return quote(to_string(c.stage2.sampling)); },
         [](C& c, S k, S v) {
           const auto m = sampling_mode_from_string(to_str(k, v));
           both(c, [&](StagePlan& p) { p.sampling = m; });
         }},
        {"gen.gradient", [](const C& c) { return quote(to_string(c.stage2.gradient)); },
         [](C& c, S k, S v) {
           const auto g = generative_gradient_from_string(to_str(k, v));
           both(c, [&](StagePlan& p) { p.gradient = g; });
         }},

        {"loss.w_atce", [](const C& c) { return num(c.stage2.weights.atce); },
         [](C& c, S k, S v) { c.stage2.weights.atce = to_double(k, v); }},
        {"loss.w_bce", [](const C& c) { return num(c.stage2.weights.bce); },
         [](C& c, S k, S v) { c.stage2.weights.bce = to_double(k, v); }},
    };
    for (auto& x : stage_entries("stage1", &C::stage1, &C::select1)) e.push_back(std::move(x));
    for (auto& x : stage_entries("stage2", &C::stage2, &C::select2)) e.push_back(std::move(x));
    const std::vector<Entry> eval = {
        {"eval.n_gen", [](const C& c) { return std::to_string(c.eval.n_gen); },
         [](C& c, S k, S v) { c.eval.n_gen = to_size(k, v); }},
        {"eval.gen_steps", [](const C& c) { return std::to_string(c.eval.gen_steps); },
         [](C& c, S k, S v) { c.eval.gen_steps = static_cast<int>(to_long(k, v)); }},
        {"eval.gen_step_size", [](const C& c) { return num(c.eval.gen_step_size); },
         [](C& c, S k, S v) { c.eval.gen_step_size = to_double(k, v); }},
        {"eval.attack_steps", [](const C& c) { return std::to_string(c.eval.attack.steps); },
         [](C& c, S k, S v) { c.eval.attack.steps = static_cast<int>(to_long(k, v)); }},
        {"eval.attack_step_size", [](const C& c) { return num(c.eval.attack.step_size); },
         [](C& c, S k, S v) { c.eval.attack.step_size = to_double(k, v); }},
        {"eval.attack_eps", [](const C& c) { return opt(c.eval.attack.eps); },
         [](C& c, S k, S v) { c.eval.attack.eps = to_opt_double(k, v); }},
        {"eval.ood_eps", [](const C& c) { return num(c.eval.ood_eps); },
         [](C& c, S k, S v) { c.eval.ood_eps = to_double(k, v); }},
        {"eval.ood_steps", [](const C& c) { return std::to_string(c.eval.ood_steps); },
         [](C& c, S k, S v) { c.eval.ood_steps = static_cast<int>(to_long(k, v)); }},
        {"eval.ood_step_size", [](const C& c) { return num(c.eval.ood_step_size); },
         [](C& c, S k, S v) { c.eval.ood_step_size = to_double(k, v); }},
        {"eval.ood_n", [](const C& c) { return std::to_string(c.eval.ood_n); },
         [](C& c, S k, S v) { c.eval.ood_n = to_size(k, v); }},
        {"eval.ece_bins", [](const C& c) { return std::to_string(c.eval.ece_bins); },
         [](C& c, S k, S v) { c.eval.ece_bins = static_cast<int>(to_long(k, v)); }},
        {"eval.weights", [](const C& c) { return quote(c.eval.weights); },
         [](C& c, S k, S v) { c.eval.weights = to_str(k, v); }},
        {"eval.embedder", [](const C& c) { return quote(c.eval.embedder); },
         [](C& c, S k, S v) { c.eval.embedder = to_str(k, v); }},
        {"eval.probe_steps", [](const C& c) { return std::to_string(c.eval.probe_steps); },
         [](C& c, S k, S v) { c.eval.probe_steps = to_long(k, v); }},
        {"eval.cf_eps", [](const C& c) { return list(c.eval.cf_eps); },
         [](C& c, S k, S v) { c.eval.cf_eps = to_list(k, v); }},
        {"eval.cf_target", [](const C& c) { return std::to_string(c.eval.cf_target); },
         [](C& c, S k, S v) { c.eval.cf_target = static_cast<int>(to_long(k, v)); }},
        {"eval.cf_n", [](const C& c) { return std::to_string(c.eval.cf_n); },
         [](C& c, S k, S v) { c.eval.cf_n = to_size(k, v); }},
    };
    for (const auto& x : eval) e.push_back(x);
    return e;
  }();
  return entries;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return &e;
  return nullptr;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError(key + ": unknown key");
  e->set(cfg, key, value);
}

void derive_seeds(ExperimentConfig& c) {
  c.id.seed = c.seed;
  c.ood.seed = c.seed;
  c.arch.seed = c.seed;
  c.stage1.seed = mix_seed(c.seed, 1);
  c.stage2.seed = mix_seed(c.seed, 2);
  c.stage1.stage = Stage::One;
  c.stage1.norm_mode = NormMode::BatchStats;
  c.stage1.weights = {1.0, 0.0};
  c.stage2.stage = Stage::Two;
  c.stage2.norm_mode = NormMode::FrozenStats;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& key, const std::string& msg) {
    if (!ok) throw ConfigError(key + ": " + msg);
  };
  check(stages == "both" || stages == "one" || stages == "two", "run.stages", "must be both, one or two");
  check(stages != "two" || !stage1_checkpoint.empty(), "run.stage1_checkpoint", "required when run.stages = two");
  check(!id.name.empty(), "data.id", "must name a dataset");
  check(!ood.name.empty(), "data.ood", "must name a dataset");
  check(arch.kind == "mlp" || arch.kind == "convnet" || arch.kind == "linear", "model.kind",
        "must be mlp, convnet or linear");
  check(arch.activation == "silu" || arch.activation == "relu" || arch.activation == "tanh", "model.activation",
        "must be silu, relu or tanh");
  check(stage2.classification.eps.has_value(), "attack.eps", "classification attacks need a bound");
  check(stage2.classification.objective == AttackObjective::CrossEntropy, "attack.objective", "must be cross_entropy");
  check(select1 == "best_robust" || select1 == "last", "stage1.select", "must be best_robust or last");
  check(select2 == "best_fid" || select2 == "best_robust" || select2 == "last", "stage2.select",
        "must be best_fid, best_robust or last");
  check(eval.weights == "ema" || eval.weights == "raw", "eval.weights", "must be ema or raw");
  check(eval.embedder == "identity_flatten" || eval.embedder == "trained_probe", "eval.embedder",
        "must be identity_flatten or trained_probe");
  check(eval.n_gen >= 2, "eval.n_gen", "must be >= 2");
  check(eval.attack.eps.has_value(), "eval.attack_eps", "robust accuracy needs a bound");
  check(eval.ece_bins >= 1, "eval.ece_bins", "must be >= 1");
  check(eval.gen_step_size > 0, "eval.gen_step_size", "must be > 0");
  check(eval.gen_steps >= 0, "eval.gen_steps", "must be >= 0");
  try {
    stage1.validate();
    stage2.validate();
    eval.attack.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside quotes
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(key + ": duplicate key");
    set_key(cfg, key, trim(line.substr(eq + 1)));
  }
  derive_seeds(cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set_key(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  derive_seeds(cfg);
  cfg.validate();
}

std::string to_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& e : registry()) {
    const auto dot = e.key.find('.');
    const std::string s = e.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) os << '\n';
      os << '[' << s << "]\n";
      section = s;
    }
    os << e.key.substr(dot + 1) << " = " << e.get(cfg) << '\n';
  }
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.key);
  return out;
}

}  // namespace dat
