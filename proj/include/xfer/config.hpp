#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xfer/errors.hpp"
#include "xfer/sweep.hpp"
#include "xfer/trainer.hpp"

namespace xfer {

// One structured-text document drives the whole pipeline. Unknown keys are
// rejected; absent keys fall back to the documented defaults below.
struct ExperimentConfig {
  std::string output_dir = "out";
  int image_size = 32;

  // tasks (class ratios follow the clinical datasets, scaled down 10x)
  long source_positive = 2655;
  long source_negative = 958;
  double source_strength = 0.8;
  std::uint64_t source_seed = 101;

  long target_positive = 231;
  long target_negative = 742;
  double target_strength = 0.8;
  std::uint64_t target_seed = 202;

  int pretext_classes = 8;
  long pretext_per_class = 200;
  std::uint64_t pretext_seed = 303;

  // split
  double train_ratio = 0.8;
  std::uint64_t split_seed = 404;

  // training
  int pretrain_epochs = 15;
  int finetune_epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  double flip_probability = 0.5;
  int output_size = 32;
  bool rebalance_enabled = true;
  int rebalance_r = 0;  // 0 derives r from each task's class imbalance

  // sweep
  std::vector<std::string> modes = {"direct", "generic", "source"};
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int jobs = 1;

  bool operator==(const ExperimentConfig&) const = default;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["output_dir"] = output_dir;
    j["image_size"] = image_size;
    j["tasks"]["source"] = {{"positive_count", source_positive},
                            {"negative_count", source_negative},
                            {"shared_feature_strength", source_strength},
                            {"seed", source_seed}};
    j["tasks"]["target"] = {{"positive_count", target_positive},
                            {"negative_count", target_negative},
                            {"shared_feature_strength", target_strength},
                            {"seed", target_seed}};
    j["tasks"]["pretext"] = {{"num_classes", pretext_classes},
                             {"items_per_class", pretext_per_class},
                             {"seed", pretext_seed}};
    j["split"] = {{"train_ratio", train_ratio}, {"seed", split_seed}};
    j["train"] = {{"pretrain_epochs", pretrain_epochs},
                  {"finetune_epochs", finetune_epochs},
                  {"batch_size", batch_size},
                  {"learning_rate", learning_rate},
                  {"momentum", momentum},
                  {"augment",
                   {{"brightness_lo", brightness_lo},
                    {"brightness_hi", brightness_hi},
                    {"flip_probability", flip_probability},
                    {"output_size", output_size}}},
                  {"rebalance", {{"enabled", rebalance_enabled}, {"r", rebalance_r}}}};
    j["sweep"] = {{"modes", modes}, {"fractions", fractions}, {"seeds", seeds}};
    j["jobs"] = jobs;
    return j;
  }

  std::string serialize() const { return to_json().dump(2) + "\n"; }

  static ExperimentConfig from_json(const nlohmann::json& root);

  static ExperimentConfig parse(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
  }

  static ExperimentConfig load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(text);
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& context,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("'" + context + "' must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known |= (item.key() == k);
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + context);
  }
}

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, const std::string& context, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value type for '" + std::string(key) + "' in " + context);
  }
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& root) {
  ExperimentConfig cfg;
  detail::check_keys(root, "config",
                     {"output_dir", "image_size", "tasks", "split", "train", "sweep", "jobs"});
  detail::get_if_present(root, "output_dir", "config", cfg.output_dir);
  detail::get_if_present(root, "image_size", "config", cfg.image_size);
  detail::get_if_present(root, "jobs", "config", cfg.jobs);

  if (root.contains("tasks")) {
    const auto& tasks = root.at("tasks");
    detail::check_keys(tasks, "tasks", {"source", "target", "pretext"});
    if (tasks.contains("source")) {
      const auto& t = tasks.at("source");
      detail::check_keys(t, "tasks.source",
                         {"positive_count", "negative_count", "shared_feature_strength", "seed"});
      detail::get_if_present(t, "positive_count", "tasks.source", cfg.source_positive);
      detail::get_if_present(t, "negative_count", "tasks.source", cfg.source_negative);
      detail::get_if_present(t, "shared_feature_strength", "tasks.source", cfg.source_strength);
      detail::get_if_present(t, "seed", "tasks.source", cfg.source_seed);
    }
    if (tasks.contains("target")) {
      const auto& t = tasks.at("target");
      detail::check_keys(t, "tasks.target",
                         {"positive_count", "negative_count", "shared_feature_strength", "seed"});
      detail::get_if_present(t, "positive_count", "tasks.target", cfg.target_positive);
      detail::get_if_present(t, "negative_count", "tasks.target", cfg.target_negative);
      detail::get_if_present(t, "shared_feature_strength", "tasks.target", cfg.target_strength);
      detail::get_if_present(t, "seed", "tasks.target", cfg.target_seed);
    }
    if (tasks.contains("pretext")) {
      const auto& t = tasks.at("pretext");
      detail::check_keys(t, "tasks.pretext", {"num_classes", "items_per_class", "seed"});
      detail::get_if_present(t, "num_classes", "tasks.pretext", cfg.pretext_classes);
      detail::get_if_present(t, "items_per_class", "tasks.pretext", cfg.pretext_per_class);
      detail::get_if_present(t, "seed", "tasks.pretext", cfg.pretext_seed);
    }
  }

  if (root.contains("split")) {
    const auto& s = root.at("split");
    detail::check_keys(s, "split", {"train_ratio", "seed"});
    detail::get_if_present(s, "train_ratio", "split", cfg.train_ratio);
    detail::get_if_present(s, "seed", "split", cfg.split_seed);
  }

  if (root.contains("train")) {
    const auto& t = root.at("train");
    detail::check_keys(t, "train",
                       {"pretrain_epochs", "finetune_epochs", "batch_size", "learning_rate",
                        "momentum", "augment", "rebalance"});
    detail::get_if_present(t, "pretrain_epochs", "train", cfg.pretrain_epochs);
    detail::get_if_present(t, "finetune_epochs", "train", cfg.finetune_epochs);
    detail::get_if_present(t, "batch_size", "train", cfg.batch_size);
    detail::get_if_present(t, "learning_rate", "train", cfg.learning_rate);
    detail::get_if_present(t, "momentum", "train", cfg.momentum);
    if (t.contains("augment")) {
      const auto& a = t.at("augment");
      detail::check_keys(a, "train.augment",
                         {"brightness_lo", "brightness_hi", "flip_probability", "output_size"});
      detail::get_if_present(a, "brightness_lo", "train.augment", cfg.brightness_lo);
      detail::get_if_present(a, "brightness_hi", "train.augment", cfg.brightness_hi);
      detail::get_if_present(a, "flip_probability", "train.augment", cfg.flip_probability);
      detail::get_if_present(a, "output_size", "train.augment", cfg.output_size);
    }
    if (t.contains("rebalance")) {
      const auto& r = t.at("rebalance");
      detail::check_keys(r, "train.rebalance", {"enabled", "r"});
      detail::get_if_present(r, "enabled", "train.rebalance", cfg.rebalance_enabled);
      detail::get_if_present(r, "r", "train.rebalance", cfg.rebalance_r);
    }
  }

  if (root.contains("sweep")) {
    const auto& s = root.at("sweep");
    detail::check_keys(s, "sweep", {"modes", "fractions", "seeds"});
    detail::get_if_present(s, "modes", "sweep", cfg.modes);
    detail::get_if_present(s, "fractions", "sweep", cfg.fractions);
    detail::get_if_present(s, "seeds", "sweep", cfg.seeds);
  }
  return cfg;
}

// --- resolution of the document into module configs ---

inline TaskSpec source_spec(const ExperimentConfig& cfg) {
  TaskSpec s;
  s.task_id = TaskId::SourceDR;
  s.image_size = cfg.image_size;
  s.num_classes = 2;
  s.positive_count = cfg.source_positive;
  s.negative_count = cfg.source_negative;
  s.shared_feature_strength = cfg.source_strength;
  s.seed = cfg.source_seed;
  return s;
}

inline TaskSpec target_spec(const ExperimentConfig& cfg) {
  TaskSpec s;
  s.task_id = TaskId::TargetROP;
  s.image_size = cfg.image_size;
  s.num_classes = 2;
  s.positive_count = cfg.target_positive;
  s.negative_count = cfg.target_negative;
  s.shared_feature_strength = cfg.target_strength;
  s.seed = cfg.target_seed;
  return s;
}

inline TaskSpec pretext_spec(const ExperimentConfig& cfg) {
  TaskSpec s;
  s.task_id = TaskId::GenericPretext;
  s.image_size = cfg.image_size;
  s.num_classes = cfg.pretext_classes;
  s.items_per_class = cfg.pretext_per_class;
  s.shared_feature_strength = 0.0;
  s.seed = cfg.pretext_seed;
  return s;
}

// r defaults to the dataset imbalance rounded to the nearest integer, and the
// loss always weights the minority class.
inline RebalanceConfig resolve_rebalance(const ExperimentConfig& cfg, long positives,
                                         long negatives) {
  RebalanceConfig r;
  r.enabled = cfg.rebalance_enabled;
  r.minority_label = positives <= negatives ? 1 : 0;
  const long minority = std::min(positives, negatives);
  const long majority = std::max(positives, negatives);
  if (cfg.rebalance_r > 0) {
    r.r = cfg.rebalance_r;
  } else if (minority > 0) {
    r.r = static_cast<int>(
        std::max<long>(1, std::llround(static_cast<double>(majority) / minority)));
  } else {
    r.r = 1;
  }
  return r;
}

inline AugmentConfig augment_config(const ExperimentConfig& cfg) {
  AugmentConfig a;
  a.brightness_lo = cfg.brightness_lo;
  a.brightness_hi = cfg.brightness_hi;
  a.flip_probability = cfg.flip_probability;
  a.output_size = cfg.output_size;
  return a;
}

inline TrainConfig pretrain_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.pretrain_epochs;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.learning_rate;
  t.momentum = cfg.momentum;
  t.rebalance = resolve_rebalance(cfg, cfg.source_positive, cfg.source_negative);
  t.augment = augment_config(cfg);
  return t;
}

inline TrainConfig finetune_config(const ExperimentConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.finetune_epochs;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.learning_rate;
  t.momentum = cfg.momentum;
  t.rebalance = resolve_rebalance(cfg, cfg.target_positive, cfg.target_negative);
  t.augment = augment_config(cfg);
  return t;
}

inline SweepConfig sweep_config(const ExperimentConfig& cfg) {
  SweepConfig s;
  s.modes.clear();
  for (const std::string& m : cfg.modes) {
    auto mode = parse_init_mode(m);
    if (!mode) throw ConfigError("unknown init mode '" + m + "' (use direct/generic/source)");
    s.modes.push_back(*mode);
  }
  s.fractions = cfg.fractions;
  s.seeds = cfg.seeds;
  s.source_task = source_spec(cfg);
  s.target_task = target_spec(cfg);
  s.pretext_task = pretext_spec(cfg);
  s.train_ratio = cfg.train_ratio;
  s.split_seed = cfg.split_seed;
  s.pretrain_base = pretrain_config(cfg);
  s.finetune_base = finetune_config(cfg);
  s.jobs = cfg.jobs;
  return s;
}

// Full validation of a parsed document; any violation becomes a ConfigError.
inline SweepConfig resolve_and_validate(const ExperimentConfig& cfg) {
  try {
    SweepConfig s = sweep_config(cfg);
    s.validate();
    return s;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
}

}  // namespace xfer
