#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xfer/checkpoint.hpp"
#include "xfer/config.hpp"
#include "xfer/csvio.hpp"
#include "xfer/svgplot.hpp"
#include "xfer/sweep.hpp"
#include "xfer/synth.hpp"

namespace xfer {

namespace fs = std::filesystem;

// Run-directory layout. A completed sweep directory contains the config
// snapshot, dataset manifests, source checkpoints, one record + checkpoint
// per run, results.csv, tables.csv, plots/ and the log.
struct RunPaths {
  fs::path root;

  fs::path config_snapshot() const { return root / "config.json"; }
  fs::path log_file() const { return root / "log.txt"; }
  fs::path datasets_dir() const { return root / "datasets"; }
  fs::path datasets_manifest() const { return root / "datasets" / "manifest.json"; }
  fs::path checkpoints_dir() const { return root / "checkpoints"; }
  fs::path runs_dir() const { return root / "runs"; }
  fs::path results_csv() const { return root / "results.csv"; }
  fs::path sweep_manifest() const { return root / "sweep_manifest.json"; }
  fs::path tables_csv() const { return root / "tables.csv"; }
  fs::path plots_dir() const { return root / "plots"; }

  fs::path source_checkpoint(InitMode mode, std::uint64_t seed) const {
    return checkpoints_dir() /
           (std::string(to_string(mode)) + "_s" + std::to_string(seed) + ".ckpt");
  }
};

class Logger {
 public:
  explicit Logger(const fs::path& path, bool echo = true) : echo_(echo) {
    fs::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
  }

  void line(const std::string& msg) {
    std::lock_guard<std::mutex> lock(mu_);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%d %H:%M:%S", std::localtime(&t));
    if (out_) out_ << stamp << " " << msg << "\n" << std::flush;
    if (echo_) std::fprintf(stdout, "%s\n", msg.c_str());
  }

 private:
  std::ofstream out_;
  std::mutex mu_;
  bool echo_;
};

inline void write_text_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

namespace detail {

// Image tensor record in the checkpoint float format: u32 name length + name,
// u32 rank, rank u32 dims, float32 little-endian values.
inline std::vector<std::uint8_t> image_record_bytes(const std::string& name,
                                                    const Tensor<float>& pixels) {
  std::vector<std::uint8_t> out;
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  put_bytes(out, name.data(), name.size());
  put_u32(out, static_cast<std::uint32_t>(pixels.shape.size()));
  for (int d : pixels.shape) put_u32(out, static_cast<std::uint32_t>(d));
  put_bytes(out, pixels.data.data(), pixels.data.size() * sizeof(float));
  return out;
}

inline std::string image_file_name(long source_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%06ld.bin", source_index);
  return buf;
}

inline nlohmann::json task_spec_json(const TaskSpec& s) {
  nlohmann::json j;
  j["task_id"] = to_string(s.task_id);
  j["image_size"] = s.image_size;
  j["num_classes"] = s.num_classes;
  j["positive_count"] = s.positive_count;
  j["negative_count"] = s.negative_count;
  j["items_per_class"] = s.items_per_class;
  j["shared_feature_strength"] = s.shared_feature_strength;
  j["seed"] = s.seed;
  return j;
}

inline nlohmann::json train_config_json(const TrainConfig& t) {
  nlohmann::json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["momentum"] = t.momentum;
  j["seed"] = t.seed;
  j["rebalance"] = {{"r", t.rebalance.r},
                    {"enabled", t.rebalance.enabled},
                    {"minority_label", t.rebalance.minority_label}};
  j["augment"] = {{"brightness_lo", t.augment.brightness_lo},
                  {"brightness_hi", t.augment.brightness_hi},
                  {"flip_probability", t.augment.flip_probability},
                  {"output_size", t.augment.output_size}};
  return j;
}

inline nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json j;
  j["auroc"] = m.auroc ? nlohmann::json(*m.auroc) : nlohmann::json(nullptr);
  j["accuracy"] = m.accuracy ? nlohmann::json(*m.accuracy) : nlohmann::json(nullptr);
  j["precision"] = m.precision ? nlohmann::json(*m.precision) : nlohmann::json(nullptr);
  j["sensitivity"] = m.sensitivity ? nlohmann::json(*m.sensitivity) : nlohmann::json(nullptr);
  j["n_test"] = m.n_test;
  j["undefined_metrics"] = m.undefined_count();
  return j;
}

}  // namespace detail

// Materializes the three datasets on disk: one directory per class with
// binary tensor files, one manifest per task, one top-level manifest with
// content hashes.
inline void cmd_gen_data(const ExperimentConfig& cfg, Logger& log) {
  resolve_and_validate(cfg);
  RunPaths paths{cfg.output_dir};
  nlohmann::json top;
  for (const TaskSpec& spec : {source_spec(cfg), target_spec(cfg), pretext_spec(cfg)}) {
    const std::string task_name = to_string(spec.task_id);
    log.line("generating dataset " + task_name);
    Dataset ds = generate_dataset(spec);
    const fs::path task_dir = paths.datasets_dir() / task_name;
    nlohmann::json manifest;
    manifest["task"] = task_name;
    manifest["spec"] = detail::task_spec_json(spec);
    manifest["content_hash"] = dataset_hash_hex(ds);
    auto& items = manifest["items"] = nlohmann::json::array();
    for (const auto& img : ds.items) {
      const std::string file = detail::image_file_name(img.source_index);
      const fs::path class_dir = task_dir / ("class_" + std::to_string(img.label));
      fs::create_directories(class_dir);
      const std::string name = file.substr(0, file.size() - 4);
      auto bytes = detail::image_record_bytes(name, img.pixels);
      std::ofstream out(class_dir / file, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
      if (!out) throw IoError("failed writing " + (class_dir / file).string());
      items.push_back({{"source_index", img.source_index},
                       {"label", img.label},
                       {"filename", "class_" + std::to_string(img.label) + "/" + file}});
    }
    write_text_file(task_dir / "manifest.json", manifest.dump(2) + "\n");
    top[task_name] = {{"content_hash", dataset_hash_hex(ds)}, {"items", ds.items.size()}};
    log.line("dataset " + task_name + " written: " + std::to_string(ds.items.size()) +
             " items, hash " + dataset_hash_hex(ds));
  }
  write_text_file(paths.datasets_manifest(), top.dump(2) + "\n");
}

// Trains source checkpoints for the requested pretrained modes and seeds.
inline void cmd_pretrain(const ExperimentConfig& cfg, const std::vector<InitMode>& which,
                         Logger& log) {
  SweepConfig sc = resolve_and_validate(cfg);
  RunPaths paths{cfg.output_dir};
  fs::create_directories(paths.checkpoints_dir());
  const Architecture binary_arch = reference_architecture(cfg.output_size, 1);
  const Architecture pretext_arch = reference_architecture(cfg.output_size, cfg.pretext_classes);
  for (InitMode mode : which) {
    if (mode == InitMode::Direct) continue;
    for (std::uint64_t seed : sc.seeds) {
      TrainConfig tc = sc.pretrain_base;
      tc.seed = seed;
      const bool generic = mode == InitMode::GenericPretrained;
      log.line(std::string("pretraining mode=") + to_string(mode) +
               " seed=" + std::to_string(seed));
      Checkpoint ckpt = pretrain_source(generic ? sc.pretext_task : sc.source_task,
                                        generic ? pretext_arch : binary_arch, tc);
      const fs::path file = paths.source_checkpoint(mode, seed);
      save_checkpoint(ckpt, file.string());
      log.line("wrote " + file.string() + " hash=" + checkpoint_hash_hex(ckpt));
    }
  }
}

// Runs the full grid, appending one results.csv row per cell as it completes
// and persisting a RunRecord JSON plus final checkpoint per run. Existing
// source checkpoints on disk are reused; missing ones are trained on demand
// and saved.
inline SweepResult cmd_sweep(const ExperimentConfig& cfg, Logger& log) {
  SweepConfig sc = resolve_and_validate(cfg);
  RunPaths paths{cfg.output_dir};
  fs::create_directories(paths.root);
  fs::create_directories(paths.checkpoints_dir());
  fs::create_directories(paths.runs_dir());
  write_text_file(paths.config_snapshot(), cfg.serialize());

  std::ofstream csv(paths.results_csv(), std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot open " + paths.results_csv().string());
  csv << kResultsHeader << "\n" << std::flush;

  std::string test_hash_for_rows;
  nlohmann::json ckpt_hashes = nlohmann::json::object();

  SweepHooks hooks;
  hooks.log = [&log](const std::string& s) { log.line(s); };
  hooks.source_provider = [&](InitMode mode, std::uint64_t seed) -> std::optional<Checkpoint> {
    const fs::path file = paths.source_checkpoint(mode, seed);
    if (!fs::exists(file)) return std::nullopt;
    log.line("reusing source checkpoint " + file.string());
    return load_checkpoint(file.string());
  };
  hooks.on_source_checkpoint = [&](InitMode mode, std::uint64_t seed, const Checkpoint& ckpt) {
    const fs::path file = paths.source_checkpoint(mode, seed);
    save_checkpoint(ckpt, file.string());
    ckpt_hashes[std::string(to_string(mode)) + "_s" + std::to_string(seed)] =
        checkpoint_hash_hex(ckpt);
  };
  hooks.on_cell = [&](const SweepCell& cell, const RunRecord& rec) {
    // run record + final checkpoint
    nlohmann::json j;
    j["run_id"] = cell.run_id;
    j["init_mode"] = to_string(cell.mode);
    j["reduction_fraction"] = cell.fraction;
    j["seed"] = cell.seed;
    j["train_size"] = cell.train_size;
    j["head_replaced"] = rec.head_replaced;
    j["loss_series"] = rec.loss_series;
    j["wall_seconds"] = rec.wall_seconds;  // informational; not reproducible
    j["metrics"] = detail::metrics_json(cell.metrics);
    j["source_ckpt_hash"] = cell.source_ckpt_hash;
    j["config"] = detail::train_config_json(rec.config);
    j["checkpoint"] = cell.run_id + ".ckpt";
    write_text_file(paths.runs_dir() / (cell.run_id + ".json"), j.dump(2) + "\n");
    save_checkpoint(rec.final_checkpoint, (paths.runs_dir() / (cell.run_id + ".ckpt")).string());
    csv << results_row(cell, test_hash_for_rows) << "\n" << std::flush;
  };

  // The test-set hash is needed by the row writer before the first cell
  // completes; compute it the same way run_sweep will.
  {
    Dataset target_full = generate_dataset(sc.target_task);
    auto [train, test] = split(target_full, sc.train_ratio, sc.split_seed);
    test_hash_for_rows = dataset_hash_hex(test);
  }

  SweepResult result = run_sweep(sc, hooks);

  nlohmann::json manifest;
  manifest["test_set_hash"] = result.test_set_hash;
  manifest["grid_size"] = result.cells.size();
  manifest["dataset_hashes"] = {
      {"source", dataset_hash_hex(generate_dataset(sc.source_task))},
      {"target", dataset_hash_hex(generate_dataset(sc.target_task))},
      {"pretext", dataset_hash_hex(generate_dataset(sc.pretext_task))}};
  for (const auto& cell : result.cells) {
    if (cell.source_ckpt_hash != "-") {
      ckpt_hashes[std::string(to_string(cell.mode)) + "_s" + std::to_string(cell.seed)] =
          cell.source_ckpt_hash;
    }
  }
  manifest["source_checkpoint_hashes"] = ckpt_hashes;
  manifest["config"] = cfg.to_json();
  write_text_file(paths.sweep_manifest(), manifest.dump(2) + "\n");
  log.line("sweep complete: " + std::to_string(result.cells.size()) + " cells");
  return result;
}

// Builds tables.csv and the four learning-curve SVGs from results.csv (the
// CSV, not in-memory state, is the reporting source of truth). Refuses to
// report an incomplete grid.
inline void cmd_report(const ExperimentConfig& cfg, Logger& log) {
  RunPaths paths{cfg.output_dir};
  if (!fs::exists(paths.results_csv())) {
    throw IoError("no results.csv under " + paths.root.string() + "; run the sweep first");
  }
  // Prefer the config snapshot the sweep recorded: it defines the grid that
  // results.csv is expected to cover.
  ExperimentConfig effective = cfg;
  if (fs::exists(paths.config_snapshot())) {
    effective = ExperimentConfig::parse(read_text_file(paths.config_snapshot()));
  }
  SweepConfig sc = resolve_and_validate(effective);

  SweepResult result = parse_results_csv(read_text_file(paths.results_csv()));
  auto missing = missing_cells(result, sc.modes, sc.fractions, sc.seeds);
  if (!missing.empty()) {
    std::string coords;
    for (std::size_t i = 0; i < missing.size() && i < 12; ++i) {
      coords += (i ? ", " : "") + missing[i];
    }
    if (missing.size() > 12) coords += ", ...";
    throw StateError("results.csv is missing " + std::to_string(missing.size()) +
                     " grid cells: " + coords);
  }
  result.modes = sc.modes;
  result.fractions = sc.fractions;
  result.seeds = sc.seeds;

  AggregateTables tables = build_tables(result);
  write_text_file(paths.tables_csv(), tables_csv(tables));
  log.line("wrote " + paths.tables_csv().string());

  auto curves = learning_curves(result);
  fs::create_directories(paths.plots_dir());
  for (Metric m : kAllMetrics) {
    std::vector<std::pair<InitMode, std::vector<CurvePoint>>> series;
    for (InitMode mode : sc.modes) {
      series.emplace_back(mode, curves[mode][static_cast<std::size_t>(m)]);
    }
    const fs::path file = paths.plots_dir() / (std::string(to_string(m)) + ".svg");
    write_text_file(file, learning_curve_svg(to_string(m), series));
    log.line("wrote " + file.string());
  }
}

// Full pipeline: datasets, pretraining, sweep, report.
inline void cmd_all(const ExperimentConfig& cfg, Logger& log) {
  cmd_gen_data(cfg, log);
  SweepConfig sc = resolve_and_validate(cfg);
  cmd_pretrain(cfg, sc.modes, log);
  cmd_sweep(cfg, log);
  cmd_report(cfg, log);
}

}  // namespace xfer
