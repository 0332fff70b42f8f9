#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "xfer/dataset.hpp"
#include "xfer/metrics.hpp"
#include "xfer/numfmt.hpp"
#include "xfer/synth.hpp"
#include "xfer/trainer.hpp"

namespace xfer {

enum class Metric { Auroc = 0, Accuracy = 1, Precision = 2, Sensitivity = 3 };
inline constexpr int kMetricCount = 4;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::Auroc, Metric::Accuracy, Metric::Precision, Metric::Sensitivity};

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::Auroc: return "auroc";
    case Metric::Accuracy: return "accuracy";
    case Metric::Precision: return "precision";
    case Metric::Sensitivity: return "sensitivity";
  }
  return "?";
}

inline std::optional<double> metric_value(const MetricsReport& r, Metric m) {
  switch (m) {
    case Metric::Auroc: return r.auroc;
    case Metric::Accuracy: return r.accuracy;
    case Metric::Precision: return r.precision;
    case Metric::Sensitivity: return r.sensitivity;
  }
  return std::nullopt;
}

struct SweepConfig {
  std::vector<InitMode> modes = {InitMode::Direct, InitMode::GenericPretrained,
                                 InitMode::SourcePretrained};
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  TaskSpec source_task;
  TaskSpec target_task;
  TaskSpec pretext_task;
  double train_ratio = 0.8;
  std::uint64_t split_seed = 404;
  TrainConfig pretrain_base;  // seed field is replaced per sweep seed
  TrainConfig finetune_base;
  int jobs = 1;

  void validate() const {
    if (modes.empty()) throw std::invalid_argument("sweep requires at least one init mode");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      for (std::size_t j = i + 1; j < modes.size(); ++j) {
        if (modes[i] == modes[j]) throw std::invalid_argument("duplicate init mode in sweep");
      }
    }
    if (fractions.empty()) throw std::invalid_argument("sweep requires at least one fraction");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
      if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) {
        throw std::invalid_argument("reduction fractions must lie in [0,1)");
      }
      if (i > 0 && !(fractions[i] > fractions[i - 1])) {
        throw std::invalid_argument("fractions must be strictly ascending");
      }
    }
    if (seeds.empty()) throw std::invalid_argument("sweep requires at least one seed");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      for (std::size_t j = i + 1; j < seeds.size(); ++j) {
        if (seeds[i] == seeds[j]) throw std::invalid_argument("sweep seeds must be distinct");
      }
    }
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
      throw std::invalid_argument("train_ratio must lie strictly between 0 and 1");
    }
    if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    source_task.validate();
    target_task.validate();
    pretext_task.validate();
    pretrain_base.validate();
    finetune_base.validate();
  }
};

struct SweepCell {
  InitMode mode = InitMode::Direct;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string run_id;
  MetricsReport metrics;
  long train_size = 0;
  int epochs = 0;
  double wall_seconds = 0.0;
  std::string source_ckpt_hash = "-";
};

struct SweepResult {
  std::vector<InitMode> modes;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  std::vector<SweepCell> cells;  // canonical order: mode-major, fraction, seed
  std::string test_set_hash;

  const SweepCell* find(InitMode mode, double fraction, std::uint64_t seed) const {
    for (const auto& c : cells) {
      if (c.mode == mode && c.fraction == fraction && c.seed == seed) return &c;
    }
    return nullptr;
  }
};

inline std::string make_run_id(InitMode mode, double fraction, std::uint64_t seed) {
  return std::string(to_string(mode)) + "_f" + format_double(fraction) + "_s" +
         std::to_string(seed);
}

// Observer hooks; all fire on the coordinating thread in canonical order, so
// a file-writing observer sees a deterministic append sequence regardless of
// the number of worker threads.
struct SweepHooks {
  std::function<std::optional<Checkpoint>(InitMode, std::uint64_t)> source_provider;
  std::function<void(InitMode, std::uint64_t, const Checkpoint&)> on_source_checkpoint;
  std::function<void(const SweepCell&, const RunRecord&)> on_cell;
  std::function<void(const std::string&)> log;
};

namespace detail {

// Runs work(i) for every index, jobs at a time, and feeds results to
// consume(i) strictly in index order. Exceptions surface in index order too.
template <typename Result>
void ordered_parallel_for(std::size_t count, int jobs,
                          const std::function<Result(std::size_t)>& work,
                          const std::function<void(std::size_t, Result&&)>& consume) {
  if (count == 0) return;
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) consume(i, work(i));
    return;
  }
  std::vector<std::optional<Result>> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::vector<char> done(count, 0);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      std::optional<Result> r;
      std::exception_ptr err;
      try {
        r = work(i);
      } catch (...) {
        err = std::current_exception();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        results[i] = std::move(r);
        errors[i] = err;
        done[i] = 1;
      }
      cv.notify_all();
    }
  };

  std::vector<std::thread> threads;
  const int n_threads = static_cast<int>(std::min<std::size_t>(count, static_cast<std::size_t>(jobs)));
  threads.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);

  std::exception_ptr first_error;
  for (std::size_t i = 0; i < count; ++i) {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return done[i] != 0; });
    if (errors[i]) {
      first_error = errors[i];
      break;
    }
    Result r = std::move(*results[i]);
    results[i].reset();
    lock.unlock();
    consume(i, std::move(r));
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

// Runs the full (mode x fraction x seed) grid. One source checkpoint is
// trained per (pretrained mode, seed) and reused byte-identically across all
// fractions; the target test set is split once and shared by every cell.
inline SweepResult run_sweep(const SweepConfig& config, const SweepHooks& hooks = {}) {
  config.validate();
  auto log = [&](const std::string& s) {
    if (hooks.log) hooks.log(s);
  };

  const Architecture binary_arch =
      reference_architecture(config.finetune_base.augment.output_size, 1);
  const Architecture pretext_arch = reference_architecture(
      config.finetune_base.augment.output_size, config.pretext_task.num_classes);

  log("generating target dataset (" + std::to_string(config.target_task.positive_count) + " pos, " +
      std::to_string(config.target_task.negative_count) + " neg)");
  const Dataset target_full = generate_dataset(config.target_task);
  auto [target_train, target_test] = split(target_full, config.train_ratio, config.split_seed);
  log("target split: train=" + std::to_string(target_train.size()) +
      " test=" + std::to_string(target_test.size()));

  SweepResult result;
  result.modes = config.modes;
  result.fractions = config.fractions;
  result.seeds = config.seeds;
  result.test_set_hash = dataset_hash_hex(target_test);

  // --- stage 1: source checkpoints, one per (pretrained mode, seed) ---
  struct PretrainJob {
    InitMode mode;
    std::uint64_t seed;
  };
  std::vector<PretrainJob> pretrain_jobs;
  for (InitMode mode : config.modes) {
    if (mode == InitMode::Direct) continue;
    for (std::uint64_t seed : config.seeds) pretrain_jobs.push_back({mode, seed});
  }

  std::map<std::pair<int, std::uint64_t>, Checkpoint> source_ckpts;
  std::map<std::pair<int, std::uint64_t>, std::string> source_hashes;
  std::function<Checkpoint(std::size_t)> pretrain_work = [&](std::size_t i) {
    const PretrainJob& job = pretrain_jobs[i];
    if (hooks.source_provider) {
      if (auto existing = hooks.source_provider(job.mode, job.seed)) return *existing;
    }
    const bool generic = job.mode == InitMode::GenericPretrained;
    TrainConfig cfg = config.pretrain_base;
    cfg.seed = job.seed;
    return pretrain_source(generic ? config.pretext_task : config.source_task,
                           generic ? pretext_arch : binary_arch, cfg);
  };
  std::function<void(std::size_t, Checkpoint&&)> pretrain_consume = [&](std::size_t i,
                                                                        Checkpoint&& ckpt) {
    const PretrainJob& job = pretrain_jobs[i];
    const auto key = std::make_pair(static_cast<int>(job.mode), job.seed);
    source_hashes[key] = checkpoint_hash_hex(ckpt);
    log(std::string("source checkpoint ready: mode=") + to_string(job.mode) +
        " seed=" + std::to_string(job.seed) + " hash=" + source_hashes[key]);
    if (hooks.on_source_checkpoint) hooks.on_source_checkpoint(job.mode, job.seed, ckpt);
    source_ckpts[key] = std::move(ckpt);
  };
  detail::ordered_parallel_for<Checkpoint>(pretrain_jobs.size(), config.jobs, pretrain_work,
                                           pretrain_consume);

  // --- stage 2: the fine-tuning grid ---
  struct CellJob {
    InitMode mode;
    double fraction;
    std::uint64_t seed;
  };
  std::vector<CellJob> cell_jobs;
  for (InitMode mode : config.modes) {
    for (double fraction : config.fractions) {
      for (std::uint64_t seed : config.seeds) cell_jobs.push_back({mode, fraction, seed});
    }
  }

  struct CellOutcome {
    SweepCell cell;
    RunRecord record;
  };
  std::function<CellOutcome(std::size_t)> cell_work = [&](std::size_t i) {
    const CellJob& job = cell_jobs[i];
    try {
      std::optional<Checkpoint> source;
      std::string source_hash = "-";
      if (job.mode != InitMode::Direct) {
        const auto key = std::make_pair(static_cast<int>(job.mode), job.seed);
        source = source_ckpts.at(key);
        source_hash = source_hashes.at(key);
      }
      TrainConfig cfg = config.finetune_base;
      cfg.seed = job.seed;
      RunRecord rec =
          finetune_target(target_train, job.mode, source, binary_arch, cfg, job.fraction);
      SweepCell cell;
      cell.mode = job.mode;
      cell.fraction = job.fraction;
      cell.seed = job.seed;
      cell.run_id = make_run_id(job.mode, job.fraction, job.seed);
      cell.metrics = evaluate(binary_arch, rec.final_checkpoint.params, target_test);
      cell.train_size = rec.train_size;
      cell.epochs = cfg.epochs;
      cell.wall_seconds = rec.wall_seconds;
      cell.source_ckpt_hash = source_hash;
      return CellOutcome{std::move(cell), std::move(rec)};
    } catch (const std::exception& e) {
      throw std::runtime_error("sweep cell " + make_run_id(job.mode, job.fraction, job.seed) +
                               " failed: " + e.what());
    }
  };
  std::function<void(std::size_t, CellOutcome&&)> cell_consume = [&](std::size_t,
                                                                     CellOutcome&& out) {
    log("cell done: " + out.cell.run_id);
    if (hooks.on_cell) hooks.on_cell(out.cell, out.record);
    result.cells.push_back(std::move(out.cell));
  };
  detail::ordered_parallel_for<CellOutcome>(cell_jobs.size(), config.jobs, cell_work,
                                            cell_consume);

  if (result.cells.size() != config.modes.size() * config.fractions.size() * config.seeds.size()) {
    throw StateError("sweep grid incomplete");  // unreachable: any failure aborts above
  }
  return result;
}

struct Aggregate {
  std::optional<double> value;
  int excluded = 0;
};
using MetricAggregates = std::array<Aggregate, kMetricCount>;

namespace detail {

// Per (mode, fraction): metric values over seeds, or nullopt when any seed's
// cell has the metric undefined.
inline std::optional<std::vector<double>> seed_values(const SweepResult& r, InitMode mode,
                                                      double fraction, Metric m) {
  std::vector<double> vals;
  for (std::uint64_t seed : r.seeds) {
    const SweepCell* cell = r.find(mode, fraction, seed);
    if (cell == nullptr) throw StateError("sweep grid is missing cell " +
                                          make_run_id(mode, fraction, seed));
    auto v = metric_value(cell->metrics, m);
    if (!v) return std::nullopt;
    vals.push_back(*v);
  }
  return vals;
}

}  // namespace detail

// Mean percentage improvement from direct training: per fraction, the seed
// means of the pretrained and direct modes are compared as 100*(P-D)/D, then
// averaged over fractions. Fractions with any undefined cell or D=0 are
// excluded and counted.
inline MetricAggregates mean_improvement(const SweepResult& result, InitMode mode) {
  if (mode == InitMode::Direct) {
    throw std::invalid_argument("mean_improvement is defined for pretrained modes");
  }
  MetricAggregates out;
  for (Metric m : kAllMetrics) {
    std::vector<double> improvements;
    int excluded = 0;
    for (double f : result.fractions) {
      auto pv = detail::seed_values(result, mode, f, m);
      auto dv = detail::seed_values(result, InitMode::Direct, f, m);
      if (!pv || !dv) {
        ++excluded;
        continue;
      }
      const double p = detail::mean_of(*pv), d = detail::mean_of(*dv);
      if (d == 0.0) {
        ++excluded;
        continue;
      }
      improvements.push_back(100.0 * (p - d) / d);
    }
    auto& slot = out[static_cast<std::size_t>(m)];
    slot.excluded = excluded;
    if (!improvements.empty()) slot.value = detail::mean_of(improvements);
  }
  return out;
}

// Mean percentage reduction of the over-seeds standard deviation relative to
// direct training: per fraction 100*(sd_D - sd_P)/sd_D, averaged over
// fractions; negative values mean pretraining adds variance.
inline MetricAggregates std_reduction(const SweepResult& result, InitMode mode) {
  if (mode == InitMode::Direct) {
    throw std::invalid_argument("std_reduction is defined for pretrained modes");
  }
  if (result.seeds.size() < 2) {
    throw std::invalid_argument("std_reduction requires at least two seeds");
  }
  MetricAggregates out;
  for (Metric m : kAllMetrics) {
    std::vector<double> reductions;
    int excluded = 0;
    for (double f : result.fractions) {
      auto pv = detail::seed_values(result, mode, f, m);
      auto dv = detail::seed_values(result, InitMode::Direct, f, m);
      if (!pv || !dv) {
        ++excluded;
        continue;
      }
      const double sd_p = detail::sample_std(*pv), sd_d = detail::sample_std(*dv);
      if (sd_d == 0.0) {
        ++excluded;
        continue;
      }
      reductions.push_back(100.0 * (sd_d - sd_p) / sd_d);
    }
    auto& slot = out[static_cast<std::size_t>(m)];
    slot.excluded = excluded;
    if (!reductions.empty()) slot.value = detail::mean_of(reductions);
  }
  return out;
}

// Percentage change from the full training set (fraction 0.0) to the 10%
// training set (fraction 0.9); positive means degradation.
inline MetricAggregates size_degradation(const SweepResult& result, InitMode mode) {
  auto has_fraction = [&](double f) {
    for (double g : result.fractions) {
      if (g == f) return true;
    }
    return false;
  };
  if (!has_fraction(0.0) || !has_fraction(0.9)) {
    throw std::invalid_argument("size_degradation requires fractions 0.0 and 0.9");
  }
  MetricAggregates out;
  for (Metric m : kAllMetrics) {
    auto full = detail::seed_values(result, mode, 0.0, m);
    auto small = detail::seed_values(result, mode, 0.9, m);
    auto& slot = out[static_cast<std::size_t>(m)];
    if (!full || !small) {
      slot.excluded = 1;
      continue;
    }
    const double m_full = detail::mean_of(*full), m_small = detail::mean_of(*small);
    if (m_full == 0.0) {
      slot.excluded = 1;
      continue;
    }
    slot.value = 100.0 * (m_full - m_small) / m_full;
  }
  return out;
}

struct CurvePoint {
  double train_size;  // 1 - reduction_fraction
  double mean, min, max;
};

// Per (mode, metric): the learning curve over training size, ascending, with
// the over-seeds mean and min..max band. Points where any seed has the metric
// undefined are dropped.
inline std::map<InitMode, std::array<std::vector<CurvePoint>, kMetricCount>> learning_curves(
    const SweepResult& result) {
  std::map<InitMode, std::array<std::vector<CurvePoint>, kMetricCount>> out;
  for (InitMode mode : result.modes) {
    auto& per_metric = out[mode];
    for (Metric m : kAllMetrics) {
      auto& series = per_metric[static_cast<std::size_t>(m)];
      for (auto it = result.fractions.rbegin(); it != result.fractions.rend(); ++it) {
        auto vals = detail::seed_values(result, mode, *it, m);
        if (!vals) continue;
        CurvePoint p;
        p.train_size = 1.0 - *it;
        p.mean = detail::mean_of(*vals);
        p.min = *std::min_element(vals->begin(), vals->end());
        p.max = *std::max_element(vals->begin(), vals->end());
        series.push_back(p);
      }
    }
  }
  return out;
}

struct AggregateTables {
  std::vector<std::pair<InitMode, MetricAggregates>> improvement;       // vs direct
  std::vector<std::pair<InitMode, MetricAggregates>> stddev_reduction;  // vs direct
  std::vector<std::pair<InitMode, MetricAggregates>> degradation;       // full -> 10%
};

inline AggregateTables build_tables(const SweepResult& result) {
  AggregateTables tables;
  bool has_direct = false;
  for (InitMode m : result.modes) has_direct |= (m == InitMode::Direct);
  bool has_endpoints = false;
  {
    bool f0 = false, f9 = false;
    for (double f : result.fractions) {
      f0 |= (f == 0.0);
      f9 |= (f == 0.9);
    }
    has_endpoints = f0 && f9;
  }
  for (InitMode mode : result.modes) {
    if (mode != InitMode::Direct && has_direct) {
      tables.improvement.emplace_back(mode, mean_improvement(result, mode));
      if (result.seeds.size() >= 2) {
        tables.stddev_reduction.emplace_back(mode, std_reduction(result, mode));
      }
    }
    if (has_endpoints) tables.degradation.emplace_back(mode, size_degradation(result, mode));
  }
  return tables;
}

}  // namespace xfer
