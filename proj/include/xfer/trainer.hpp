#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xfer/augment.hpp"
#include "xfer/checkpoint.hpp"
#include "xfer/dataset.hpp"
#include "xfer/loss.hpp"
#include "xfer/net.hpp"
#include "xfer/optim.hpp"
#include "xfer/sampler.hpp"
#include "xfer/synth.hpp"

namespace xfer {

enum class InitMode { Direct, GenericPretrained, SourcePretrained };

inline const char* to_string(InitMode m) {
  switch (m) {
    case InitMode::Direct: return "direct";
    case InitMode::GenericPretrained: return "generic";
    case InitMode::SourcePretrained: return "source";
  }
  return "?";
}

inline std::optional<InitMode> parse_init_mode(const std::string& s) {
  if (s == "direct") return InitMode::Direct;
  if (s == "generic") return InitMode::GenericPretrained;
  if (s == "source") return InitMode::SourcePretrained;
  return std::nullopt;
}

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  RebalanceConfig rebalance;
  AugmentConfig augment;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0,1)");
    rebalance.validate();
    augment.validate();
    if (rebalance.enabled && batch_size % (rebalance.r + 1) != 0) {
      throw std::invalid_argument("batch_size must be divisible by r+1 for exact rebalancing");
    }
  }
};

struct RunRecord {
  Checkpoint final_checkpoint;
  std::vector<double> loss_series;  // one mean training loss per epoch
  double wall_seconds = 0.0;
  TrainConfig config;
  InitMode init_mode = InitMode::Direct;
  double reduction_fraction = 0.0;
  bool head_replaced = false;
  long train_size = 0;
};

namespace detail {

// An epoch is ceil(|train| / batch_size) rebalanced (or uniform) minibatches;
// sampling is with replacement, so the epoch is a step count rather than a
// permutation of the data.
inline std::vector<double> run_training(ParameterVector& params, const Architecture& arch,
                                        const Dataset& train, const TrainConfig& cfg,
                                        std::uint64_t stream_key) {
  const bool binary = train.spec.binary();
  const long n = static_cast<long>(train.size());
  const long steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const double w_pos = cfg.rebalance.enabled ? cfg.rebalance.weight_for(1) : 1.0;
  const double w_neg = cfg.rebalance.enabled ? cfg.rebalance.weight_for(0) : 1.0;

  Rng rng(stream_key);
  ParameterVector velocity = zeros_like(params);
  std::vector<double> series;
  series.reserve(static_cast<std::size_t>(cfg.epochs));

  const int net_size = arch.in_size;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (long step = 0; step < steps_per_epoch; ++step) {
      std::vector<LabeledImage> items =
          (binary && cfg.rebalance.enabled)
              ? stratified_minibatch(train, cfg.batch_size, cfg.rebalance, rng)
              : uniform_minibatch(train, cfg.batch_size, rng);

      Tensor<float> batch({cfg.batch_size, 3, net_size, net_size});
      std::vector<int> labels(static_cast<std::size_t>(cfg.batch_size));
      for (int i = 0; i < cfg.batch_size; ++i) {
        LabeledImage img = brightness_adjust(
            items[static_cast<std::size_t>(i)],
            rng.uniform(cfg.augment.brightness_lo, cfg.augment.brightness_hi));
        img = random_flip(img, rng.uniform(), cfg.augment.flip_probability);
        img = resize(img, net_size);
        std::copy(img.pixels.data.begin(), img.pixels.data.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(i) *
                                           static_cast<std::ptrdiff_t>(img.pixels.size()));
        labels[static_cast<std::size_t>(i)] = img.label;
      }

      auto res = forward(arch, params, batch);
      double loss;
      try {
        loss = binary ? tape_loss_weighted_bce(res.tape, labels, w_pos, w_neg)
                      : tape_loss_softmax_ce(res.tape, labels);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      ParameterVector grads = backward(res.tape);
      sgd_step(params, grads, cfg.learning_rate, cfg.momentum, velocity);
      epoch_loss += loss;
    }
    series.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
  }
  return series;
}

}  // namespace detail

// Source-task pretraining: trains from random init on the full source
// dataset and returns the optimum as an initialization point for the target.
inline Checkpoint pretrain_source(const TaskSpec& task, const Architecture& arch,
                                  const TrainConfig& cfg) {
  if (task.task_id == TaskId::TargetROP) {
    throw std::invalid_argument("pretraining runs on a source task, not the target task");
  }
  cfg.validate();
  Dataset train = generate_dataset(task);
  ParameterVector params = init_random(arch, cfg.seed);

  TrainConfig effective = cfg;
  if (!task.binary()) effective.rebalance.enabled = false;  // pretext classes are balanced
  detail::run_training(params, arch, train, effective,
                       derive_key(cfg.seed, rngtag::kPretrain,
                                  static_cast<std::uint64_t>(task.task_id)));

  Checkpoint ckpt;
  ckpt.fingerprint = arch.fingerprint();
  ckpt.provenance = {"random", std::string(to_string(task.task_id)), cfg.seed, cfg.epochs};
  ckpt.params = std::move(params);
  return ckpt;
}

struct InitResult {
  ParameterVector params;
  bool head_replaced = false;
};

// Direct: fresh random init. Pretrained modes: body tensors copied exactly
// from the source checkpoint; the head is re-initialized only when the label
// spaces (and therefore the head shapes) differ.
inline InitResult init_target_params(InitMode mode, const Architecture& arch,
                                     const std::optional<Checkpoint>& source_ckpt,
                                     std::uint64_t seed) {
  if (mode == InitMode::Direct) return {init_random(arch, seed), false};
  if (!source_ckpt) {
    throw IncompatibleArchitectureError("pretrained init requires a source checkpoint");
  }

  auto infos = arch.param_infos();
  if (source_ckpt->fingerprint == arch.fingerprint()) {
    // identical architecture: verify slots and copy verbatim
    if (source_ckpt->params.size() != infos.size()) {
      throw IncompatibleArchitectureError("checkpoint parameter count mismatch");
    }
    return {source_ckpt->params, false};
  }

  ParameterVector fresh = init_random(arch, seed);
  InitResult out{std::move(fresh), true};
  for (std::size_t i = 0; i < infos.size(); ++i) {
    const auto& info = infos[i];
    if (info.head) continue;  // freshly initialized replacement head
    const auto* src = source_ckpt->params.find(info.name);
    if (src == nullptr || src->value.shape != info.shape) {
      throw IncompatibleArchitectureError("source checkpoint lacks compatible body tensor " +
                                          info.name);
    }
    out.params[i].value = src->value;
  }
  return out;
}

// Target-task fine-tuning under one initialization mode. Applies the
// training-set reduction internally when reduction_fraction > 0.
inline RunRecord finetune_target(const Dataset& target_train, InitMode mode,
                                 const std::optional<Checkpoint>& source_ckpt,
                                 const Architecture& arch, const TrainConfig& cfg,
                                 double reduction_fraction) {
  if (target_train.spec.task_id != TaskId::TargetROP) {
    throw std::invalid_argument("fine-tuning expects the target task's training set");
  }
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Dataset train = reduction_fraction > 0.0
                      ? reduce_training_set(target_train, reduction_fraction, cfg.seed)
                      : target_train;

  InitResult init = init_target_params(mode, arch, source_ckpt, cfg.seed);
  ParameterVector params = std::move(init.params);
  std::vector<double> series = detail::run_training(
      params, arch, train, cfg,
      derive_key(cfg.seed, rngtag::kFinetune, double_bits(reduction_fraction)));

  RunRecord rec;
  rec.loss_series = std::move(series);
  rec.config = cfg;
  rec.init_mode = mode;
  rec.reduction_fraction = reduction_fraction;
  rec.head_replaced = init.head_replaced;
  rec.train_size = static_cast<long>(train.size());

  Checkpoint ckpt;
  ckpt.fingerprint = arch.fingerprint();
  Provenance prov;
  prov.init_mode = to_string(mode);
  if (mode == InitMode::SourcePretrained) prov.source_task = to_string(TaskId::SourceDR);
  if (mode == InitMode::GenericPretrained) prov.source_task = to_string(TaskId::GenericPretext);
  prov.seed = cfg.seed;
  prov.epochs = cfg.epochs;
  ckpt.provenance = prov;
  ckpt.params = std::move(params);
  rec.final_checkpoint = std::move(ckpt);

  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace xfer
