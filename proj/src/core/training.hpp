// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_TRAINING_HPP
#define FSKATE_CORE_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_io.hpp"
#include "models.hpp"

namespace fskate {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 250;
  double dropout = 0.7;
  double penalty_weight = 1.0;  // lambda on ||AA^T - I||_F^2
  std::uint64_t seed = 0;
  Target target = Target::pcs;
  double val_fraction = 0.1;
  /// Regress z-scored targets; the affine map back to score units is stored
  /// in the model.
  bool standardize_targets = true;
  /// Only the head is optimized (fused model over pretrained trunks).
  bool freeze_trunks = false;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

template <typename Real>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;

  static AdamState for_params(std::span<const Tensor<Real>> params);
};

/// Bias-corrected Adam update from the gradients currently held by
/// `params` (a parameter without a gradient is treated as zero gradient).
template <typename Real>
void adam_step(std::span<Tensor<Real>> params, AdamState<Real>& state, double lr);

template <typename Real>
struct LossTerms {
  Tensor<Real> total;
  double squared_error = 0.0;
  double penalty = 0.0;
};

/// (pred - target)^2 + lambda * ||AA^T - I||_F^2, the penalty only when an
/// attention matrix is given.
template <typename Real>
LossTerms<Real> regression_loss(Tape<Real>& tape, const Tensor<Real>& pred, double target,
                                const Tensor<Real>* attention, double lambda);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean objective in normalized units
  double train_mse = 0.0;   // mean squared error in score units (train mode)
  double penalty = 0.0;     // mean attention penalty
  double val_mse = 0.0;     // eval-mode, score units; NaN without a val split
};

struct BatchStats {
  double loss = 0.0;
  double squared_error = 0.0;
  double penalty = 0.0;
};

/// Zeroes the gradients of `params`, then runs one train-mode forward and
/// backward per sample and leaves the mean per-sample gradient in `params`.
/// `targets` are in normalized units.
template <typename Real>
BatchStats batch_gradient(Model<Real>& model, std::span<Tensor<Real>> params,
                          std::span<const Tensor<Real>* const> features, std::span<const double> targets,
                          std::span<const std::string* const> ids, const TrainConfig& cfg, Rng& dropout_rng);

template <typename Real>
struct TrainResult {
  Model<Real> model;  // best-validation snapshot
  AdamState<Real> adam;
  std::vector<EpochStats> trace;
  std::size_t best_epoch = 0;
  std::string rng_state;
};

using ProgressFn = std::function<void(const EpochStats&)>;

/// Minibatch Adam over the train split. Sequences are processed one at a
/// time (no padding) and batch gradients are per-sample means. A seeded
/// `val_fraction` of the train split is held out for checkpoint selection.
/// `init`, when given, supplies starting weights and must share the config.
template <typename Real>
TrainResult<Real> train(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                        const ProgressFn& progress = {}, const Model<Real>* init = nullptr);

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochStats>& trace);

// ---------------------------------------------------------------- checkpoint

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
struct Checkpoint {
  Model<Real> model;
  TrainConfig train;
  std::optional<AdamState<Real>> adam;
  std::size_t epoch = 0;
  std::string rng_state;
};

/// FSCK container: "FSCK", u32 version, u32 kind, u32 meta length, JSON
/// meta, u32 record count, then name-indexed f32 tensor records. All
/// integers little-endian.
template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const Model<Real>& model, const TrainConfig& train,
                     const AdamState<Real>* adam = nullptr, std::size_t epoch = 0, const std::string& rng_state = {});

/// Throws KindMismatchError when `expected` is set and differs from the
/// stored kind, CheckpointVersionError on version mismatch and
/// CheckpointError on any corruption.
template <typename Real>
Checkpoint<Real> load_checkpoint(const std::filesystem::path& path, std::optional<ModelKind> expected = std::nullopt);

/// Reads only the model kind tag.
ModelKind peek_checkpoint_kind(const std::filesystem::path& path);

}  // namespace fskate

#endif  // FSKATE_CORE_TRAINING_HPP
