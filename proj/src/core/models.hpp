// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_MODELS_HPP
#define FSKATE_CORE_MODELS_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "layers.hpp"

namespace fskate {

enum class ModelKind { slstm, mlstm, fused };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);
std::string to_string(GateMode mode);
GateMode parse_gate_mode(std::string_view name);

/// One parallel M-LSTM branch: valid conv1d of width `kernel` and `stride`,
/// batchnorm, then a recurrent cell.
struct BranchSpec {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  CellKind cell = CellKind::skip_lstm;

  bool operator==(const BranchSpec&) const = default;
};

/// Parses "k:stride:cell[,k:stride:cell...]" with cell in {skip, lstm}.
std::vector<BranchSpec> parse_branch_spec(std::string_view text);
std::string format_branch_spec(const std::vector<BranchSpec>& branches);
/// Kernels {3, 5, 9, 15}, strides {2, 2, 4, 4}; skip cells on the two
/// small kernels, plain LSTMs on the large ones.
std::vector<BranchSpec> default_branches();

struct ModelConfig {
  ModelKind kind = ModelKind::slstm;
  std::size_t input_dim = 4096;
  std::size_t att_hidden = 1024;  // d1
  std::size_t att_rows = 40;      // d2
  std::size_t slstm_hidden = 256;
  std::vector<BranchSpec> branches = default_branches();
  std::size_t conv_channels = 256;
  std::size_t mlstm_hidden = 256;
  std::vector<std::size_t> head_hidden{256};
  GateMode gate_mode = GateMode::literal;
};

void validate(const ModelConfig& cfg);
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> tensor;
};

template <typename Real>
struct NamedBuffer {
  std::string name;
  std::vector<Real>* values;
};

template <typename Real>
struct SLstmTrunk {
  SelfAttentionParams<Real> attention;
  LstmParams<Real> lstm;

  struct Output {
    Tensor<Real> repr;       // final hidden state, [1 x h]
    Tensor<Real> attention;  // [d2 x T]
  };
  Output forward(Tape<Real>& tape, const Tensor<Real>& features) const;
  std::size_t width() const { return lstm.hidden(); }
};

template <typename Real>
struct ConvBranch {
  BranchSpec spec;
  Tensor<Real> kernel;  // [k x d x channels]
  Tensor<Real> gamma;   // [1 x channels]
  Tensor<Real> beta;    // [1 x channels]
  BatchNormStats<Real> stats;
  /// Minibatch statistics; while set, train-mode forwards normalize with
  /// these instead of per-sequence statistics.
  std::optional<BatchNormStats<Real>> batch_stats;
  CellParams<Real> cell;

  std::size_t hidden() const;
};

template <typename Real>
struct MLstmTrunk {
  std::vector<ConvBranch<Real>> branches;

  struct Output {
    Tensor<Real> repr;  // concatenated final hidden states, [1 x sum h]
    std::vector<double> skip_rates;
  };
  /// Train mode updates batchnorm running statistics.
  Output forward(Tape<Real>& tape, const Tensor<Real>& features, bool train, GateMode mode);
  std::size_t width() const;
  std::size_t min_length() const;
};

/// Affine map from the regression output to score units.
struct ScoreScale {
  double offset = 0.0;
  double scale = 1.0;
};

/// S-LSTM, M-LSTM, or both trunks feeding one head.
template <typename Real>
class Model {
 public:
  Model(ModelConfig cfg, Rng& init_rng);

  struct Output {
    Tensor<Real> score;      // [1 x 1], normalized units
    Tensor<Real> attention;  // undefined for mlstm
    std::vector<double> skip_rates;
  };

  /// Eval mode (train=false) never mutates the model.
  Output forward(Tape<Real>& tape, const Tensor<Real>& features, bool train, double dropout, Rng& rng);
  Output evaluate(const Tensor<Real>& features) const;
  /// Eval-mode score in target units.
  double predict(const Tensor<Real>& features) const;

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }

  /// Pools batchnorm statistics over every frame of `batch` without
  /// recording gradients, folds them into the running statistics and holds
  /// them for train-mode forwards until end_batch(). No-op without M-LSTM.
  void begin_batch(std::span<const Tensor<Real>* const> batch, double momentum = 0.1);
  void end_batch();

  std::vector<NamedTensor<Real>> parameters();
  std::vector<NamedBuffer<Real>> buffers();
  Model clone() const;

  std::optional<SLstmTrunk<Real>>& slstm() { return slstm_; }
  std::optional<MLstmTrunk<Real>>& mlstm() { return mlstm_; }
  MlpParams<Real>& head() { return head_; }
  const MlpParams<Real>& head() const { return head_; }

  ScoreScale score_scale;

 private:
  ModelConfig cfg_;
  std::optional<SLstmTrunk<Real>> slstm_;
  std::optional<MLstmTrunk<Real>> mlstm_;
  MlpParams<Real> head_;
};

/// [T x d] feature tensor from row-major float values.
template <typename Real>
Tensor<Real> features_tensor(std::size_t length, std::size_t dim, const std::vector<float>& values);

}  // namespace fskate

#endif  // FSKATE_CORE_MODELS_HPP
