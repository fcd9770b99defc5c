// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#ifndef FSKATE_CORE_LAYERS_HPP
#define FSKATE_CORE_LAYERS_HPP

#include <cstddef>
#include <variant>
#include <vector>

#include "tensor.hpp"

namespace fskate {

enum class CellKind { lstm, skip_lstm };

/// Output-gate mixing of the revised skip cell.
///   literal: h_t = ((1-u_t) o_t + u_t o_{t-1}) * tanh(c_t)
///   swapped: h_t = (u_t o_t + (1-u_t) o_{t-1}) * tanh(c_t)
enum class GateMode { literal, swapped };

/// Two-layer bias-free attention MLP: ws1 is [d1 x d], ws2 is [d2 x d1].
template <typename Real>
struct SelfAttentionParams {
  Tensor<Real> ws1;
  Tensor<Real> ws2;

  static SelfAttentionParams init(std::size_t input_dim, std::size_t hidden, std::size_t rows, Rng& rng);
  std::size_t input_dim() const { return ws1.shape()[1]; }
  std::size_t rows() const { return ws2.shape()[0]; }
};

/// Stacked LSTM weights. Gate blocks are packed in the order i, f, o, g
/// along the 4h axis: wx is [4h x d], wh is [4h x h], b is [1 x 4h].
template <typename Real>
struct LstmParams {
  Tensor<Real> wx;
  Tensor<Real> wh;
  Tensor<Real> b;

  /// Weights uniform in +-1/sqrt(h), biases zero except the forget gate (+1).
  static LstmParams init(std::size_t input_dim, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return wh.shape()[1]; }
  std::size_t input_dim() const { return wx.shape()[1]; }
};

template <typename Real>
struct SkipLstmParams {
  LstmParams<Real> lstm;
  Tensor<Real> wp;  // [1 x h]
  Tensor<Real> bp;  // [1 x 1]

  static SkipLstmParams init(std::size_t input_dim, std::size_t hidden, Rng& rng);
  std::size_t hidden() const { return lstm.hidden(); }
};

template <typename Real>
using CellParams = std::variant<LstmParams<Real>, SkipLstmParams<Real>>;

/// Recurrent state. The vanilla cell only touches h and c.
template <typename Real>
struct CellState {
  Tensor<Real> h;        // [1 x h]
  Tensor<Real> c;        // [1 x h]
  Tensor<Real> u_tilde;  // [1 x 1], in [0, 1]
  Tensor<Real> o_prev;   // [1 x h]

  /// h = c = 0, u_tilde = 1 (the first step always updates) and
  /// o_prev = 0.5 (the output gate at zero pre-activation).
  static CellState initial(std::size_t hidden);
};

template <typename Real>
struct MlpLayer {
  Tensor<Real> w;  // [in x out]
  Tensor<Real> b;  // [1 x out]
};

/// affine -> ReLU -> dropout for each hidden layer, then affine to a scalar.
template <typename Real>
struct MlpParams {
  std::vector<MlpLayer<Real>> layers;

  static MlpParams init(std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng);
  std::size_t input_dim() const { return layers.front().w.shape()[0]; }
};

template <typename Real>
struct AttentionPool {
  Tensor<Real> pooled;     // M, [d2 x d]
  Tensor<Real> attention;  // A, [d2 x T]
};

/// A = softmax_rows(ws2 * tanh(ws1 * F^T)), M = A * F. The pooled shape
/// depends only on (d2, d).
template <typename Real>
AttentionPool<Real> self_attention_pool(Tape<Real>& tape, const Tensor<Real>& features,
                                        const SelfAttentionParams<Real>& p);

/// ||A A^T - I||_F^2.
template <typename Real>
Tensor<Real> attention_penalty(Tape<Real>& tape, const Tensor<Real>& attention);

template <typename Real>
CellState<Real> lstm_step(Tape<Real>& tape, const Tensor<Real>& x, const CellState<Real>& state,
                          const LstmParams<Real>& p);

/// One step of the revised skip cell. Throws ContractError when
/// state.u_tilde is outside [0, 1].
template <typename Real>
CellState<Real> skip_lstm_step(Tape<Real>& tape, const Tensor<Real>& x, const CellState<Real>& state,
                               const SkipLstmParams<Real>& p, GateMode mode = GateMode::literal);

template <typename Real>
struct SequenceRun {
  Tensor<Real> outputs;  // [T x h]
  CellState<Real> final;
  double skip_rate = 0.0;     // fraction of steps with u_t = 0
  std::vector<int> updates;   // u_t per step; all ones for the vanilla cell
};

template <typename Real>
SequenceRun<Real> run_sequence(Tape<Real>& tape, const Tensor<Real>& xs, const CellParams<Real>& params,
                               const CellState<Real>& init, GateMode mode = GateMode::literal);

template <typename Real>
Tensor<Real> mlp_forward(Tape<Real>& tape, const Tensor<Real>& x, const MlpParams<Real>& p, double dropout,
                         bool train, Rng& rng);

}  // namespace fskate

#endif  // FSKATE_CORE_LAYERS_HPP
