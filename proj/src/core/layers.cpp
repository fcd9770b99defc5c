// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "layers.hpp"

#include <cmath>

namespace fskate {

namespace {

template <typename Real>
Tensor<Real> uniform_tensor(Shape shape, double bound, Rng& rng) {
  auto t = Tensor<Real>::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

template <typename Real>
struct Gates {
  Tensor<Real> i, f, o, g;
};

// Pre-activation = xw_row + h_prev * wh^T + b, with xw_row = x * wx^T.
template <typename Real>
Gates<Real> compute_gates(Tape<Real>& tape, const Tensor<Real>& xw_row, const Tensor<Real>& h_prev,
                          const Tensor<Real>& wh_t, const Tensor<Real>& b) {
  const std::size_t h = wh_t.shape()[0];
  auto pre = tape.add(tape.add(xw_row, tape.matmul(h_prev, wh_t)), b);
  auto ifo = tape.sigmoid(tape.slice(pre, 1, 0, 3 * h));
  Gates<Real> gates;
  gates.g = tape.tanh(tape.slice(pre, 1, 3 * h, h));
  gates.i = tape.slice(ifo, 1, 0, h);
  gates.f = tape.slice(ifo, 1, h, h);
  gates.o = tape.slice(ifo, 1, 2 * h, h);
  return gates;
}

template <typename Real>
CellState<Real> vanilla_update(Tape<Real>& tape, const Gates<Real>& g, const CellState<Real>& s) {
  CellState<Real> next = s;
  next.c = tape.add(tape.mul(g.f, s.c), tape.mul(g.i, g.g));
  next.h = tape.mul(g.o, tape.tanh(next.c));
  return next;
}

template <typename Real>
void check_u_tilde(const CellState<Real>& s) {
  const Real u = s.u_tilde.item();
  if (!(u >= Real(0) && u <= Real(1)))
    throw ContractError("skip_lstm_step: u_tilde=" + std::to_string(static_cast<double>(u)) + " outside [0, 1]");
}

template <typename Real>
CellState<Real> skip_update(Tape<Real>& tape, const Gates<Real>& g, const CellState<Real>& s,
                            const Tensor<Real>& wp_t, const Tensor<Real>& bp, GateMode mode) {
  auto u = tape.round_ste(s.u_tilde);
  auto not_u = tape.add_scalar(tape.scale(u, Real(-1)), Real(1));

  CellState<Real> next;
  next.c = tape.add(tape.mul(g.f, s.c), tape.mul(u, tape.mul(g.i, g.g)));
  auto out_gate = mode == GateMode::literal ? tape.add(tape.mul(not_u, g.o), tape.mul(u, s.o_prev))
                                            : tape.add(tape.mul(u, g.o), tape.mul(not_u, s.o_prev));
  next.h = tape.mul(out_gate, tape.tanh(next.c));

  auto delta = tape.sigmoid(tape.add(tape.matmul(next.c, wp_t), bp));
  auto headroom = tape.add_scalar(tape.scale(s.u_tilde, Real(-1)), Real(1));
  auto accumulated = tape.add(s.u_tilde, tape.minimum(delta, headroom));
  next.u_tilde = tape.add(tape.mul(u, delta), tape.mul(not_u, accumulated));
  next.o_prev = g.o;
  return next;
}

}  // namespace

template <typename Real>
SelfAttentionParams<Real> SelfAttentionParams<Real>::init(std::size_t input_dim, std::size_t hidden,
                                                          std::size_t rows, Rng& rng) {
  SelfAttentionParams p;
  p.ws1 = uniform_tensor<Real>({hidden, input_dim}, 1.0 / std::sqrt(double(input_dim)), rng);
  p.ws2 = uniform_tensor<Real>({rows, hidden}, 1.0 / std::sqrt(double(hidden)), rng);
  return p;
}

template <typename Real>
LstmParams<Real> LstmParams<Real>::init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(hidden));
  LstmParams p;
  p.wx = uniform_tensor<Real>({4 * hidden, input_dim}, bound, rng);
  p.wh = uniform_tensor<Real>({4 * hidden, hidden}, bound, rng);
  p.b = Tensor<Real>::zeros({1, 4 * hidden}, true);
  auto b = p.b.mutable_data();
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = Real(1);
  return p;
}

template <typename Real>
SkipLstmParams<Real> SkipLstmParams<Real>::init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  SkipLstmParams p;
  p.lstm = LstmParams<Real>::init(input_dim, hidden, rng);
  p.wp = uniform_tensor<Real>({1, hidden}, 1.0 / std::sqrt(double(hidden)), rng);
  p.bp = Tensor<Real>::zeros({1, 1}, true);
  return p;
}

template <typename Real>
CellState<Real> CellState<Real>::initial(std::size_t hidden) {
  CellState s;
  s.h = Tensor<Real>::zeros({1, hidden});
  s.c = Tensor<Real>::zeros({1, hidden});
  s.u_tilde = Tensor<Real>::scalar(Real(1));
  s.o_prev = Tensor<Real>::full({1, hidden}, Real(0.5));
  return s;
}

template <typename Real>
MlpParams<Real> MlpParams<Real>::init(std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  MlpParams p;
  std::size_t in = input_dim;
  auto add_layer = [&](std::size_t out) {
    MlpLayer<Real> l;
    l.w = uniform_tensor<Real>({in, out}, 1.0 / std::sqrt(double(in)), rng);
    l.b = Tensor<Real>::zeros({1, out}, true);
    p.layers.push_back(std::move(l));
    in = out;
  };
  for (auto h : hidden) add_layer(h);
  add_layer(1);
  return p;
}

template <typename Real>
AttentionPool<Real> self_attention_pool(Tape<Real>& tape, const Tensor<Real>& features,
                                        const SelfAttentionParams<Real>& p) {
  if (features.rank() != 2) throw DimensionError("self_attention_pool: features must be [T x d]");
  if (features.cols() != p.input_dim())
    throw DimensionError("self_attention_pool: features " + shape_str(features.shape()) + " vs ws1 " +
                         shape_str(p.ws1.shape()));
  auto ft = tape.transpose(features);
  auto scores = tape.matmul(p.ws2, tape.tanh(tape.matmul(p.ws1, ft)));
  AttentionPool<Real> out;
  out.attention = tape.softmax_rows(scores);
  out.pooled = tape.matmul(out.attention, features);
  return out;
}

template <typename Real>
Tensor<Real> attention_penalty(Tape<Real>& tape, const Tensor<Real>& attention) {
  const std::size_t rows = attention.rows();
  auto eye = Tensor<Real>::zeros({rows, rows});
  for (std::size_t i = 0; i < rows; ++i) eye.mutable_data()[i * rows + i] = Real(1);
  auto gram = tape.matmul(attention, tape.transpose(attention));
  return tape.frobenius_sq(tape.sub(gram, eye));
}

template <typename Real>
CellState<Real> lstm_step(Tape<Real>& tape, const Tensor<Real>& x, const CellState<Real>& state,
                          const LstmParams<Real>& p) {
  auto xw = tape.matmul(x, tape.transpose(p.wx));
  auto gates = compute_gates(tape, xw, state.h, tape.transpose(p.wh), p.b);
  return vanilla_update(tape, gates, state);
}

template <typename Real>
CellState<Real> skip_lstm_step(Tape<Real>& tape, const Tensor<Real>& x, const CellState<Real>& state,
                               const SkipLstmParams<Real>& p, GateMode mode) {
  check_u_tilde(state);
  auto xw = tape.matmul(x, tape.transpose(p.lstm.wx));
  auto gates = compute_gates(tape, xw, state.h, tape.transpose(p.lstm.wh), p.lstm.b);
  return skip_update(tape, gates, state, tape.transpose(p.wp), p.bp, mode);
}

template <typename Real>
SequenceRun<Real> run_sequence(Tape<Real>& tape, const Tensor<Real>& xs, const CellParams<Real>& params,
                               const CellState<Real>& init, GateMode mode) {
  if (xs.rank() != 2 || xs.rows() == 0) throw DimensionError("run_sequence: expected a non-empty [T x d] sequence");
  const bool skip = std::holds_alternative<SkipLstmParams<Real>>(params);
  const LstmParams<Real>& lstm = skip ? std::get<SkipLstmParams<Real>>(params).lstm
                                      : std::get<LstmParams<Real>>(params);
  if (xs.cols() != lstm.input_dim())
    throw DimensionError("run_sequence: inputs " + shape_str(xs.shape()) + " vs wx " + shape_str(lstm.wx.shape()));

  const std::size_t steps = xs.rows();
  auto xw = tape.matmul(xs, tape.transpose(lstm.wx));
  auto wh_t = tape.transpose(lstm.wh);
  Tensor<Real> wp_t;
  if (skip) wp_t = tape.transpose(std::get<SkipLstmParams<Real>>(params).wp);

  SequenceRun<Real> run;
  run.updates.reserve(steps);
  std::vector<Tensor<Real>> hs;
  hs.reserve(steps);
  CellState<Real> state = init;
  std::size_t skipped = 0;
  for (std::size_t t = 0; t < steps; ++t) {
    auto gates = compute_gates(tape, tape.row(xw, t), state.h, wh_t, lstm.b);
    if (skip) {
      check_u_tilde(state);
      const int u = std::floor(state.u_tilde.item() + Real(0.5)) != 0 ? 1 : 0;
      run.updates.push_back(u);
      if (!u) ++skipped;
      state = skip_update(tape, gates, state, wp_t, std::get<SkipLstmParams<Real>>(params).bp, mode);
    } else {
      run.updates.push_back(1);
      state = vanilla_update(tape, gates, state);
    }
    hs.push_back(state.h);
  }
  run.outputs = tape.concat(std::span<const Tensor<Real>>(hs), 0);
  run.final = state;
  run.skip_rate = static_cast<double>(skipped) / static_cast<double>(steps);
  return run;
}

template <typename Real>
Tensor<Real> mlp_forward(Tape<Real>& tape, const Tensor<Real>& x, const MlpParams<Real>& p, double dropout,
                         bool train, Rng& rng) {
  if (x.rank() != 2 || x.rows() != 1 || x.cols() != p.input_dim())
    throw DimensionError("mlp_forward: input " + shape_str(x.shape()) + " vs first layer " +
                         shape_str(p.layers.front().w.shape()));
  Tensor<Real> a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    a = tape.add(tape.matmul(a, p.layers[l].w), p.layers[l].b);
    if (l + 1 < p.layers.size()) a = tape.dropout(tape.relu(a), dropout, train, rng);
  }
  return a;
}

#define FSKATE_INSTANTIATE_LAYERS(R)                                                                        \
  template struct SelfAttentionParams<R>;                                                                   \
  template struct LstmParams<R>;                                                                            \
  template struct SkipLstmParams<R>;                                                                        \
  template struct CellState<R>;                                                                             \
  template struct MlpParams<R>;                                                                             \
  template AttentionPool<R> self_attention_pool(Tape<R>&, const Tensor<R>&, const SelfAttentionParams<R>&); \
  template Tensor<R> attention_penalty(Tape<R>&, const Tensor<R>&);                                         \
  template CellState<R> lstm_step(Tape<R>&, const Tensor<R>&, const CellState<R>&, const LstmParams<R>&);   \
  template CellState<R> skip_lstm_step(Tape<R>&, const Tensor<R>&, const CellState<R>&,                     \
                                       const SkipLstmParams<R>&, GateMode);                                 \
  template SequenceRun<R> run_sequence(Tape<R>&, const Tensor<R>&, const CellParams<R>&, const CellState<R>&, \
                                       GateMode);                                                           \
  template Tensor<R> mlp_forward(Tape<R>&, const Tensor<R>&, const MlpParams<R>&, double, bool, Rng&);

FSKATE_INSTANTIATE_LAYERS(float)
FSKATE_INSTANTIATE_LAYERS(double)

}  // namespace fskate
