// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "models.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace fskate {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::slstm: return "slstm";
    case ModelKind::mlstm: return "mlstm";
    case ModelKind::fused: return "fused";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "slstm") return ModelKind::slstm;
  if (name == "mlstm") return ModelKind::mlstm;
  if (name == "fused") return ModelKind::fused;
  throw ContractError("unknown model kind '" + std::string(name) + "' (expected slstm, mlstm or fused)");
}

std::string to_string(GateMode mode) { return mode == GateMode::literal ? "literal" : "swapped"; }

GateMode parse_gate_mode(std::string_view name) {
  if (name == "literal") return GateMode::literal;
  if (name == "swapped") return GateMode::swapped;
  throw ContractError("unknown gate mode '" + std::string(name) + "' (expected literal or swapped)");
}

std::vector<BranchSpec> parse_branch_spec(std::string_view text) {
  std::vector<BranchSpec> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string item(text.substr(pos, end - pos));
    std::istringstream is(item);
    std::string k, s, cell;
    if (!std::getline(is, k, ':') || !std::getline(is, s, ':') || !std::getline(is, cell) || cell.find(':') != std::string::npos)
      throw ContractError("branch spec item '" + item + "' is not k:stride:cell");
    BranchSpec b;
    try {
      std::size_t used = 0;
      const long kv = std::stol(k, &used);
      if (used != k.size()) throw std::invalid_argument(k);
      const long sv = std::stol(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      if (kv < 1 || sv < 1) throw std::invalid_argument(item);
      b.kernel = static_cast<std::size_t>(kv);
      b.stride = static_cast<std::size_t>(sv);
    } catch (const std::logic_error&) {
      throw ContractError("branch spec item '" + item + "': kernel and stride must be positive integers");
    }
    if (cell == "skip") {
      b.cell = CellKind::skip_lstm;
    } else if (cell == "lstm") {
      b.cell = CellKind::lstm;
    } else {
      throw ContractError("branch spec item '" + item + "': cell must be skip or lstm");
    }
    out.push_back(b);
    pos = end + 1;
  }
  return out;
}

std::string format_branch_spec(const std::vector<BranchSpec>& branches) {
  std::string s;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(branches[i].kernel) + ":" + std::to_string(branches[i].stride) + ":" +
         (branches[i].cell == CellKind::skip_lstm ? "skip" : "lstm");
  }
  return s;
}

std::vector<BranchSpec> default_branches() {
  return {{3, 2, CellKind::skip_lstm}, {5, 2, CellKind::skip_lstm}, {9, 4, CellKind::lstm}, {15, 4, CellKind::lstm}};
}

void validate(const ModelConfig& cfg) {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ContractError(std::string("model config: ") + what + " must be positive");
  };
  positive(cfg.input_dim, "input_dim");
  for (auto h : cfg.head_hidden) positive(h, "head hidden size");
  if (cfg.kind != ModelKind::mlstm) {
    positive(cfg.att_hidden, "att_hidden (d1)");
    positive(cfg.att_rows, "att_rows (d2)");
    positive(cfg.slstm_hidden, "slstm_hidden");
  }
  if (cfg.kind != ModelKind::slstm) {
    if (cfg.branches.empty()) throw ContractError("model config: M-LSTM needs at least one branch");
    positive(cfg.conv_channels, "conv_channels");
    positive(cfg.mlstm_hidden, "mlstm_hidden");
  }
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"kind", to_string(cfg.kind)},
                        {"input_dim", cfg.input_dim},
                        {"att_hidden", cfg.att_hidden},
                        {"att_rows", cfg.att_rows},
                        {"slstm_hidden", cfg.slstm_hidden},
                        {"branches", format_branch_spec(cfg.branches)},
                        {"conv_channels", cfg.conv_channels},
                        {"mlstm_hidden", cfg.mlstm_hidden},
                        {"head_hidden", cfg.head_hidden},
                        {"gate_mode", to_string(cfg.gate_mode)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.kind = parse_model_kind(j.at("kind").get<std::string>());
  cfg.input_dim = j.at("input_dim").get<std::size_t>();
  cfg.att_hidden = j.at("att_hidden").get<std::size_t>();
  cfg.att_rows = j.at("att_rows").get<std::size_t>();
  cfg.slstm_hidden = j.at("slstm_hidden").get<std::size_t>();
  cfg.branches = parse_branch_spec(j.at("branches").get<std::string>());
  cfg.conv_channels = j.at("conv_channels").get<std::size_t>();
  cfg.mlstm_hidden = j.at("mlstm_hidden").get<std::size_t>();
  cfg.head_hidden = j.at("head_hidden").get<std::vector<std::size_t>>();
  cfg.gate_mode = parse_gate_mode(j.at("gate_mode").get<std::string>());
  return cfg;
}

// ---------------------------------------------------------------- trunks

template <typename Real>
typename SLstmTrunk<Real>::Output SLstmTrunk<Real>::forward(Tape<Real>& tape, const Tensor<Real>& features) const {
  auto pool = self_attention_pool(tape, features, attention);
  // The d2 pooled rows are consumed as a length-d2 sequence.
  auto run = run_sequence<Real>(tape, pool.pooled, lstm, CellState<Real>::initial(lstm.hidden()));
  return {run.final.h, pool.attention};
}

template <typename Real>
std::size_t ConvBranch<Real>::hidden() const {
  return std::visit([](const auto& p) { return p.hidden(); }, cell);
}

template <typename Real>
typename MLstmTrunk<Real>::Output MLstmTrunk<Real>::forward(Tape<Real>& tape, const Tensor<Real>& features,
                                                            bool train, GateMode mode) {
  Output out;
  std::vector<Tensor<Real>> finals;
  for (auto& br : branches) {
    auto conv = tape.conv1d(features, br.kernel, br.spec.stride);
    auto norm = train && br.batch_stats ? tape.batchnorm1d(conv, br.gamma, br.beta, *br.batch_stats, false)
                                        : tape.batchnorm1d(conv, br.gamma, br.beta, br.stats, train);
    auto run = run_sequence(tape, norm, br.cell, CellState<Real>::initial(br.hidden()), mode);
    finals.push_back(run.final.h);
    out.skip_rates.push_back(run.skip_rate);
  }
  out.repr = tape.concat(std::span<const Tensor<Real>>(finals), 1);
  return out;
}

template <typename Real>
std::size_t MLstmTrunk<Real>::width() const {
  std::size_t w = 0;
  for (const auto& b : branches) w += b.hidden();
  return w;
}

template <typename Real>
std::size_t MLstmTrunk<Real>::min_length() const {
  std::size_t k = 1;
  for (const auto& b : branches) k = std::max(k, b.spec.kernel);
  return k;
}

// ---------------------------------------------------------------- model

template <typename Real>
Model<Real>::Model(ModelConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  validate(cfg_);
  std::size_t head_in = 0;
  if (cfg_.kind != ModelKind::mlstm) {
    SLstmTrunk<Real> t;
    t.attention = SelfAttentionParams<Real>::init(cfg_.input_dim, cfg_.att_hidden, cfg_.att_rows, rng);
    t.lstm = LstmParams<Real>::init(cfg_.input_dim, cfg_.slstm_hidden, rng);
    head_in += t.width();
    slstm_ = std::move(t);
  }
  if (cfg_.kind != ModelKind::slstm) {
    MLstmTrunk<Real> t;
    for (const auto& spec : cfg_.branches) {
      ConvBranch<Real> br;
      br.spec = spec;
      const double bound = 1.0 / std::sqrt(double(spec.kernel * cfg_.input_dim));
      br.kernel = Tensor<Real>::zeros({spec.kernel, cfg_.input_dim, cfg_.conv_channels}, true);
      for (auto& v : br.kernel.mutable_data()) v = static_cast<Real>(rng.uniform(-bound, bound));
      br.gamma = Tensor<Real>::full({1, cfg_.conv_channels}, Real(1), true);
      br.beta = Tensor<Real>::zeros({1, cfg_.conv_channels}, true);
      br.stats = BatchNormStats<Real>(cfg_.conv_channels);
      if (spec.cell == CellKind::skip_lstm)
        br.cell = SkipLstmParams<Real>::init(cfg_.conv_channels, cfg_.mlstm_hidden, rng);
      else
        br.cell = LstmParams<Real>::init(cfg_.conv_channels, cfg_.mlstm_hidden, rng);
      t.branches.push_back(std::move(br));
    }
    head_in += t.width();
    mlstm_ = std::move(t);
  }
  head_ = MlpParams<Real>::init(head_in, cfg_.head_hidden, rng);
}

template <typename Real>
typename Model<Real>::Output Model<Real>::forward(Tape<Real>& tape, const Tensor<Real>& features, bool train,
                                                  double dropout, Rng& rng) {
  if (features.rank() != 2 || features.cols() != cfg_.input_dim)
    throw DimensionError("model input " + shape_str(features.shape()) + " does not match feature width " +
                         std::to_string(cfg_.input_dim));
  Output out;
  std::vector<Tensor<Real>> parts;
  if (slstm_) {
    auto s = slstm_->forward(tape, features);
    parts.push_back(s.repr);
    out.attention = s.attention;
  }
  if (mlstm_) {
    auto m = mlstm_->forward(tape, features, train, cfg_.gate_mode);
    parts.push_back(m.repr);
    out.skip_rates = std::move(m.skip_rates);
  }
  auto repr = parts.size() == 1 ? parts[0] : tape.concat(std::span<const Tensor<Real>>(parts), 1);
  out.score = mlp_forward(tape, repr, head_, dropout, train, rng);
  return out;
}

template <typename Real>
typename Model<Real>::Output Model<Real>::evaluate(const Tensor<Real>& features) const {
  Tape<Real> tape(false);
  Rng unused(0);
  // Eval mode reads batchnorm statistics without writing them.
  return const_cast<Model*>(this)->forward(tape, features, false, 0.0, unused);
}

template <typename Real>
double Model<Real>::predict(const Tensor<Real>& features) const {
  return static_cast<double>(evaluate(features).score.item()) * score_scale.scale + score_scale.offset;
}

template <typename Real>
void Model<Real>::begin_batch(std::span<const Tensor<Real>* const> batch, double momentum) {
  if (!mlstm_) return;
  if (batch.empty()) throw ContractError("begin_batch: empty batch");
  for (auto& br : mlstm_->branches) {
    const std::size_t ch = br.stats.mean.size();
    std::vector<double> sum(ch, 0.0), sum_sq(ch, 0.0);
    std::size_t frames = 0;
    for (const auto* x : batch) {
      Tape<Real> tape(false);
      auto conv = tape.conv1d(*x, br.kernel, br.spec.stride);
      const auto v = conv.data();
      const std::size_t len = conv.rows();
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < ch; ++c) {
          const double z = double(v[t * ch + c]);
          sum[c] += z;
          sum_sq[c] += z * z;
        }
      frames += len;
    }
    BatchNormStats<Real> pooled(ch);
    for (std::size_t c = 0; c < ch; ++c) {
      const double mean = sum[c] / double(frames);
      const double biased = std::max(0.0, sum_sq[c] / double(frames) - mean * mean);
      const double unbiased = frames > 1 ? biased * double(frames) / double(frames - 1) : biased;
      pooled.mean[c] = Real(mean);
      pooled.var[c] = Real(biased);
      br.stats.mean[c] = Real((1.0 - momentum) * double(br.stats.mean[c]) + momentum * mean);
      br.stats.var[c] = Real((1.0 - momentum) * double(br.stats.var[c]) + momentum * unbiased);
    }
    br.batch_stats = std::move(pooled);
  }
}

template <typename Real>
void Model<Real>::end_batch() {
  if (!mlstm_) return;
  for (auto& br : mlstm_->branches) br.batch_stats.reset();
}

template <typename Real>
std::vector<NamedTensor<Real>> Model<Real>::parameters() {
  std::vector<NamedTensor<Real>> out;
  auto add_lstm = [&](const std::string& prefix, const LstmParams<Real>& p) {
    out.push_back({prefix + ".wx", p.wx});
    out.push_back({prefix + ".wh", p.wh});
    out.push_back({prefix + ".b", p.b});
  };
  if (slstm_) {
    out.push_back({"att.ws1", slstm_->attention.ws1});
    out.push_back({"att.ws2", slstm_->attention.ws2});
    add_lstm("slstm", slstm_->lstm);
  }
  if (mlstm_) {
    for (std::size_t i = 0; i < mlstm_->branches.size(); ++i) {
      const auto& br = mlstm_->branches[i];
      const std::string prefix = "mlstm.b" + std::to_string(i);
      out.push_back({prefix + ".kernel", br.kernel});
      out.push_back({prefix + ".bn.gamma", br.gamma});
      out.push_back({prefix + ".bn.beta", br.beta});
      if (const auto* skip = std::get_if<SkipLstmParams<Real>>(&br.cell)) {
        add_lstm(prefix, skip->lstm);
        out.push_back({prefix + ".wp", skip->wp});
        out.push_back({prefix + ".bp", skip->bp});
      } else {
        add_lstm(prefix, std::get<LstmParams<Real>>(br.cell));
      }
    }
  }
  for (std::size_t l = 0; l < head_.layers.size(); ++l) {
    out.push_back({"head." + std::to_string(l) + ".w", head_.layers[l].w});
    out.push_back({"head." + std::to_string(l) + ".b", head_.layers[l].b});
  }
  return out;
}

template <typename Real>
std::vector<NamedBuffer<Real>> Model<Real>::buffers() {
  std::vector<NamedBuffer<Real>> out;
  if (mlstm_) {
    for (std::size_t i = 0; i < mlstm_->branches.size(); ++i) {
      auto& st = mlstm_->branches[i].stats;
      out.push_back({"mlstm.b" + std::to_string(i) + ".bn.running_mean", &st.mean});
      out.push_back({"mlstm.b" + std::to_string(i) + ".bn.running_var", &st.var});
    }
  }
  return out;
}

template <typename Real>
Model<Real> Model<Real>::clone() const {
  Model copy = *this;  // shares tensor storage until replaced below
  auto deep = [](Tensor<Real>& t) { t = t.clone(); };
  if (copy.slstm_) {
    deep(copy.slstm_->attention.ws1);
    deep(copy.slstm_->attention.ws2);
    deep(copy.slstm_->lstm.wx);
    deep(copy.slstm_->lstm.wh);
    deep(copy.slstm_->lstm.b);
  }
  if (copy.mlstm_) {
    for (auto& br : copy.mlstm_->branches) {
      deep(br.kernel);
      deep(br.gamma);
      deep(br.beta);
      std::visit(
          [&](auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, SkipLstmParams<Real>>) {
              deep(p.lstm.wx);
              deep(p.lstm.wh);
              deep(p.lstm.b);
              deep(p.wp);
              deep(p.bp);
            } else {
              deep(p.wx);
              deep(p.wh);
              deep(p.b);
            }
          },
          br.cell);
    }
  }
  for (auto& l : copy.head_.layers) {
    deep(l.w);
    deep(l.b);
  }
  return copy;
}

template <typename Real>
Tensor<Real> features_tensor(std::size_t length, std::size_t dim, const std::vector<float>& values) {
  std::vector<Real> data(values.begin(), values.end());
  return Tensor<Real>::from({length, dim}, std::move(data));
}

template struct SLstmTrunk<float>;
template struct SLstmTrunk<double>;
template struct ConvBranch<float>;
template struct ConvBranch<double>;
template struct MLstmTrunk<float>;
template struct MLstmTrunk<double>;
template class Model<float>;
template class Model<double>;
template Tensor<float> features_tensor<float>(std::size_t, std::size_t, const std::vector<float>&);
template Tensor<double> features_tensor<double>(std::size_t, std::size_t, const std::vector<float>&);

}  // namespace fskate
