// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace fskate {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0)) throw ContractError("train config: learning_rate must be > 0");
  if (c.batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
  if (c.epochs == 0) throw ContractError("train config: epochs must be >= 1");
  if (!(c.dropout >= 0 && c.dropout < 1)) throw ContractError("train config: dropout must be in [0, 1)");
  if (!(c.penalty_weight >= 0)) throw ContractError("train config: penalty weight must be >= 0");
  if (!(c.val_fraction >= 0 && c.val_fraction < 1)) throw ContractError("train config: val_fraction must be in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{{"learning_rate", c.learning_rate},
                        {"batch_size", c.batch_size},
                        {"epochs", c.epochs},
                        {"dropout", c.dropout},
                        {"penalty_weight", c.penalty_weight},
                        {"seed", c.seed},
                        {"target", to_string(c.target)},
                        {"val_fraction", c.val_fraction},
                        {"standardize_targets", c.standardize_targets},
                        {"freeze_trunks", c.freeze_trunks}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.penalty_weight = j.at("penalty_weight").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.target = parse_target(j.at("target").get<std::string>());
  c.val_fraction = j.at("val_fraction").get<double>();
  c.standardize_targets = j.at("standardize_targets").get<bool>();
  c.freeze_trunks = j.at("freeze_trunks").get<bool>();
  return c;
}

// ---------------------------------------------------------------- Adam

template <typename Real>
AdamState<Real> AdamState<Real>::for_params(std::span<const Tensor<Real>> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), Real(0));
    s.v.emplace_back(p.size(), Real(0));
  }
  return s;
}

template <typename Real>
void adam_step(std::span<Tensor<Real>> params, AdamState<Real>& s, double lr) {
  if (s.m.size() != params.size() || s.v.size() != params.size())
    throw ContractError("adam_step: optimizer state tracks " + std::to_string(s.m.size()) + " tensors, got " +
                        std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k)
    if (s.m[k].size() != params[k].size() || s.v[k].size() != params[k].size())
      throw ContractError("adam_step: moment shape mismatch for parameter " + std::to_string(k) + " " +
                          shape_str(params[k].shape()));
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, double(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].mutable_data();
    auto g = params[k].grad();
    auto& m = s.m[k];
    auto& v = s.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : double(g[i]);
      const double mi = s.beta1 * double(m[i]) + (1.0 - s.beta1) * gi;
      const double vi = s.beta2 * double(v[i]) + (1.0 - s.beta2) * gi * gi;
      m[i] = Real(mi);
      v[i] = Real(vi);
      w[i] = Real(double(w[i]) - lr * (mi / c1) / (std::sqrt(vi / c2) + s.eps));
    }
  }
}

// ---------------------------------------------------------------- loss

template <typename Real>
LossTerms<Real> regression_loss(Tape<Real>& tape, const Tensor<Real>& pred, double target,
                                const Tensor<Real>* attention, double lambda) {
  if (!(lambda >= 0)) throw ContractError("regression_loss: lambda must be >= 0");
  if (pred.size() != 1) throw DimensionError("regression_loss: prediction must be scalar, got " + shape_str(pred.shape()));
  LossTerms<Real> out;
  auto diff = tape.add_scalar(pred, Real(-target));
  out.total = tape.mul(diff, diff);
  out.squared_error = double(out.total.item());
  if (attention != nullptr && attention->defined()) {
    auto p = attention_penalty(tape, *attention);
    out.penalty = double(p.item());
    if (lambda > 0) out.total = tape.add(out.total, tape.scale(p, Real(lambda)));
  }
  return out;
}

// ---------------------------------------------------------------- trainer

template <typename Real>
BatchStats batch_gradient(Model<Real>& model, std::span<Tensor<Real>> params,
                          std::span<const Tensor<Real>* const> features, std::span<const double> targets,
                          std::span<const std::string* const> ids, const TrainConfig& cfg, Rng& dropout_rng) {
  if (features.size() != targets.size() || features.empty())
    throw ContractError("batch_gradient: need matching, non-empty features and targets");
  for (auto& p : params) p.zero_grad();
  model.begin_batch(features);
  struct EndBatch {
    Model<Real>& m;
    ~EndBatch() { m.end_batch(); }
  } guard{model};
  BatchStats stats;
  for (std::size_t i = 0; i < features.size(); ++i) {
    Tape<Real> tape;
    auto out = model.forward(tape, *features[i], true, cfg.dropout, dropout_rng);
    auto loss = regression_loss(tape, out.score, targets[i], out.attention.defined() ? &out.attention : nullptr,
                                cfg.penalty_weight);
    const double value = double(loss.total.item());
    if (!std::isfinite(value)) throw NonFiniteLossError(ids.empty() ? std::to_string(i) : *ids[i], value);
    tape.backward(loss.total);
    stats.loss += value;
    stats.squared_error += loss.squared_error;
    stats.penalty += loss.penalty;
  }
  const Real inv = Real(1) / Real(features.size());
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    auto* st = p.storage();
    for (auto& g : st->grad) g *= inv;
  }
  return stats;
}

template <typename Real>
TrainResult<Real> train(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                        const ProgressFn& progress, const Model<Real>* init) {
  validate(cfg);
  auto pool = data.split(Split::train);
  if (pool.empty()) throw ContractError("train: the train split is empty");
  if (model_cfg.input_dim != data.dim)
    throw DimensionError("train: model input width " + std::to_string(model_cfg.input_dim) +
                         " vs dataset width " + std::to_string(data.dim));

  Rng split_rng = Rng::substream(cfg.seed, "split");
  split_rng.shuffle(pool.begin(), pool.end());
  std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * double(pool.size()) + 0.5));
  n_val = std::min(n_val, pool.size() - 1);
  std::vector<const Sample*> val(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<const Sample*> fit(pool.begin() + static_cast<std::ptrdiff_t>(n_val), pool.end());
  std::sort(val.begin(), val.end(), [](auto* a, auto* b) { return a->entry.id < b->entry.id; });
  std::sort(fit.begin(), fit.end(), [](auto* a, auto* b) { return a->entry.id < b->entry.id; });

  ScoreScale scale;
  if (cfg.standardize_targets) {
    double mean = 0;
    for (auto* s : fit) mean += s->entry.label(cfg.target);
    mean /= double(fit.size());
    double var = 0;
    for (auto* s : fit) var += std::pow(s->entry.label(cfg.target) - mean, 2);
    var /= double(fit.size());
    scale.offset = mean;
    scale.scale = var > 0 ? std::sqrt(var) : 1.0;
  }

  Rng init_rng = Rng::substream(cfg.seed, "init");
  Model<Real> model(model_cfg, init_rng);
  if (init != nullptr) {
    if (to_json(init->config()) != to_json(model_cfg)) throw ContractError("train: initial model config differs");
    model = init->clone();
  }
  model.score_scale = scale;

  auto named = model.parameters();
  std::vector<Tensor<Real>> params;
  std::vector<bool> saved_flags;
  for (auto& p : named) {
    saved_flags.push_back(p.tensor.requires_grad());
    if (cfg.freeze_trunks && p.name.rfind("head.", 0) != 0) {
      p.tensor.storage()->requires_grad = false;
      continue;
    }
    params.push_back(p.tensor);
  }
  auto adam = AdamState<Real>::for_params(params);

  std::vector<Tensor<Real>> fit_x;
  std::vector<double> fit_y;
  std::vector<const std::string*> fit_ids;
  for (auto* s : fit) {
    fit_x.push_back(features_tensor<Real>(s->features.length, s->features.dim, s->features.values));
    fit_y.push_back((s->entry.label(cfg.target) - scale.offset) / scale.scale);
    fit_ids.push_back(&s->entry.id);
  }
  std::vector<Tensor<Real>> val_x;
  for (auto* s : val) val_x.push_back(features_tensor<Real>(s->features.length, s->features.dim, s->features.values));

  Rng shuffle_rng = Rng::substream(cfg.seed, "shuffle");
  Rng dropout_rng = Rng::substream(cfg.seed, "dropout");

  TrainResult<Real> result{model.clone(), adam, {}, 0, {}};
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(fit.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    EpochStats st;
    st.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Tensor<Real>*> bx;
      std::vector<double> by;
      std::vector<const std::string*> bid;
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(&fit_x[order[i]]);
        by.push_back(fit_y[order[i]]);
        bid.push_back(fit_ids[order[i]]);
      }
      auto b = batch_gradient<Real>(model, params, bx, by, bid, cfg, dropout_rng);
      adam_step<Real>(params, adam, cfg.learning_rate);
      st.train_loss += b.loss;
      st.train_mse += b.squared_error;
      st.penalty += b.penalty;
    }
    const double n = double(order.size());
    st.train_loss /= n;
    st.train_mse = st.train_mse / n * scale.scale * scale.scale;
    st.penalty /= n;

    if (!val.empty()) {
      double acc = 0;
      for (std::size_t i = 0; i < val.size(); ++i)
        acc += std::pow(model.predict(val_x[i]) - val[i]->entry.label(cfg.target), 2);
      st.val_mse = acc / double(val.size());
    } else {
      st.val_mse = std::numeric_limits<double>::quiet_NaN();
    }
    result.trace.push_back(st);
    if (progress) progress(st);

    const bool better = !val.empty() ? st.val_mse < best_val : epoch == cfg.epochs;
    if (better) {
      best_val = st.val_mse;
      result.model = model.clone();
      result.adam = adam;
      result.best_epoch = epoch;
      result.rng_state = shuffle_rng.state();
    }
  }
  for (std::size_t i = 0; i < named.size(); ++i) named[i].tensor.storage()->requires_grad = saved_flags[i];
  for (auto& p : result.model.parameters()) p.tensor.storage()->requires_grad = true;
  return result;
}

void write_trace_csv(const fs::path& path, const std::vector<EpochStats>& trace) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "epoch,train_loss,train_mse,penalty,val_mse\n";
  for (const auto& e : trace)
    out << e.epoch << "," << format_double(e.train_loss) << "," << format_double(e.train_mse) << ","
        << format_double(e.penalty) << "," << (std::isnan(e.val_mse) ? std::string("nan") : format_double(e.val_mse))
        << "\n";
}

// ---------------------------------------------------------------- checkpoint

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

template <typename Real>
void put_record(std::string& out, const std::string& name, const Shape& shape, std::span<const Real> values) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) put_u32(out, static_cast<std::uint32_t>(e));
  for (Real v : values) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    out.append(b, 4);
  }
}

class Reader {
 public:
  Reader(std::string bytes, std::string where) : bytes_(std::move(bytes)), where_(std::move(where)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n) {
    need(n * 4);
    std::vector<float> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * 4);
    pos_ += n * 4;
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& msg) const { throw CheckpointError(where_ + ": corrupt checkpoint: " + msg); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated at byte " + std::to_string(pos_));
  }
  std::string bytes_;
  std::string where_;
  std::size_t pos_ = 0;
};

std::uint32_t kind_tag(ModelKind k) { return static_cast<std::uint32_t>(k); }

ModelKind kind_from_tag(std::uint32_t tag, const Reader& r) {
  if (tag > 2) r.fail("unknown model kind tag " + std::to_string(tag));
  return static_cast<ModelKind>(tag);
}

Reader open_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str(), path.string());
  if (r.str(4) != "FSCK") r.fail("bad magic (expected FSCK)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError(path.string() + ": checkpoint version " + std::to_string(version) +
                                 ", this build reads version " + std::to_string(kCheckpointVersion));
  return r;
}

}  // namespace

template <typename Real>
void save_checkpoint(const fs::path& path, const Model<Real>& model_in, const TrainConfig& train_cfg,
                     const AdamState<Real>* adam, std::size_t epoch, const std::string& rng_state) {
  auto& model = const_cast<Model<Real>&>(model_in);  // parameters() hands out shared handles; nothing is written
  nlohmann::json meta{{"model", to_json(model.config())},
                      {"train", to_json(train_cfg)},
                      {"epoch", epoch},
                      {"rng_state", rng_state},
                      {"score_scale", {{"offset", model.score_scale.offset}, {"scale", model.score_scale.scale}}}};
  if (adam != nullptr)
    meta["adam"] = {{"step", adam->step}, {"beta1", adam->beta1}, {"beta2", adam->beta2}, {"eps", adam->eps}};
  else
    meta["adam"] = nullptr;
  const std::string meta_text = meta.dump();

  auto params = model.parameters();
  auto buffers = model.buffers();
  std::string out = "FSCK";
  put_u32(out, kCheckpointVersion);
  put_u32(out, kind_tag(model.kind()));
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  std::size_t n_records = params.size() + buffers.size();
  if (adam != nullptr) {
    if (adam->m.size() != params.size())
      throw ContractError("save_checkpoint: optimizer state does not cover every parameter");
    n_records += 2 * params.size();
  }
  put_u32(out, static_cast<std::uint32_t>(n_records));
  for (const auto& p : params) put_record<Real>(out, p.name, p.tensor.shape(), p.tensor.data());
  for (const auto& b : buffers) put_record<Real>(out, b.name, {b.values->size()}, *b.values);
  if (adam != nullptr) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      put_record<Real>(out, "adam.m." + params[k].name, params[k].tensor.shape(), adam->m[k]);
      put_record<Real>(out, "adam.v." + params[k].name, params[k].tensor.shape(), adam->v[k]);
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write checkpoint '" + path.string() + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for '" + path.string() + "'");
}

ModelKind peek_checkpoint_kind(const fs::path& path) {
  Reader r = open_checkpoint(path);
  return kind_from_tag(r.u32(), r);
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const fs::path& path, std::optional<ModelKind> expected) {
  Reader r = open_checkpoint(path);
  const ModelKind kind = kind_from_tag(r.u32(), r);
  if (expected && *expected != kind)
    throw KindMismatchError(path.string() + ": checkpoint holds a " + to_string(kind) + " model, expected " +
                            to_string(*expected));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("metadata: ") + e.what());
  }

  std::map<std::string, std::pair<Shape, std::vector<float>>> records;
  const std::uint32_t n_records = r.u32();
  for (std::uint32_t i = 0; i < n_records; ++i) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("record '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u32());
    auto values = r.floats(numel(shape));
    if (!records.emplace(name, std::make_pair(shape, std::move(values))).second)
      r.fail("duplicate record '" + name + "'");
  }
  if (!r.done()) r.fail("trailing bytes after the last record");

  try {
    Rng unused(0);
    auto model_cfg = model_config_from_json(meta.at("model"));
    if (model_cfg.kind != kind) r.fail("kind tag disagrees with metadata");
    Checkpoint<Real> ck{Model<Real>(model_cfg, unused), train_config_from_json(meta.at("train")), std::nullopt,
                        meta.at("epoch").get<std::size_t>(), meta.at("rng_state").get<std::string>()};
    ck.model.score_scale = {meta.at("score_scale").at("offset").get<double>(),
                            meta.at("score_scale").at("scale").get<double>()};

    auto take = [&](const std::string& name, const Shape& shape) -> std::vector<float>& {
      auto it = records.find(name);
      if (it == records.end()) r.fail("missing record '" + name + "'");
      if (it->second.first != shape)
        r.fail("record '" + name + "' has shape " + shape_str(it->second.first) + ", expected " + shape_str(shape));
      return it->second.second;
    };
    std::size_t used = 0;
    auto params = ck.model.parameters();
    for (auto& p : params) {
      const auto& v = take(p.name, p.tensor.shape());
      std::transform(v.begin(), v.end(), p.tensor.mutable_data().begin(), [](float f) { return Real(f); });
      ++used;
    }
    for (auto& b : ck.model.buffers()) {
      const auto& v = take(b.name, {b.values->size()});
      std::transform(v.begin(), v.end(), b.values->begin(), [](float f) { return Real(f); });
      ++used;
    }
    if (!meta.at("adam").is_null()) {
      AdamState<Real> adam;
      adam.step = meta["adam"].at("step").get<std::uint64_t>();
      adam.beta1 = meta["adam"].at("beta1").get<double>();
      adam.beta2 = meta["adam"].at("beta2").get<double>();
      adam.eps = meta["adam"].at("eps").get<double>();
      for (auto& p : params) {
        const auto& m = take("adam.m." + p.name, p.tensor.shape());
        const auto& v = take("adam.v." + p.name, p.tensor.shape());
        adam.m.emplace_back(m.begin(), m.end());
        adam.v.emplace_back(v.begin(), v.end());
        used += 2;
      }
      ck.adam = std::move(adam);
    }
    if (used != records.size()) r.fail(std::to_string(records.size() - used) + " unexpected record(s)");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("metadata: ") + e.what());
  } catch (const ContractError& e) {
    r.fail(std::string("metadata: ") + e.what());
  }
}

#define FSKATE_INSTANTIATE_TRAINING(R)                                                                             \
  template struct AdamState<R>;                                                                                    \
  template void adam_step<R>(std::span<Tensor<R>>, AdamState<R>&, double);                                         \
  template LossTerms<R> regression_loss<R>(Tape<R>&, const Tensor<R>&, double, const Tensor<R>*, double);          \
  template BatchStats batch_gradient<R>(Model<R>&, std::span<Tensor<R>>, std::span<const Tensor<R>* const>,        \
                                        std::span<const double>, std::span<const std::string* const>,              \
                                        const TrainConfig&, Rng&);                                                 \
  template TrainResult<R> train<R>(const Dataset&, const ModelConfig&, const TrainConfig&, const ProgressFn&,      \
                                   const Model<R>*);                                                               \
  template void save_checkpoint<R>(const fs::path&, const Model<R>&, const TrainConfig&, const AdamState<R>*,      \
                                   std::size_t, const std::string&);                                               \
  template Checkpoint<R> load_checkpoint<R>(const fs::path&, std::optional<ModelKind>);

FSKATE_INSTANTIATE_TRAINING(float)
FSKATE_INSTANTIATE_TRAINING(double)

}  // namespace fskate
