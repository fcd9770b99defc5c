// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include "fskate/fskate.h"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <new>
#include <string>
#include <variant>

#include "data_io.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "models.hpp"
#include "training.hpp"

namespace fs = std::filesystem;
using namespace fskate;

namespace {

thread_local std::string g_last_error;

fsk_status fail(fsk_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
fsk_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return FSK_OK;
  } catch (const KindMismatchError& e) {
    return fail(FSK_ERR_KIND_MISMATCH, e.what());
  } catch (const CheckpointVersionError& e) {
    return fail(FSK_ERR_CHECKPOINT_VERSION, e.what());
  } catch (const CheckpointError& e) {
    return fail(FSK_ERR_CHECKPOINT, e.what());
  } catch (const SequenceTooShortError& e) {
    return fail(FSK_ERR_SEQUENCE_TOO_SHORT, e.what());
  } catch (const DimensionError& e) {
    return fail(FSK_ERR_DIMENSION, e.what());
  } catch (const ContractError& e) {
    return fail(FSK_ERR_INVALID_ARGUMENT, e.what());
  } catch (const IoError& e) {
    return fail(FSK_ERR_IO, e.what());
  } catch (const FormatError& e) {
    return fail(FSK_ERR_FORMAT, e.what());
  } catch (const ManifestError& e) {
    return fail(FSK_ERR_MANIFEST, e.what());
  } catch (const NonFiniteLossError& e) {
    return fail(FSK_ERR_NONFINITE_LOSS, e.what());
  } catch (const UndefinedCorrelationError& e) {
    return fail(FSK_ERR_UNDEFINED_CORRELATION, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(FSK_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(FSK_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FSK_ERR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractError(std::string(what) + " must not be NULL");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw ContractError("option " + key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ContractError("option " + key + ": expected a finite number, got '" + v + "'");
  return out;
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ContractError("option " + key + ": expected 0 or 1, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(parse_size(key, v.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (out.back() == 0) throw ContractError("option " + key + ": layer widths must be >= 1");
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

enum class Precision { f32, f64 };

Precision parse_precision(const std::string& v) {
  if (v == "float" || v == "f32") return Precision::f32;
  if (v == "double" || v == "f64") return Precision::f64;
  throw ContractError("precision must be float or double, got '" + v + "'");
}

}  // namespace

template <typename>
struct real_of;
template <typename R>
struct real_of<Checkpoint<R>> {
  using type = R;
};
template <typename C>
using real_of_t = typename real_of<C>::type;

struct fsk_options {
  ModelConfig model;
  TrainConfig train;
  SyntheticConfig synth;
  Precision precision = Precision::f32;
  std::string init_slstm;
  std::string init_mlstm;
};

struct fsk_dataset {
  Dataset data;
};

struct fsk_model {
  std::variant<Checkpoint<float>, Checkpoint<double>> ck;
  std::vector<EpochStats> trace;
  std::string kind_name;
  std::string target_name;

  template <typename Fn>
  decltype(auto) visit(Fn&& fn) const {
    return std::visit([&](auto& c) -> decltype(auto) { return fn(c); }, const_cast<fsk_model*>(this)->ck);
  }
  void refresh_names() {
    visit([&](auto& c) {
      kind_name = to_string(c.model.kind());
      target_name = to_string(c.train.target);
    });
  }
};

struct fsk_analysis {
  AnalysisResult result;
};

namespace {

using Setter = std::function<void(fsk_options&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [](auto member_of) {
      return [member_of](fsk_options& o, const std::string& k, const std::string& v) { member_of(o) = parse_size(k, v); };
    };
    auto real_field = [](auto member_of) {
      return [member_of](fsk_options& o, const std::string& k, const std::string& v) { member_of(o) = parse_real(k, v); };
    };
    // model
    t["model"] = [](fsk_options& o, const std::string&, const std::string& v) { o.model.kind = parse_model_kind(v); };
    t["att_hidden"] = size_field([](fsk_options& o) -> std::size_t& { return o.model.att_hidden; });
    t["att_rows"] = size_field([](fsk_options& o) -> std::size_t& { return o.model.att_rows; });
    t["slstm_hidden"] = size_field([](fsk_options& o) -> std::size_t& { return o.model.slstm_hidden; });
    t["conv_channels"] = size_field([](fsk_options& o) -> std::size_t& { return o.model.conv_channels; });
    t["mlstm_hidden"] = size_field([](fsk_options& o) -> std::size_t& { return o.model.mlstm_hidden; });
    t["branches"] = [](fsk_options& o, const std::string&, const std::string& v) {
      o.model.branches = parse_branch_spec(v);
    };
    t["head_hidden"] = [](fsk_options& o, const std::string& k, const std::string& v) {
      o.model.head_hidden = parse_sizes(k, v);
    };
    t["gate_mode"] = [](fsk_options& o, const std::string&, const std::string& v) {
      o.model.gate_mode = parse_gate_mode(v);
    };
    t["precision"] = [](fsk_options& o, const std::string&, const std::string& v) { o.precision = parse_precision(v); };
    // train
    t["target"] = [](fsk_options& o, const std::string&, const std::string& v) { o.train.target = parse_target(v); };
    t["lr"] = real_field([](fsk_options& o) -> double& { return o.train.learning_rate; });
    t["batch_size"] = size_field([](fsk_options& o) -> std::size_t& { return o.train.batch_size; });
    t["epochs"] = size_field([](fsk_options& o) -> std::size_t& { return o.train.epochs; });
    t["dropout"] = real_field([](fsk_options& o) -> double& { return o.train.dropout; });
    t["penalty_weight"] = real_field([](fsk_options& o) -> double& { return o.train.penalty_weight; });
    t["val_fraction"] = real_field([](fsk_options& o) -> double& { return o.train.val_fraction; });
    t["standardize_targets"] = [](fsk_options& o, const std::string& k, const std::string& v) {
      o.train.standardize_targets = parse_flag(k, v);
    };
    t["freeze_trunks"] = [](fsk_options& o, const std::string& k, const std::string& v) {
      o.train.freeze_trunks = parse_flag(k, v);
    };
    t["init_slstm"] = [](fsk_options& o, const std::string&, const std::string& v) { o.init_slstm = v; };
    t["init_mlstm"] = [](fsk_options& o, const std::string&, const std::string& v) { o.init_mlstm = v; };
    t["seed"] = [](fsk_options& o, const std::string& k, const std::string& v) {
      std::uint64_t s = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
      if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
        throw ContractError("option " + k + ": expected an unsigned 64-bit integer, got '" + v + "'");
      o.train.seed = s;
      o.synth.seed = s;
    };
    // synth
    t["n_videos"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.n_videos; });
    t["n_train"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.n_train; });
    t["t_min"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.t_min; });
    t["t_max"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.t_max; });
    t["dim"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.dim; });
    t["events_min"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.events_min; });
    t["events_max"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.events_max; });
    t["event_len_min"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.event_len_min; });
    t["event_len_max"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.event_len_max; });
    t["event_types"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.event_types; });
    t["n_matches"] = size_field([](fsk_options& o) -> std::size_t& { return o.synth.n_matches; });
    t["difficulty_min"] = real_field([](fsk_options& o) -> double& { return o.synth.difficulty_min; });
    t["difficulty_max"] = real_field([](fsk_options& o) -> double& { return o.synth.difficulty_max; });
    t["event_gain"] = real_field([](fsk_options& o) -> double& { return o.synth.event_gain; });
    t["tes_base"] = real_field([](fsk_options& o) -> double& { return o.synth.tes_base; });
    t["pcs_base"] = real_field([](fsk_options& o) -> double& { return o.synth.pcs_base; });
    t["pcs_amplitude"] = real_field([](fsk_options& o) -> double& { return o.synth.pcs_amplitude; });
    t["trend_amplitude"] = real_field([](fsk_options& o) -> double& { return o.synth.trend_amplitude; });
    t["quality_sharpness"] = real_field([](fsk_options& o) -> double& { return o.synth.quality_sharpness; });
    t["background_amplitude"] = real_field([](fsk_options& o) -> double& { return o.synth.background_amplitude; });
    t["noise"] = real_field([](fsk_options& o) -> double& { return o.synth.noise; });
    return t;
  }();
  return table;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ContractError("split must be train or test, got '" + s + "'");
}

/// Copies every parameter (and buffer) of `src` whose name starts with one
/// of `prefixes` into `dst`.
template <typename Real>
void copy_trunk(Model<Real>& dst, Model<Real>& src, std::initializer_list<const char*> prefixes, const std::string& from) {
  auto matches = [&](const std::string& name) {
    for (const char* p : prefixes)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  };
  std::map<std::string, Tensor<Real>> src_params;
  for (auto& p : src.parameters()) src_params.emplace(p.name, p.tensor);
  std::map<std::string, std::vector<Real>*> src_buffers;
  for (auto& b : src.buffers()) src_buffers.emplace(b.name, b.values);
  std::size_t copied = 0;
  for (auto& p : dst.parameters()) {
    if (!matches(p.name)) continue;
    auto it = src_params.find(p.name);
    if (it == src_params.end()) throw DimensionError(from + ": no parameter '" + p.name + "' to initialize from");
    if (it->second.shape() != p.tensor.shape())
      throw DimensionError(from + ": parameter '" + p.name + "' has shape " + shape_str(it->second.shape()) +
                           ", the fused model needs " + shape_str(p.tensor.shape()));
    std::ranges::copy(it->second.data(), p.tensor.mutable_data().begin());
    ++copied;
  }
  for (auto& b : dst.buffers()) {
    if (!matches(b.name)) continue;
    auto it = src_buffers.find(b.name);
    if (it == src_buffers.end() || it->second->size() != b.values->size())
      throw DimensionError(from + ": buffer '" + b.name + "' is missing or has the wrong size");
    *b.values = *it->second;
  }
  if (copied == 0) throw DimensionError(from + ": holds no trunk parameters");
}

template <typename Real>
fsk_model* run_training(const fsk_dataset& data, const fsk_options& opts, fsk_progress_fn progress, void* user) {
  ModelConfig mc = opts.model;
  mc.input_dim = data.data.dim;
  validate(mc);
  const bool has_init = !opts.init_slstm.empty() || !opts.init_mlstm.empty();
  if (has_init && mc.kind != ModelKind::fused)
    throw ContractError("init_slstm/init_mlstm only apply to the fused model");
  if (opts.train.freeze_trunks && (opts.init_slstm.empty() || opts.init_mlstm.empty()))
    throw ContractError("freeze_trunks needs both init_slstm and init_mlstm");

  std::optional<Model<Real>> init;
  if (has_init) {
    Rng init_rng = Rng::substream(opts.train.seed, "init");
    init.emplace(mc, init_rng);
    if (!opts.init_slstm.empty()) {
      auto ck = load_checkpoint<Real>(opts.init_slstm, ModelKind::slstm);
      copy_trunk(*init, ck.model, {"att.", "slstm."}, opts.init_slstm);
    }
    if (!opts.init_mlstm.empty()) {
      auto ck = load_checkpoint<Real>(opts.init_mlstm, ModelKind::mlstm);
      copy_trunk(*init, ck.model, {"mlstm."}, opts.init_mlstm);
    }
  }
  ProgressFn cb;
  if (progress != nullptr)
    cb = [=](const EpochStats& s) { progress(user, s.epoch, s.train_loss, s.train_mse, s.penalty, s.val_mse); };
  auto result = train<Real>(data.data, mc, opts.train, cb, init ? &*init : nullptr);
  auto* m = new fsk_model{Checkpoint<Real>{std::move(result.model), opts.train, std::move(result.adam),
                                           result.best_epoch, std::move(result.rng_state)},
                          std::move(result.trace), {}, {}};
  m->refresh_names();
  return m;
}

template <typename Real>
void write_attention_csv(const fs::path& path, const Tensor<Real>& attention) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const auto data = attention.data();
  const std::size_t rows = attention.rows(), cols = attention.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << format_double(double(data[r * cols + c]));
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

extern "C" {

const char* fsk_version(void) { return "0.1.0"; }

const char* fsk_status_name(fsk_status status) {
  switch (status) {
    case FSK_OK: return "ok";
    case FSK_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FSK_ERR_IO: return "i/o error";
    case FSK_ERR_FORMAT: return "format error";
    case FSK_ERR_MANIFEST: return "manifest error";
    case FSK_ERR_CHECKPOINT: return "corrupt checkpoint";
    case FSK_ERR_CHECKPOINT_VERSION: return "checkpoint version mismatch";
    case FSK_ERR_KIND_MISMATCH: return "model kind mismatch";
    case FSK_ERR_NONFINITE_LOSS: return "non-finite loss";
    case FSK_ERR_UNDEFINED_CORRELATION: return "undefined correlation";
    case FSK_ERR_DIMENSION: return "dimension mismatch";
    case FSK_ERR_SEQUENCE_TOO_SHORT: return "sequence too short";
    case FSK_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* fsk_last_error(void) { return g_last_error.c_str(); }

fsk_status fsk_options_new(fsk_options** out) {
  return guarded([&] {
    require(out != nullptr, "out");
    *out = new fsk_options{};
  });
}

void fsk_options_free(fsk_options* opts) { delete opts; }

fsk_status fsk_options_set(fsk_options* opts, const char* key, const char* value) {
  return guarded([&] {
    require(opts != nullptr, "opts");
    require(key != nullptr, "key");
    require(value != nullptr, "value");
    auto it = setters().find(key);
    if (it == setters().end()) throw ContractError(std::string("unknown option '") + key + "'");
    it->second(*opts, key, value);
  });
}

fsk_status fsk_options_validate(const fsk_options* opts) {
  return guarded([&] {
    require(opts != nullptr, "opts");
    ModelConfig mc = opts->model;
    mc.input_dim = 1;
    validate(mc);
    validate(opts->train);
    validate(opts->synth);
  });
}

fsk_status fsk_synth(const fsk_options* opts, const char* out_dir) {
  return guarded([&] {
    require(opts != nullptr, "opts");
    require(out_dir != nullptr, "out_dir");
    write_synthetic(out_dir, generate_synthetic(opts->synth));
  });
}

fsk_status fsk_dataset_load(const char* manifest_path, fsk_dataset** out) {
  return guarded([&] {
    require(manifest_path != nullptr, "manifest_path");
    require(out != nullptr, "out");
    *out = new fsk_dataset{load_dataset(manifest_path)};
  });
}

void fsk_dataset_free(fsk_dataset* data) { delete data; }
size_t fsk_dataset_size(const fsk_dataset* data) { return data ? data->data.samples.size() : 0; }
size_t fsk_dataset_dim(const fsk_dataset* data) { return data ? data->data.dim : 0; }

fsk_status fsk_train(const fsk_dataset* data, const fsk_options* opts, fsk_progress_fn progress, void* user,
                     fsk_model** out) {
  return guarded([&] {
    require(data != nullptr, "data");
    require(opts != nullptr, "opts");
    require(out != nullptr, "out");
    *out = opts->precision == Precision::f64 ? run_training<double>(*data, *opts, progress, user)
                                             : run_training<float>(*data, *opts, progress, user);
  });
}

fsk_status fsk_model_write_trace(const fsk_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr, "model");
    require(path != nullptr, "path");
    write_trace_csv(path, model->trace);
  });
}

fsk_status fsk_model_write_run_config(const fsk_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr, "model");
    require(path != nullptr, "path");
    nlohmann::json j = model->visit([](auto& c) {
      using Real = real_of_t<std::decay_t<decltype(c)>>;
      return nlohmann::json{{"model", to_json(c.model.config())},
                            {"train", to_json(c.train)},
                            {"precision", sizeof(Real) == 8 ? "double" : "float"},
                            {"best_epoch", c.epoch},
                            {"score_scale", {{"offset", c.model.score_scale.offset}, {"scale", c.model.score_scale.scale}}}};
    });
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    f << j.dump(2) << "\n";
  });
}

fsk_status fsk_model_load(const char* path, const char* expected_kind, const char* precision, fsk_model** out) {
  return guarded([&] {
    require(path != nullptr, "path");
    require(out != nullptr, "out");
    std::optional<ModelKind> expected;
    if (expected_kind != nullptr) expected = parse_model_kind(expected_kind);
    const Precision prec = precision != nullptr ? parse_precision(precision) : Precision::f32;
    fsk_model* m = prec == Precision::f64 ? new fsk_model{load_checkpoint<double>(path, expected), {}, {}, {}}
                                          : new fsk_model{load_checkpoint<float>(path, expected), {}, {}, {}};
    m->refresh_names();
    *out = m;
  });
}

fsk_status fsk_model_save(const fsk_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr, "model");
    require(path != nullptr, "path");
    model->visit([&](auto& c) {
      save_checkpoint(path, c.model, c.train, c.adam ? &*c.adam : nullptr, c.epoch, c.rng_state);
    });
  });
}

void fsk_model_free(fsk_model* model) { delete model; }
const char* fsk_model_kind(const fsk_model* model) { return model ? model->kind_name.c_str() : ""; }
const char* fsk_model_target(const fsk_model* model) { return model ? model->target_name.c_str() : ""; }
size_t fsk_model_input_dim(const fsk_model* model) {
  return model ? model->visit([](auto& c) { return c.model.config().input_dim; }) : 0;
}

fsk_status fsk_predict_file(const fsk_model* model, const char* features_path, double* score,
                            const char* attention_csv) {
  return guarded([&] {
    require(model != nullptr, "model");
    require(features_path != nullptr, "features_path");
    require(score != nullptr, "score");
    const auto seq = read_features(features_path);
    model->visit([&](auto& c) {
      using Real = real_of_t<std::decay_t<decltype(c)>>;
      if (seq.dim != c.model.config().input_dim)
        throw DimensionError(std::string(features_path) + ": feature width " + std::to_string(seq.dim) +
                             ", the model expects " + std::to_string(c.model.config().input_dim));
      auto x = features_tensor<Real>(seq.length, seq.dim, seq.values);
      auto out = c.model.evaluate(x);
      const double s = c.model.score_scale.offset + c.model.score_scale.scale * double(out.score.item());
      if (attention_csv != nullptr && out.attention.defined()) write_attention_csv(attention_csv, out.attention);
      *score = s;
    });
  });
}

fsk_status fsk_evaluate(const fsk_model* model, const fsk_dataset* data, const char* split, const char* target,
                        size_t workers, fsk_report* report, const char* predictions_csv) {
  return guarded([&] {
    require(model != nullptr, "model");
    require(data != nullptr, "data");
    require(split != nullptr, "split");
    require(target != nullptr, "target");
    require(report != nullptr, "report");
    const Split sp = parse_split(split);
    const Target tg = parse_target(target);
    EvalReport r = model->visit([&](auto& c) { return evaluate(c.model, data->data, sp, tg, workers ? workers : 1); });
    if (predictions_csv != nullptr) write_predictions_csv(predictions_csv, r.predictions);
    fsk_report out{};
    out.n = r.n;
    out.mse = r.mse;
    out.correlation_defined = r.spearman.has_value() && r.kendall.has_value();
    out.spearman = r.spearman.value_or(std::nan(""));
    out.kendall = r.kendall.value_or(std::nan(""));
    std::strncpy(out.correlation_error, r.correlation_error.c_str(), sizeof(out.correlation_error) - 1);
    *report = out;
  });
}

fsk_status fsk_analyze(const char* scores_csv, const char* group_by, fsk_analysis** out) {
  return guarded([&] {
    require(scores_csv != nullptr, "scores_csv");
    require(group_by != nullptr, "group_by");
    require(out != nullptr, "out");
    *out = new fsk_analysis{analyze_scores(load_score_table(scores_csv), parse_group_by(group_by))};
  });
}

void fsk_analysis_free(fsk_analysis* analysis) { delete analysis; }
size_t fsk_analysis_group_count(const fsk_analysis* a) { return a ? a->result.groups.size() : 0; }
size_t fsk_analysis_skipped_count(const fsk_analysis* a) { return a ? a->result.skipped.size() : 0; }

fsk_status fsk_analysis_group(const fsk_analysis* a, size_t index, const char** name, double* rho, double* tau,
                              size_t* n) {
  return guarded([&] {
    require(a != nullptr, "analysis");
    if (index >= a->result.groups.size()) throw ContractError("group index out of range");
    const auto& g = a->result.groups[index];
    if (name) *name = g.group.c_str();
    if (rho) *rho = g.rho;
    if (tau) *tau = g.tau;
    if (n) *n = g.n;
  });
}

fsk_status fsk_analysis_skipped(const fsk_analysis* a, size_t index, const char** name, size_t* n,
                                const char** reason) {
  return guarded([&] {
    require(a != nullptr, "analysis");
    if (index >= a->result.skipped.size()) throw ContractError("skipped index out of range");
    const auto& s = a->result.skipped[index];
    if (name) *name = s.group.c_str();
    if (n) *n = s.n;
    if (reason) *reason = s.reason.c_str();
  });
}

fsk_status fsk_analysis_write_csv(const fsk_analysis* a, const char* path) {
  return guarded([&] {
    require(a != nullptr, "analysis");
    require(path != nullptr, "path");
    write_analysis_csv(path, a->result);
  });
}

}  // extern "C"
