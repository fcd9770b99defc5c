// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors
//
// fskate: train, evaluate and inspect skating-score regressors over
// precomputed clip-feature sequences. Links only the C interface.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fskate/fskate.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
  std::string message;
};

void check(fsk_status st, const std::string& context = {}, int code = kExitRuntime) {
  if (st == FSK_OK) return;
  std::string msg = std::string(fsk_status_name(st)) + ": ";
  if (!context.empty()) msg += context + ": ";
  throw Failure{code, msg + fsk_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};

using Options = Handle<fsk_options, fsk_options_free>;
using DatasetHandle = Handle<fsk_dataset, fsk_dataset_free>;
using ModelHandle = Handle<fsk_model, fsk_model_free>;
using AnalysisHandle = Handle<fsk_analysis, fsk_analysis_free>;

std::string default_out_dir() {
  const char* env = std::getenv("FSKATE_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

/// Option values collected from flags, applied through fsk_options_set so
/// every value is validated before any file is touched.
struct Settings {
  std::map<std::string, std::string> values;
  std::vector<std::string> raw;  // --set key=value

  void apply(fsk_options* opts) const {
    for (const auto& [k, v] : values) check(fsk_options_set(opts, k.c_str(), v.c_str()), "--" + k, kExitUsage);
    for (const auto& kv : raw) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw Failure{kExitUsage, "--set expects key=value, got '" + kv + "'"};
      check(fsk_options_set(opts, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv, kExitUsage);
    }
    check(fsk_options_validate(opts), {}, kExitUsage);
  }
};

template <typename T>
void bind(CLI::App* app, Settings& s, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<T>(
      flag, [&s, key](const T& v) { s.values[key] = CLI::detail::to_string(v); }, help);
}

void bind_str(CLI::App* app, Settings& s, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&s, key](const std::string& v) { s.values[key] = v; }, help);
}

std::string fmt(double v, int precision = 4) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

void progress(void* user, size_t epoch, double train_loss, double train_mse, double penalty, double val_mse) {
  const auto total = *static_cast<const std::size_t*>(user);
  std::fprintf(stderr, "epoch %4zu/%zu  loss %.5f  train_mse %.4f  penalty %.5f  val_mse %s\n", epoch, total,
               train_loss, train_mse, penalty, fmt(val_mse).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fskate: skating-score regression over clip-feature sequences"};
  app.set_version_flag("--version", std::string(fsk_version()));
  app.require_subcommand(1);

  // train
  Settings train_set;
  std::string train_manifest, train_out, train_ckpt;
  std::size_t train_epochs_echo = 250;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train a model on the manifest's train split");
  train->add_option("--manifest", train_manifest, "dataset manifest CSV (id,path,tes,pcs,split)")->required();
  train->add_option("--out", train_out, "output directory (default: $FSKATE_OUT_DIR or .)");
  train->add_option("--checkpoint", train_ckpt, "checkpoint path (default: <out>/model.fsck)");
  bind_str(train, train_set, "--model", "model", "slstm | mlstm | fused (default slstm)");
  bind_str(train, train_set, "--target", "target", "tes | pcs (default pcs)");
  bind<std::uint64_t>(train, train_set, "--seed", "seed", "root seed for init, shuffle and dropout");
  bind<double>(train, train_set, "--lr", "lr", "Adam learning rate (default 1e-4)");
  bind<std::size_t>(train, train_set, "--batch-size", "batch_size", "videos per batch (default 32)");
  train->add_option_function<std::size_t>(
      "--epochs",
      [&](const std::size_t& v) {
        train_set.values["epochs"] = std::to_string(v);
        train_epochs_echo = v;
      },
      "epochs (default 250)");
  bind<double>(train, train_set, "--dropout", "dropout", "head dropout probability (default 0.7)");
  bind<double>(train, train_set, "--penalty-weight", "penalty_weight", "attention penalty weight (default 1)");
  bind<double>(train, train_set, "--val-fraction", "val_fraction", "held-out share of train videos (default 0.1)");
  bind_str(train, train_set, "--precision", "precision", "float | double (default float)");
  bind<std::size_t>(train, train_set, "--att-hidden", "att_hidden", "attention hidden width d1 (default 1024)");
  bind<std::size_t>(train, train_set, "--att-rows", "att_rows", "attention rows d2 (default 40)");
  bind<std::size_t>(train, train_set, "--slstm-hidden", "slstm_hidden", "S-LSTM hidden width (default 256)");
  bind_str(train, train_set, "--branches", "branches", "M-LSTM branches, k:stride:cell,... with cell skip|lstm");
  bind<std::size_t>(train, train_set, "--conv-channels", "conv_channels", "conv output channels (default 256)");
  bind<std::size_t>(train, train_set, "--mlstm-hidden", "mlstm_hidden", "M-LSTM cell width (default 256)");
  bind_str(train, train_set, "--head-hidden", "head_hidden", "regression head widths, e.g. 256 or 128,64");
  bind_str(train, train_set, "--gate-mode", "gate_mode", "skip-cell output gate: literal | swapped");
  bind_str(train, train_set, "--init-slstm", "init_slstm", "S-LSTM checkpoint seeding a fused model");
  bind_str(train, train_set, "--init-mlstm", "init_mlstm", "M-LSTM checkpoint seeding a fused model");
  train->add_flag_function(
      "--freeze-trunks", [&](std::int64_t) { train_set.values["freeze_trunks"] = "1"; },
      "fused model: optimize only the head");
  train->add_flag_function(
      "--raw-targets", [&](std::int64_t) { train_set.values["standardize_targets"] = "0"; },
      "regress raw scores instead of z-scored ones");
  train->add_option("--set", train_set.raw, "extra option key=value (repeatable)");
  train->add_flag("--quiet,-q", quiet, "no per-epoch progress");

  // eval
  std::string eval_manifest, eval_ckpt, eval_kind, eval_target, eval_split = "test", eval_out, eval_preds;
  std::size_t workers = 1;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  eval->add_option("--manifest", eval_manifest, "dataset manifest CSV")->required();
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--model", eval_kind, "expected model kind; a different checkpoint kind is an error");
  eval->add_option("--target", eval_target, "tes | pcs (default: the checkpoint's target)");
  eval->add_option("--split", eval_split, "train | test (default test)");
  eval->add_option("--out", eval_out, "output directory (default: $FSKATE_OUT_DIR or .)");
  eval->add_option("--predictions", eval_preds, "prediction dump (default: <out>/predictions.csv)");
  eval->add_option("--workers", workers, "parallel evaluation workers")->check(CLI::Range(1, 256));

  // predict
  std::string pred_ckpt, pred_features, pred_attention, pred_kind;
  auto* predict = app.add_subcommand("predict", "score one feature file");
  predict->add_option("--checkpoint", pred_ckpt, "model checkpoint")->required();
  predict->add_option("--features", pred_features, "FSFV feature file")->required();
  predict->add_option("--model", pred_kind, "expected model kind");
  predict->add_option("--attention", pred_attention,
                      "attention CSV for attention-bearing models (default: <out>/<id>.attention.csv)");
  std::string pred_out;
  predict->add_option("--out", pred_out, "output directory (default: $FSKATE_OUT_DIR or .)");

  // synth
  Settings synth_set;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic benchmark");
  synth->add_option("--out", synth_out, "output directory")->required();
  bind<std::uint64_t>(synth, synth_set, "--seed", "seed", "generator seed");
  bind<std::size_t>(synth, synth_set, "--n-videos", "n_videos", "number of videos (default 500)");
  bind<std::size_t>(synth, synth_set, "--n-train", "n_train", "train videos (default 400)");
  bind<std::size_t>(synth, synth_set, "--dim", "dim", "feature width (default 32)");
  bind<std::size_t>(synth, synth_set, "--t-min", "t_min", "shortest video (default 80)");
  bind<std::size_t>(synth, synth_set, "--t-max", "t_max", "longest video (default 120)");
  bind<std::size_t>(synth, synth_set, "--events-min", "events_min", "fewest planted events (default 2)");
  bind<std::size_t>(synth, synth_set, "--events-max", "events_max", "most planted events (default 6)");
  bind<double>(synth, synth_set, "--noise", "noise", "i.i.d. noise level (default 0.3)");
  synth->add_option("--set", synth_set.raw, "extra generator option key=value (repeatable)");

  // analyze
  std::string scores_csv, group_by = "match", analyze_out;
  auto* analyze = app.add_subcommand("analyze", "per-group TES vs PCS rank correlations");
  analyze->add_option("--scores", scores_csv, "score table CSV (match,player,tes,pcs)")->required();
  analyze->add_option("--group-by", group_by, "match | player")->check(CLI::IsMember({"match", "player"}));
  analyze->add_option("--out", analyze_out, "output CSV (default: <$FSKATE_OUT_DIR or .>/analysis_<group>.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) {
      Options opts;
      check(fsk_options_new(opts.out()));
      train_set.apply(opts.get());
      const fs::path out_dir = train_out.empty() ? default_out_dir() : train_out;
      const fs::path ckpt = train_ckpt.empty() ? out_dir / "model.fsck" : fs::path(train_ckpt);

      DatasetHandle data;
      check(fsk_dataset_load(train_manifest.c_str(), data.out()), train_manifest);
      ModelHandle model;
      check(fsk_train(data.get(), opts.get(), quiet ? nullptr : progress, &train_epochs_echo, model.out()));
      check(fsk_model_save(model.get(), ckpt.string().c_str()));
      check(fsk_model_write_trace(model.get(), (out_dir / "trace.csv").string().c_str()));
      check(fsk_model_write_run_config(model.get(), (out_dir / "run_config.json").string().c_str()));
      std::printf("checkpoint %s\ntrace      %s\nconfig     %s\n", ckpt.string().c_str(),
                  (out_dir / "trace.csv").string().c_str(), (out_dir / "run_config.json").string().c_str());
    } else if (*eval) {
      if (eval_split != "train" && eval_split != "test")
        throw Failure{kExitUsage, "--split must be train or test, got '" + eval_split + "'"};
      if (!eval_target.empty() && eval_target != "tes" && eval_target != "pcs")
        throw Failure{kExitUsage, "--target must be tes or pcs, got '" + eval_target + "'"};
      const fs::path out_dir = eval_out.empty() ? default_out_dir() : eval_out;
      const fs::path preds = eval_preds.empty() ? out_dir / "predictions.csv" : fs::path(eval_preds);

      ModelHandle model;
      check(fsk_model_load(eval_ckpt.c_str(), eval_kind.empty() ? nullptr : eval_kind.c_str(), nullptr, model.out()),
            eval_ckpt);
      const std::string target = eval_target.empty() ? fsk_model_target(model.get()) : eval_target;
      DatasetHandle data;
      check(fsk_dataset_load(eval_manifest.c_str(), data.out()), eval_manifest);
      fsk_report rep{};
      check(fsk_evaluate(model.get(), data.get(), eval_split.c_str(), target.c_str(), workers, &rep,
                         preds.string().c_str()));
      std::printf("%-10s %s\n", "model", fsk_model_kind(model.get()));
      std::printf("%-10s %s\n", "target", target.c_str());
      std::printf("%-10s %s\n", "split", eval_split.c_str());
      std::printf("%-10s %zu\n", "n", rep.n);
      std::printf("%-10s %s\n", "spearman", rep.correlation_defined ? fmt(rep.spearman).c_str() : "undefined");
      std::printf("%-10s %s\n", "kendall", rep.correlation_defined ? fmt(rep.kendall).c_str() : "undefined");
      std::printf("%-10s %s\n", "mse", fmt(rep.mse).c_str());
      if (!rep.correlation_defined) std::fprintf(stderr, "note: %s\n", rep.correlation_error);
    } else if (*predict) {
      ModelHandle model;
      check(fsk_model_load(pred_ckpt.c_str(), pred_kind.empty() ? nullptr : pred_kind.c_str(), nullptr, model.out()),
            pred_ckpt);
      std::string attention = pred_attention;
      const std::string kind = fsk_model_kind(model.get());
      if (attention.empty() && kind != "mlstm") {
        const fs::path out_dir = pred_out.empty() ? default_out_dir() : pred_out;
        attention = (out_dir / (fs::path(pred_features).stem().string() + ".attention.csv")).string();
      }
      double score = 0;
      check(fsk_predict_file(model.get(), pred_features.c_str(), &score, attention.empty() ? nullptr : attention.c_str()),
            pred_features);
      std::printf("%.6f\n", score);
      if (!attention.empty() && kind != "mlstm") std::fprintf(stderr, "attention %s\n", attention.c_str());
    } else if (*synth) {
      Options opts;
      check(fsk_options_new(opts.out()));
      synth_set.apply(opts.get());
      check(fsk_synth(opts.get(), synth_out.c_str()), synth_out);
      std::printf("manifest %s\n", (fs::path(synth_out) / "manifest.csv").string().c_str());
    } else if (*analyze) {
      const fs::path out = analyze_out.empty() ? fs::path(default_out_dir()) / ("analysis_" + group_by + ".csv")
                                               : fs::path(analyze_out);
      AnalysisHandle result;
      check(fsk_analyze(scores_csv.c_str(), group_by.c_str(), result.out()), scores_csv);
      check(fsk_analysis_write_csv(result.get(), out.string().c_str()));
      std::printf("%-16s %8s %8s %5s\n", group_by.c_str(), "rho", "tau", "n");
      for (std::size_t i = 0; i < fsk_analysis_group_count(result.get()); ++i) {
        const char* name = nullptr;
        double rho = 0, tau = 0;
        std::size_t n = 0;
        check(fsk_analysis_group(result.get(), i, &name, &rho, &tau, &n));
        std::printf("%-16s %8s %8s %5zu\n", name, fmt(rho).c_str(), fmt(tau).c_str(), n);
      }
      for (std::size_t i = 0; i < fsk_analysis_skipped_count(result.get()); ++i) {
        const char* name = nullptr;
        const char* reason = nullptr;
        std::size_t n = 0;
        check(fsk_analysis_skipped(result.get(), i, &name, &n, &reason));
        std::printf("skipped %s (n=%zu): %s\n", name, n, reason);
      }
      std::printf("wrote %s\n", out.string().c_str());
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "fskate: %s\n", f.message.c_str());
    return f.code;
  }
  return 0;
}
