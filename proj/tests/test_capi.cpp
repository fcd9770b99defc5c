// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <fskate/fskate.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fskate_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Run cli(const std::string& args) {
  const std::string cmd = std::string("\"") + FSKATE_CLI_PATH + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct Options {
  fsk_options* p = nullptr;
  Options() { EXPECT_EQ(fsk_options_new(&p), FSK_OK); }
  ~Options() { fsk_options_free(p); }
  void set(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) ASSERT_EQ(fsk_options_set(p, k.c_str(), v.c_str()), FSK_OK) << k;
  }
};

using DatasetPtr = std::unique_ptr<fsk_dataset, decltype(&fsk_dataset_free)>;
using ModelPtr = std::unique_ptr<fsk_model, decltype(&fsk_model_free)>;
using AnalysisPtr = std::unique_ptr<fsk_analysis, decltype(&fsk_analysis_free)>;

const std::map<std::string, std::string> kSmallSynth{{"n_videos", "16"},  {"n_train", "12"}, {"t_min", "20"},
                                                     {"t_max", "30"},     {"dim", "8"},      {"events_min", "1"},
                                                     {"events_max", "2"}, {"seed", "4"}};

const std::map<std::string, std::string> kSmallModel{
    {"att_hidden", "8"},      {"att_rows", "4"},      {"slstm_hidden", "12"}, {"branches", "3:1:skip,5:2:lstm"},
    {"conv_channels", "6"},   {"mlstm_hidden", "8"},  {"head_hidden", "12"},  {"lr", "1e-2"},
    {"batch_size", "4"},      {"dropout", "0"},       {"penalty_weight", "0.1"}, {"target", "tes"}};

fs::path synth_dir(const std::string& name) {
  auto dir = scratch(name);
  Options o;
  o.set(kSmallSynth);
  EXPECT_EQ(fsk_synth(o.p, dir.string().c_str()), FSK_OK) << fsk_last_error();
  return dir;
}

ModelPtr train_model(const fsk_dataset* data, const std::string& kind, const std::string& epochs,
                     std::vector<double>* losses = nullptr) {
  Options o;
  o.set(kSmallModel);
  o.set({{"model", kind}, {"epochs", epochs}});
  fsk_model* m = nullptr;
  auto cb = [](void* user, size_t, double loss, double, double, double) {
    if (user != nullptr) static_cast<std::vector<double>*>(user)->push_back(loss);
  };
  EXPECT_EQ(fsk_train(data, o.p, cb, losses, &m), FSK_OK) << fsk_last_error();
  return ModelPtr(m, fsk_model_free);
}

const std::string kCliModelFlags =
    "--att-hidden 8 --att-rows 4 --slstm-hidden 12 --head-hidden 12 --conv-channels 6 --mlstm-hidden 8 "
    "--branches 3:1:skip,5:2:lstm --dropout 0 --val-fraction 0 -q ";

}  // namespace

// ---------------------------------------------------------------- C API

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STRNE(fsk_version(), "");
  EXPECT_STREQ(fsk_status_name(FSK_OK), "ok");
  EXPECT_STRNE(fsk_status_name(FSK_ERR_KIND_MISMATCH), fsk_status_name(FSK_ERR_CHECKPOINT));
  EXPECT_STRNE(fsk_status_name(static_cast<fsk_status>(99)), "");
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(fsk_options_new(nullptr), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_STRNE(fsk_last_error(), "");
  fsk_dataset* d = nullptr;
  EXPECT_EQ(fsk_dataset_load(nullptr, &d), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_train(nullptr, nullptr, nullptr, nullptr, nullptr), FSK_ERR_INVALID_ARGUMENT);
  double score = 0;
  EXPECT_EQ(fsk_predict_file(nullptr, "x", &score, nullptr), FSK_ERR_INVALID_ARGUMENT);
  fsk_options_free(nullptr);
  fsk_dataset_free(nullptr);
  fsk_model_free(nullptr);
  fsk_analysis_free(nullptr);
}

TEST(CApi, OptionsValidateKeysAndValues) {
  Options o;
  EXPECT_EQ(fsk_options_set(o.p, "no_such_key", "1"), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(fsk_last_error()).find("no_such_key"), std::string::npos);
  EXPECT_EQ(fsk_options_set(o.p, "epochs", "ten"), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_options_set(o.p, "lr", "1e-3x"), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_options_set(o.p, "model", "cnn"), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_options_set(o.p, "branches", "3:1:gru"), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_options_validate(o.p), FSK_OK);
  EXPECT_EQ(fsk_options_set(o.p, "dropout", "1.5"), FSK_OK);
  EXPECT_EQ(fsk_options_validate(o.p), FSK_ERR_INVALID_ARGUMENT);
}

TEST(CApi, SynthLoadTrainPredictEvaluate) {
  auto dir = synth_dir("pipeline");
  EXPECT_TRUE(fs::exists(dir / "events.json"));
  EXPECT_TRUE(fs::exists(dir / "scores.csv"));
  fsk_dataset* raw = nullptr;
  ASSERT_EQ(fsk_dataset_load((dir / "manifest.csv").string().c_str(), &raw), FSK_OK) << fsk_last_error();
  DatasetPtr data(raw, fsk_dataset_free);
  EXPECT_EQ(fsk_dataset_size(data.get()), 16u);
  EXPECT_EQ(fsk_dataset_dim(data.get()), 8u);

  std::vector<double> losses;
  auto model = train_model(data.get(), "slstm", "3", &losses);
  ASSERT_TRUE(model);
  EXPECT_EQ(losses.size(), 3u);
  EXPECT_STREQ(fsk_model_kind(model.get()), "slstm");
  EXPECT_STREQ(fsk_model_target(model.get()), "tes");
  EXPECT_EQ(fsk_model_input_dim(model.get()), 8u);

  fsk_report rep{};
  const auto preds = dir / "out" / "preds.csv";
  ASSERT_EQ(fsk_evaluate(model.get(), data.get(), "test", "tes", 2, &rep, preds.string().c_str()), FSK_OK)
      << fsk_last_error();
  EXPECT_EQ(rep.n, 4u);
  EXPECT_GE(rep.mse, 0.0);
  ASSERT_EQ(rep.correlation_defined, 1);
  EXPECT_LE(std::abs(rep.spearman), 1.0);

  // The dump agrees with single-file prediction.
  std::istringstream lines(slurp(preds));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "id,target,prediction");
  std::getline(lines, line);
  const auto id = line.substr(0, line.find(','));
  const double dumped = std::stod(line.substr(line.rfind(',') + 1));
  double score = 0;
  const auto att = dir / "out" / "att.csv";
  ASSERT_EQ(fsk_predict_file(model.get(), (dir / "features" / (id + ".fsfv")).string().c_str(), &score,
                             att.string().c_str()),
            FSK_OK)
      << fsk_last_error();
  EXPECT_EQ(score, dumped);
  std::istringstream att_lines(slurp(att));
  std::size_t rows = 0;
  while (std::getline(att_lines, line))
    if (!line.empty()) ++rows;
  EXPECT_EQ(rows, 4u);

  EXPECT_EQ(fsk_evaluate(model.get(), data.get(), "val", "tes", 1, &rep, nullptr), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_evaluate(model.get(), data.get(), "test", "total", 1, &rep, nullptr), FSK_ERR_INVALID_ARGUMENT);
}

TEST(CApi, CheckpointErrorsAreTyped) {
  auto dir = synth_dir("ckpt");
  fsk_dataset* raw = nullptr;
  ASSERT_EQ(fsk_dataset_load((dir / "manifest.csv").string().c_str(), &raw), FSK_OK);
  DatasetPtr data(raw, fsk_dataset_free);
  auto model = train_model(data.get(), "slstm", "1");
  const auto path = (dir / "m.fsck").string();
  ASSERT_EQ(fsk_model_save(model.get(), path.c_str()), FSK_OK);

  fsk_model* loaded = nullptr;
  ASSERT_EQ(fsk_model_load(path.c_str(), "slstm", nullptr, &loaded), FSK_OK);
  ModelPtr keep(loaded, fsk_model_free);
  fsk_report a{}, b{};
  ASSERT_EQ(fsk_evaluate(model.get(), data.get(), "train", "tes", 1, &a, nullptr), FSK_OK);
  ASSERT_EQ(fsk_evaluate(keep.get(), data.get(), "train", "tes", 1, &b, nullptr), FSK_OK);
  EXPECT_EQ(a.mse, b.mse);

  fsk_model* other = nullptr;
  EXPECT_EQ(fsk_model_load(path.c_str(), "mlstm", nullptr, &other), FSK_ERR_KIND_MISMATCH);
  EXPECT_EQ(other, nullptr);
  EXPECT_EQ(fsk_model_load(path.c_str(), "cnn", nullptr, &other), FSK_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(fsk_model_load((dir / "none.fsck").string().c_str(), nullptr, nullptr, &other), FSK_ERR_IO);

  const auto bytes = slurp(path);
  {
    std::ofstream(dir / "cut.fsck", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_EQ(fsk_model_load((dir / "cut.fsck").string().c_str(), nullptr, nullptr, &other), FSK_ERR_CHECKPOINT);
  auto v2 = bytes;
  v2[4] = 7;
  {
    std::ofstream(dir / "v2.fsck", std::ios::binary) << v2;
  }
  EXPECT_EQ(fsk_model_load((dir / "v2.fsck").string().c_str(), nullptr, nullptr, &other), FSK_ERR_CHECKPOINT_VERSION);
}

TEST(CApi, ShapeErrorsAreTyped) {
  auto dir = synth_dir("shapes");
  fsk_dataset* raw = nullptr;
  ASSERT_EQ(fsk_dataset_load((dir / "manifest.csv").string().c_str(), &raw), FSK_OK);
  DatasetPtr data(raw, fsk_dataset_free);
  auto model = train_model(data.get(), "mlstm", "1");

  // Hand-written FSFV files: a 3-step sequence and a wrong-width sequence.
  auto write_fsfv = [](const fs::path& p, std::uint32_t len, std::uint32_t dim) {
    std::ofstream out(p, std::ios::binary);
    const std::uint32_t header[4] = {0x56465346u, 1u, len, dim};  // "FSFV" little-endian
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    const std::vector<float> zeros(std::size_t(len) * dim, 0.25f);
    out.write(reinterpret_cast<const char*>(zeros.data()), std::streamsize(zeros.size() * 4));
  };
  write_fsfv(dir / "short.fsfv", 3, 8);
  write_fsfv(dir / "wide.fsfv", 12, 9);
  double score = 0;
  EXPECT_EQ(fsk_predict_file(model.get(), (dir / "short.fsfv").string().c_str(), &score, nullptr),
            FSK_ERR_SEQUENCE_TOO_SHORT);
  EXPECT_EQ(fsk_predict_file(model.get(), (dir / "wide.fsfv").string().c_str(), &score, nullptr), FSK_ERR_DIMENSION);
  {
    std::ofstream(dir / "junk.fsfv", std::ios::binary) << "JUNKJUNKJUNKJUNK";
  }
  EXPECT_EQ(fsk_predict_file(model.get(), (dir / "junk.fsfv").string().c_str(), &score, nullptr), FSK_ERR_FORMAT);
  {
    std::ofstream(dir / "bad.csv") << "id,path,tes,pcs,split\na,x.fsfv,1,2,val\n";
  }
  fsk_dataset* bad = nullptr;
  EXPECT_EQ(fsk_dataset_load((dir / "bad.csv").string().c_str(), &bad), FSK_ERR_MANIFEST);
  EXPECT_NE(std::string(fsk_last_error()).find(":2:"), std::string::npos);
}

TEST(CApi, AnalyzeScoreTable) {
  auto dir = scratch("analyze");
  {
    std::ofstream(dir / "s.csv") << "match,player,tes,pcs\nm1,a,1,1\nm1,b,2,2\nm1,c,3,3\nm2,a,1,1\n";
  }
  fsk_analysis* raw = nullptr;
  ASSERT_EQ(fsk_analyze((dir / "s.csv").string().c_str(), "match", &raw), FSK_OK) << fsk_last_error();
  AnalysisPtr res(raw, fsk_analysis_free);
  ASSERT_EQ(fsk_analysis_group_count(res.get()), 1u);
  const char* name = nullptr;
  double rho = 0, tau = 0;
  size_t n = 0;
  ASSERT_EQ(fsk_analysis_group(res.get(), 0, &name, &rho, &tau, &n), FSK_OK);
  EXPECT_STREQ(name, "m1");
  EXPECT_DOUBLE_EQ(rho, 1.0);
  EXPECT_DOUBLE_EQ(tau, 1.0);
  EXPECT_EQ(n, 3u);
  ASSERT_EQ(fsk_analysis_skipped_count(res.get()), 1u);
  const char* reason = nullptr;
  ASSERT_EQ(fsk_analysis_skipped(res.get(), 0, &name, &n, &reason), FSK_OK);
  EXPECT_STREQ(name, "m2");
  EXPECT_EQ(n, 1u);
  EXPECT_EQ(fsk_analysis_group(res.get(), 5, &name, &rho, &tau, &n), FSK_ERR_INVALID_ARGUMENT);
  ASSERT_EQ(fsk_analysis_write_csv(res.get(), (dir / "a.csv").string().c_str()), FSK_OK);
  EXPECT_EQ(slurp(dir / "a.csv"), "group,rho,tau,n\nm1,1,1,3\n");
  EXPECT_EQ(fsk_analyze((dir / "s.csv").string().c_str(), "season", &raw), FSK_ERR_INVALID_ARGUMENT);
}

// ---------------------------------------------------------------- CLI

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("fly").code, 2);
  EXPECT_EQ(cli("train").code, 2);
  EXPECT_EQ(cli("analyze --scores x.csv --group-by season").code, 2);
  auto dir = scratch("cli_usage");
  EXPECT_EQ(cli("train --manifest m.csv --out " + dir.string() + " --model cnn").code, 2);
  EXPECT_EQ(cli("train --manifest m.csv --out " + dir.string() + " --set bogus=1").code, 2);
  EXPECT_EQ(cli("train --manifest m.csv --out " + dir.string() + " --set noequals").code, 2);
  EXPECT_EQ(cli("eval --manifest m.csv --checkpoint c.fsck --split val").code, 2);
  EXPECT_TRUE(fs::is_empty(dir));
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("--version").code, 0);
}

TEST(Cli, RuntimeErrorsExitOneWithoutPartialOutputs) {
  auto dir = scratch("cli_runtime");
  auto r = cli("eval --manifest none.csv --checkpoint " + (dir / "none.fsck").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("fskate: "), std::string::npos);
  EXPECT_EQ(cli("predict --checkpoint none.fsck --features x.fsfv").code, 1);
  EXPECT_EQ(cli("analyze --scores " + (dir / "none.csv").string()).code, 1);

  // A dataset without train videos fails before anything is written.
  ASSERT_EQ(cli("synth --out " + (dir / "d").string() + " --n-videos 4 --n-train 0 --dim 8 --t-min 20 --t-max 24 --events-max 2")
                .code,
            0);
  auto t = cli("train --manifest " + (dir / "d" / "manifest.csv").string() + " --out " + (dir / "o").string() +
               " --epochs 1 " + kCliModelFlags);
  EXPECT_EQ(t.code, 1);
  EXPECT_NE(t.out.find("train split is empty"), std::string::npos) << t.out;
  EXPECT_FALSE(fs::exists(dir / "o" / "model.fsck"));
  EXPECT_FALSE(fs::exists(dir / "o" / "trace.csv"));
}

TEST(Cli, SeededTrainingIsRepeatable) {
  auto dir = scratch("cli_seed");
  ASSERT_EQ(cli("synth --out " + (dir / "d").string() + " --n-videos 12 --n-train 10 --dim 8 --t-min 20 --t-max 30 --events-max 2")
                .code,
            0);
  const std::string base = "train --manifest " + (dir / "d" / "manifest.csv").string() +
                           " --seed 7 --epochs 3 --lr 1e-2 --batch-size 4 " + kCliModelFlags;
  ASSERT_EQ(cli(base + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli(base + " --out " + (dir / "b").string()).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
  EXPECT_EQ(slurp(dir / "a" / "model.fsck"), slurp(dir / "b" / "model.fsck"));
  EXPECT_TRUE(fs::exists(dir / "a" / "run_config.json"));
  EXPECT_NE(slurp(dir / "a" / "run_config.json").find("\"seed\""), std::string::npos);
  ASSERT_EQ(cli("train --manifest " + (dir / "d" / "manifest.csv").string() +
                " --seed 8 --epochs 3 --lr 1e-2 --batch-size 4 " + kCliModelFlags + " --out " + (dir / "c").string())
                .code,
            0);
  EXPECT_NE(slurp(dir / "a" / "trace.csv"), slurp(dir / "c" / "trace.csv"));
}

TEST(Cli, OverfitThenEvaluatePredictAndAnalyze) {
  auto dir = scratch("cli_overfit");
  ASSERT_EQ(cli("synth --out " + (dir / "d").string() +
                " --seed 2 --n-videos 8 --n-train 8 --dim 8 --t-min 16 --t-max 20 --events-min 1 --events-max 2")
                .code,
            0);
  const auto manifest = (dir / "d" / "manifest.csv").string();
  auto t = cli("train --manifest " + manifest + " --out " + (dir / "o").string() +
               " --target tes --epochs 300 --lr 1e-2 --batch-size 8 --penalty-weight 0 " + kCliModelFlags);
  ASSERT_EQ(t.code, 0) << t.out;
  auto e = cli("eval --manifest " + manifest + " --checkpoint " + (dir / "o" / "model.fsck").string() +
               " --split train --out " + (dir / "o").string());
  ASSERT_EQ(e.code, 0) << e.out;
  const auto pos = e.out.find("mse");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(e.out.substr(pos + 3)), 1e-2) << e.out;
  EXPECT_NE(e.out.find("target     tes"), std::string::npos) << e.out;
  EXPECT_TRUE(fs::exists(dir / "o" / "predictions.csv"));

  auto k = cli("eval --manifest " + manifest + " --checkpoint " + (dir / "o" / "model.fsck").string() +
               " --model mlstm --split train --out " + (dir / "o").string());
  EXPECT_EQ(k.code, 1);
  EXPECT_NE(k.out.find(fsk_status_name(FSK_ERR_KIND_MISMATCH)), std::string::npos) << k.out;

  auto p = cli("predict --checkpoint " + (dir / "o" / "model.fsck").string() + " --features " +
               (dir / "d" / "features" / "vid0000.fsfv").string() + " --out " + (dir / "o").string());
  ASSERT_EQ(p.code, 0) << p.out;
  EXPECT_TRUE(fs::exists(dir / "o" / "vid0000.attention.csv"));
  auto p2 = cli("predict --checkpoint " + (dir / "o" / "model.fsck").string() + " --features " +
                (dir / "d" / "features" / "vid0000.fsfv").string() + " --out " + (dir / "o").string());
  EXPECT_EQ(p.out, p2.out);

  auto a = cli("analyze --scores " + (dir / "d" / "scores.csv").string() + " --group-by player --out " +
               (dir / "o" / "an.csv").string());
  EXPECT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(slurp(dir / "o" / "an.csv").rfind("group,rho,tau,n\n", 0), 0u);
}
