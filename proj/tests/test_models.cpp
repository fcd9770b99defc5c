// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The fskate Authors

#include <gtest/gtest.h>

#include <cmath>

#include "errors.hpp"
#include "models.hpp"
#include "test_util.hpp"

using namespace fskate;
using fskate::testing::check_gradients;
using fskate::testing::random_tensor;
using TD = Tensor<double>;

namespace {

ModelConfig small_config(ModelKind kind, std::size_t d = 8) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.input_dim = d;
  cfg.att_hidden = 6;
  cfg.att_rows = 4;
  cfg.slstm_hidden = 5;
  cfg.branches = {{3, 1, CellKind::skip_lstm}, {9, 1, CellKind::lstm}};
  cfg.conv_channels = 4;
  cfg.mlstm_hidden = 5;
  cfg.head_hidden = {4};
  return cfg;
}

std::vector<std::pair<std::string, TD>> all_params(Model<double>& m) {
  std::vector<std::pair<std::string, TD>> out;
  for (auto& p : m.parameters()) out.emplace_back(p.name, p.tensor);
  return out;
}

void zero_head(Model<double>& m) {
  for (auto& l : m.head().layers) {
    for (auto& v : l.w.mutable_data()) v = 0;
    for (auto& v : l.b.mutable_data()) v = 0;
  }
}

}  // namespace

TEST(BranchSpec, ParsesAndFormats) {
  auto b = parse_branch_spec("3:2:skip, 9:4:lstm");
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0], (BranchSpec{3, 2, CellKind::skip_lstm}));
  EXPECT_EQ(b[1], (BranchSpec{9, 4, CellKind::lstm}));
  EXPECT_EQ(parse_branch_spec(format_branch_spec(b)), b);
  EXPECT_EQ(parse_branch_spec("5:1:lstm").size(), 1u);
}

TEST(BranchSpec, DefaultsMatchFourBranchLayout) {
  auto b = default_branches();
  ASSERT_EQ(b.size(), 4u);
  EXPECT_EQ(format_branch_spec(b), format_branch_spec(parse_branch_spec("3:2:skip,5:2:skip,9:4:lstm,15:4:lstm")));
}

TEST(BranchSpec, RejectsMalformedItems) {
  for (const char* bad : {"", "3:2", "3:2:gru", "0:1:skip", "3:0:lstm", "a:1:skip", "3:1:skip,", "3x:1:skip"})
    EXPECT_THROW(parse_branch_spec(bad), ContractError) << bad;
}

TEST(ModelConfig, NamesAndJsonRoundTrip) {
  EXPECT_EQ(parse_model_kind("fused"), ModelKind::fused);
  EXPECT_EQ(to_string(ModelKind::mlstm), "mlstm");
  EXPECT_THROW(parse_model_kind("cnn"), ContractError);
  EXPECT_EQ(parse_gate_mode("swapped"), GateMode::swapped);
  EXPECT_THROW(parse_gate_mode("other"), ContractError);
  auto cfg = small_config(ModelKind::fused);
  cfg.gate_mode = GateMode::swapped;
  auto back = model_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(back.branches, cfg.branches);
}

TEST(ModelConfig, ValidationRejectsZeroSizes) {
  auto cfg = small_config(ModelKind::slstm);
  cfg.att_rows = 0;
  EXPECT_THROW(validate(cfg), ContractError);
  cfg = small_config(ModelKind::mlstm);
  cfg.branches.clear();
  EXPECT_THROW(validate(cfg), ContractError);
  cfg = small_config(ModelKind::mlstm);
  cfg.att_rows = 0;  // unused by the M-LSTM trunk
  EXPECT_NO_THROW(validate(cfg));
}

TEST(Model, OutputShapesAcrossLengths) {
  for (auto kind : {ModelKind::slstm, ModelKind::mlstm, ModelKind::fused}) {
    Rng rng(1);
    Model<double> m(small_config(kind), rng);
    for (std::size_t len : {50u, 500u}) {
      Tape<double> tape(false);
      auto out = m.forward(tape, random_tensor({len, 8}, rng, false), false, 0.0, rng);
      EXPECT_EQ(out.score.shape(), (Shape{1, 1}));
      if (kind != ModelKind::mlstm) {
        EXPECT_EQ(out.attention.shape(), (Shape{4, len}));
      }
      EXPECT_EQ(out.skip_rates.size(), kind == ModelKind::slstm ? 0u : 2u);
    }
  }
}

TEST(Model, HeadInputWidthFollowsTrunks) {
  Rng rng(2);
  EXPECT_EQ(Model<double>(small_config(ModelKind::slstm), rng).head().input_dim(), 5u);
  EXPECT_EQ(Model<double>(small_config(ModelKind::mlstm), rng).head().input_dim(), 10u);
  EXPECT_EQ(Model<double>(small_config(ModelKind::fused), rng).head().input_dim(), 15u);
}

TEST(Model, ZeroHeadPredictsOffset) {
  for (auto kind : {ModelKind::slstm, ModelKind::mlstm, ModelKind::fused}) {
    Rng rng(3);
    Model<double> m(small_config(kind), rng);
    zero_head(m);
    auto x = random_tensor({30, 8}, rng, false);
    EXPECT_EQ(m.evaluate(x).score.item(), 0.0);
    m.score_scale = {70.0, 5.0};
    EXPECT_EQ(m.predict(x), 70.0);
  }
}

TEST(Model, PredictAppliesScoreScale) {
  Rng rng(4);
  Model<double> m(small_config(ModelKind::slstm), rng);
  auto x = random_tensor({20, 8}, rng, false);
  const double raw = m.evaluate(x).score.item();
  m.score_scale = {40.0, 3.0};
  EXPECT_NEAR(m.predict(x), 40.0 + 3.0 * raw, 1e-12);
}

TEST(Model, InputWidthMismatchIsDimensionError) {
  Rng rng(5);
  Model<double> m(small_config(ModelKind::fused), rng);
  EXPECT_THROW(m.evaluate(TD::zeros({20, 7})), DimensionError);
}

TEST(Model, SequenceShorterThanLargestKernelIsRejected) {
  Rng rng(6);
  Model<double> m(small_config(ModelKind::mlstm), rng);
  EXPECT_EQ(m.mlstm()->min_length(), 9u);
  EXPECT_THROW(m.evaluate(random_tensor({8, 8}, rng, false)), SequenceTooShortError);
  EXPECT_NO_THROW(m.evaluate(random_tensor({9, 8}, rng, false)));
  Model<double> s(small_config(ModelKind::slstm), rng);
  EXPECT_NO_THROW(s.evaluate(random_tensor({1, 8}, rng, false)));
}

TEST(Model, SameSeedSameModel) {
  Rng a(7), b(7), c(8);
  Model<double> m1(small_config(ModelKind::fused), a), m2(small_config(ModelKind::fused), b),
      m3(small_config(ModelKind::fused), c);
  auto p1 = m1.parameters(), p2 = m2.parameters(), p3 = m3.parameters();
  ASSERT_EQ(p1.size(), p2.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_EQ(p1[i].name, p2[i].name);
    EXPECT_TRUE(std::equal(p1[i].tensor.data().begin(), p1[i].tensor.data().end(), p2[i].tensor.data().begin()));
    any_diff |= !std::equal(p1[i].tensor.data().begin(), p1[i].tensor.data().end(), p3[i].tensor.data().begin());
  }
  EXPECT_TRUE(any_diff);
  Rng rng(9);
  auto x = random_tensor({40, 8}, rng, false);
  EXPECT_EQ(m1.predict(x), m2.predict(x));
}

TEST(Model, EvaluationLeavesModelUnchanged) {
  Rng rng(10);
  Model<double> m(small_config(ModelKind::fused), rng);
  auto before = m.clone();
  auto x = random_tensor({40, 8}, rng, false);
  const double first = m.predict(x);
  EXPECT_EQ(m.predict(x), first);
  auto bufs = m.buffers(), bufs0 = before.buffers();
  for (std::size_t i = 0; i < bufs.size(); ++i) EXPECT_EQ(*bufs[i].values, *bufs0[i].values);
}

TEST(Model, CloneIsDeep) {
  Rng rng(11);
  Model<double> m(small_config(ModelKind::fused), rng);
  auto copy = m.clone();
  for (auto& p : copy.parameters())
    for (auto& v : p.tensor.mutable_data()) v += 1.0;
  auto orig = m.parameters(), changed = copy.parameters();
  for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NE(orig[i].tensor.at(0), changed[i].tensor.at(0));
}

TEST(Model, ParameterAndBufferNames) {
  Rng rng(12);
  Model<double> m(small_config(ModelKind::fused), rng);
  std::vector<std::string> names;
  for (auto& p : m.parameters()) names.push_back(p.name);
  const std::vector<std::string> expected{
      "att.ws1", "att.ws2", "slstm.wx", "slstm.wh", "slstm.b", "mlstm.b0.kernel", "mlstm.b0.bn.gamma",
      "mlstm.b0.bn.beta", "mlstm.b0.wx", "mlstm.b0.wh", "mlstm.b0.b", "mlstm.b0.wp", "mlstm.b0.bp",
      "mlstm.b1.kernel", "mlstm.b1.bn.gamma", "mlstm.b1.bn.beta", "mlstm.b1.wx", "mlstm.b1.wh", "mlstm.b1.b",
      "head.0.w", "head.0.b", "head.1.w", "head.1.b"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(m.buffers().size(), 4u);
  for (auto& p : m.parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
}

TEST(Model, SkipRatesAreFractions) {
  Rng rng(13);
  auto cfg = small_config(ModelKind::mlstm);
  Model<double> m(cfg, rng);
  auto out = m.evaluate(random_tensor({60, 8}, rng, false));
  ASSERT_EQ(out.skip_rates.size(), 2u);
  EXPECT_GE(out.skip_rates[0], 0.0);
  EXPECT_LE(out.skip_rates[0], 1.0);
  EXPECT_EQ(out.skip_rates[1], 0.0);
}

TEST(Model, BeginBatchPoolsConvStatistics) {
  Rng rng(14);
  auto cfg = small_config(ModelKind::mlstm);
  cfg.branches = {{3, 2, CellKind::skip_lstm}};
  Model<double> m(cfg, rng);
  auto x1 = random_tensor({20, 8}, rng, false), x2 = random_tensor({31, 8}, rng, false);
  std::vector<const TD*> batch{&x1, &x2};
  m.begin_batch(batch, 0.1);
  auto& br = m.mlstm()->branches[0];
  ASSERT_TRUE(br.batch_stats.has_value());
  // Brute-force strided valid convolution of each sample.
  const std::size_t ch = 4;
  std::vector<std::vector<double>> frames;
  for (const TD* x : batch) {
    for (std::size_t t = 0; t + 3 <= x->rows(); t += 2) {
      std::vector<double> z(ch, 0.0);
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < 8; ++c)
          for (std::size_t o = 0; o < ch; ++o) z[o] += x->at(t + j, c) * br.kernel.at((j * 8 + c) * ch + o);
      frames.push_back(z);
    }
  }
  ASSERT_EQ(frames.size(), 9u + 15u);
  const double n = double(frames.size());
  for (std::size_t o = 0; o < ch; ++o) {
    double mean = 0, sq = 0;
    for (auto& z : frames) mean += z[o];
    mean /= n;
    for (auto& z : frames) sq += (z[o] - mean) * (z[o] - mean);
    EXPECT_NEAR(br.batch_stats->mean[o], mean, 1e-12);
    EXPECT_NEAR(br.batch_stats->var[o], sq / n, 1e-12);
    EXPECT_NEAR(br.stats.mean[o], 0.1 * mean, 1e-12);
    EXPECT_NEAR(br.stats.var[o], 0.9 + 0.1 * sq / (n - 1), 1e-12);
  }
  m.end_batch();
  EXPECT_FALSE(br.batch_stats.has_value());
}

TEST(Model, TrainForwardWithBatchStatsMatchesEvalWithSameStats) {
  Rng rng(15);
  Model<double> m(small_config(ModelKind::mlstm), rng);
  auto x = random_tensor({30, 8}, rng, false), y = random_tensor({25, 8}, rng, false);
  std::vector<const TD*> batch{&x, &y};
  m.begin_batch(batch);
  auto ref = m.clone();
  for (auto& br : ref.mlstm()->branches) br.stats = *br.batch_stats;
  ref.end_batch();
  Tape<double> tape(false);
  Rng unused(0);
  EXPECT_NEAR(m.forward(tape, x, true, 0.0, unused).score.item(), ref.evaluate(x).score.item(), 1e-14);
  m.end_batch();
}

TEST(Model, SLstmGradientsMatchFiniteDifferences) {
  Rng rng(16);
  Model<double> m(small_config(ModelKind::slstm), rng);
  auto x = random_tensor({12, 8}, rng, false);
  auto r = check_gradients(
      [&](Tape<double>& t) {
        Rng unused(0);
        auto out = m.forward(t, x, true, 0.0, unused);
        return t.add(t.mul(out.score, out.score), attention_penalty(t, out.attention));
      },
      all_params(m));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Model, MLstmGradientsMatchFiniteDifferences) {
  Rng rng(17);
  Model<double> m(small_config(ModelKind::mlstm), rng);
  auto x = random_tensor({24, 8}, rng, false);
  for (SteMode ste : {SteMode::hard, SteMode::relaxed}) {
    // Per-sequence batchnorm statistics, so gradients flow through them.
    auto r = check_gradients(
        [&](Tape<double>& t) {
          Rng unused(0);
          auto out = m.forward(t, x, true, 0.0, unused);
          return t.mul(out.score, out.score);
        },
        all_params(m), ste);
    EXPECT_LT(r.max_rel_error, 1e-4) << int(ste) << " " << r.worst;
  }
  std::vector<const TD*> batch{&x};
  m.begin_batch(batch);
  auto r = check_gradients(
      [&](Tape<double>& t) {
        Rng unused(0);
        auto out = m.forward(t, x, true, 0.0, unused);
        return t.mul(out.score, out.score);
      },
      all_params(m), SteMode::hard);
  m.end_batch();
  EXPECT_LT(r.max_rel_error, 1e-4) << "batch stats " << r.worst;
}

TEST(Model, FusedGradientsMatchFiniteDifferences) {
  Rng rng(18);
  Model<double> m(small_config(ModelKind::fused), rng);
  auto x = random_tensor({16, 8}, rng, false);
  auto r = check_gradients(
      [&](Tape<double>& t) {
        Rng unused(0);
        auto out = m.forward(t, x, false, 0.0, unused);
        return t.add(t.mul(out.score, out.score), attention_penalty(t, out.attention));
      },
      all_params(m), SteMode::hard);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Model, FloatAndDoubleAgree) {
  Rng a(19), b(19), rng(20);
  Model<double> md(small_config(ModelKind::fused), a);
  Model<float> mf(small_config(ModelKind::fused), b);
  std::vector<float> raw(40 * 8);
  for (auto& v : raw) v = float(rng.uniform(-1, 1));
  const double pd = md.predict(features_tensor<double>(40, 8, raw));
  const double pf = mf.predict(features_tensor<float>(40, 8, raw));
  EXPECT_NEAR(pd, pf, 1e-4);
}
