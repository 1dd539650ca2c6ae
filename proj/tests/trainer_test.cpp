// Copyright (c) 2026 The vclone Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vclone/pipeline.hpp"

namespace vclone::test {
namespace {

TEST(LrSchedule, StepDecay) {
  const LrSchedule s;
  EXPECT_DOUBLE_EQ(s.lr(1), 1e-3);
  EXPECT_DOUBLE_EQ(s.lr(9999), 1e-3);
  EXPECT_DOUBLE_EQ(s.lr(10000), 5e-4);
  EXPECT_DOUBLE_EQ(s.lr(24999), 5e-4);
  EXPECT_DOUBLE_EQ(s.lr(25000), 2.5e-4);
  EXPECT_DOUBLE_EQ(s.lr(40000), 1.25e-4);
  EXPECT_DOUBLE_EQ(LrSchedule::constant(1e-4).lr(50000), 1e-4);
}

TEST(LrSchedule, JsonRejectsUnknownKind) {
  LrSchedule s;
  read_json(Json{{"kind", "constant"}, {"base_lr", 0.01}}, "s", s);
  EXPECT_DOUBLE_EQ(s.lr(20000), 0.01);
  EXPECT_THROW(read_json(Json{{"kind", "cosine"}}, "s", s), ConfigError);
  EXPECT_THROW(read_json(Json{{"warmup", 5}}, "s", s), ConfigError);
}

// Textbook Adam, written out independently.
struct AdamOracle {
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    if (m.empty()) m.assign(w.size(), 0.0), v.assign(w.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      w[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
};

TEST(AdamStep, MatchesTextbookUpdate) {
  ParameterSet<double> ps;
  std::vector<double> w0 = {0.5, -1.0, 2.0, 0.0};
  TensorD p = ps.add("w", TensorD({4}, w0, true));
  OptimizerState<double> st;
  AdamConfig cfg;
  cfg.max_grad_norm = 0;
  AdamOracle oracle;
  std::vector<double> w = w0;
  const std::vector<std::vector<double>> grads = {
      {0.1, -0.2, 0.3, 1e-3}, {-0.5, 0.2, 0.0, 2.0}, {0.05, 0.05, -0.05, 0.0}};
  for (const auto& g : grads) {
    p.zero_grad();
    std::copy(g.begin(), g.end(), p.grad().begin());
    adam_step(ps, st, LrSchedule{}, cfg);
    oracle.step(w, g, 1e-3);
  }
  EXPECT_EQ(st.step, 3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p.data()[i], w[i], 1e-15);
}

TEST(AdamStep, ClipsByGlobalNorm) {
  ParameterSet<double> ps;
  TensorD a = ps.add("a", TensorD({1}, {0.0}, true));
  TensorD b = ps.add("b", TensorD({1}, {0.0}, true));
  a.grad()[0] = 3.0;
  b.grad()[0] = 4.0;
  OptimizerState<double> st;
  const double norm = adam_step(ps, st, LrSchedule{}, AdamConfig{});
  EXPECT_DOUBLE_EQ(norm, 5.0);
  EXPECT_NEAR(st.m["a"][0], 0.1 * 3.0 / 5.0, 1e-15);
  EXPECT_NEAR(st.m["b"][0], 0.1 * 4.0 / 5.0, 1e-15);
}

TEST(AdamStep, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet<double> ps;
  TensorD p = ps.add("w", TensorD({3}, {1.0, -2.0, 3.0}, true));
  OptimizerState<double> st;
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    p.grad();
    adam_step(ps, st, LrSchedule{}, AdamConfig{});
  }
  EXPECT_EQ(p.values(), (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(AdamStep, NonFiniteGradientNamesParameterAndRejectsStep) {
  ParameterSet<double> ps;
  TensorD a = ps.add("decoder.ok", TensorD({2}, {1.0, 2.0}, true));
  TensorD b = ps.add("encoder.bad", TensorD({2}, {3.0, 4.0}, true));
  a.grad()[0] = 1.0;
  b.grad()[1] = std::numeric_limits<double>::quiet_NaN();
  OptimizerState<double> st;
  try {
    adam_step(ps, st, LrSchedule{}, AdamConfig{});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.bad"), std::string::npos);
  }
  EXPECT_EQ(st.step, 0);
  EXPECT_EQ(a.values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(b.values(), (std::vector<double>{3.0, 4.0}));
}

TEST(AdamStep, FrozenAndGradlessParametersSkipped) {
  ParameterSet<double> ps;
  TensorD enc = ps.add("encoder.conv0.weight", TensorD({2}, {1.0, 2.0}, true));
  TensorD dec = ps.add("decoder.proj.weight", TensorD({2}, {1.0, 2.0}, true));
  TensorD idle = ps.add("speakers", TensorD({2}, {1.0, 2.0}, true));
  enc.grad()[0] = 1.0;
  dec.grad()[0] = 1.0;
  OptimizerState<double> st;
  adam_step(ps, st, LrSchedule{}, AdamConfig{}, {"encoder.*"});
  EXPECT_EQ(enc.values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(idle.values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_NE(dec.values()[0], 1.0);
  EXPECT_EQ(st.m.count("encoder.conv0.weight"), 0u);
  EXPECT_EQ(st.m.count("speakers"), 0u);
}

TEST(AdamStep, AppendedRowsGetZeroMoments) {
  ParameterSet<double> ps;
  Rng rng(1);
  SpeakerTable<double> table(ps, "speakers", {"a", "b"}, 2, rng);
  OptimizerState<double> st;
  TensorD t = table.table();
  std::fill(t.grad().begin(), t.grad().end(), 1.0);
  adam_step(ps, st, LrSchedule{}, AdamConfig{});
  const auto m_before = st.m["speakers"];
  table.register_speaker("c");
  ps.zero_grad();
  t = table.table();
  t.grad()[5] = 1.0;  // new row only
  adam_step(ps, st, LrSchedule{}, AdamConfig{});
  ASSERT_EQ(st.m["speakers"].size(), 6u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(st.m["speakers"][i], 0.9 * m_before[i]);
  EXPECT_DOUBLE_EQ(st.m["speakers"][4], 0.0);
  EXPECT_DOUBLE_EQ(st.m["speakers"][5], 0.1);
}

TEST(OptimizerState, ArchiveRoundTrip) {
  OptimizerState<float> st;
  st.m["x"] = {1.f, 2.f};
  st.v["x"] = {3.f, 4.f};
  st.step = 42;
  TensorArchive ar;
  st.save(ar);
  std::stringstream ss;
  ar.write(ss);
  const auto back = OptimizerState<float>::load(TensorArchive::read(ss));
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.m.at("x"), st.m.at("x"));
  EXPECT_EQ(back.v.at("x"), st.v.at("x"));
}

// ---------------------------------------------------------------- sampling

PairedDataset half_and_half(std::size_t n) {
  PairedDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    PairedExample p;
    p.tokens.modality = i % 2 ? Modality::kUlu : Modality::kPhoneme;
    ds.pairs.push_back(p);
  }
  return ds;
}

TEST(SampleBatch, ModalityRatioOverManyDraws) {
  const PairedDataset ds = half_and_half(100);
  Rng rng(9);
  std::size_t ulu = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const BatchDraw d = sample_batch(ds.size(), 1, rng);
    ulu += ds.pairs[d.indices[0]].tokens.modality == Modality::kUlu;
  }
  const double frac = static_cast<double>(ulu) / draws;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
}

TEST(SampleBatch, SeededAndDistinctUnlessFlagged) {
  Rng a(5), b(5);
  for (int i = 0; i < 50; ++i) {
    const BatchDraw x = sample_batch(20, 8, a);
    const BatchDraw y = sample_batch(20, 8, b);
    EXPECT_EQ(x.indices, y.indices);
    EXPECT_FALSE(x.with_replacement);
    EXPECT_EQ(std::set<std::size_t>(x.indices.begin(), x.indices.end()).size(), 8u);
  }
  const BatchDraw big = sample_batch(3, 8, a);
  EXPECT_TRUE(big.with_replacement);
  EXPECT_EQ(big.indices.size(), 8u);
  for (auto i : big.indices) EXPECT_LT(i, 3u);
  EXPECT_THROW(sample_batch(0, 1, a), std::invalid_argument);
}

// ---------------------------------------------------------------- loop

TEST(RunTraining, TraceAndCheckpoints) {
  const auto dir = temp_dir("run_training");
  ParameterSet<double> ps;
  TensorD w = ps.add("w", TensorD({2}, {2.0, -3.0}, true));
  TrainPlan plan;
  plan.steps = 25;
  plan.checkpoint_every = 10;
  plan.schedule = LrSchedule::constant(0.1);
  plan.out_dir = dir.string();
  OptimizerState<double> st;
  std::vector<std::string> saved;
  auto step = [&](TapeD& tape, Rng&) {
    TensorD sq = tape.mul(w, w);
    TensorD total = tape.sum(sq);
    return LossTerms<double>{{"total", total}, {"sq", total}};
  };
  auto save = [&](const std::string& path, const OptimizerState<double>& s) {
    std::ofstream(path) << s.step;
    saved.push_back(path);
  };
  const TrainResult r = run_training<double>(ps, st, plan, step, save);
  ASSERT_EQ(r.trace.size(), 25u);
  EXPECT_LT(r.trace.back().terms[0].second, r.trace.front().terms[0].second);
  EXPECT_EQ(r.checkpoints, saved);
  ASSERT_EQ(saved.size(), 3u);
  EXPECT_EQ(std::filesystem::path(saved[0]).filename(), "step_10.vclt");
  EXPECT_EQ(std::filesystem::path(saved[2]).filename(), "step_25.vclt");

  std::ifstream csv(dir / "trace.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,lr,grad_norm,total,sq");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 25);
}

TEST(RunTraining, NonFiniteLossRejected) {
  ParameterSet<double> ps;
  TensorD w = ps.add("w", TensorD({1}, {0.0}, true));
  TrainPlan plan;
  plan.steps = 3;
  OptimizerState<double> st;
  auto step = [&](TapeD& tape, Rng&) {
    TensorD bad = tape.scale(tape.sum(w), std::numeric_limits<double>::infinity());
    return LossTerms<double>{{"total", tape.add(bad, bad)}};
  };
  EXPECT_THROW(run_training<double>(ps, st, plan, step, {}), NonFiniteError);
  EXPECT_EQ(st.step, 0);
}

// ------------------------------------------------------ seq2seq fine-tune

Seq2SeqConfig tiny_config() {
  Seq2SeqConfig c;
  c.n_mels = 4;
  c.embed_dim = 3;
  c.conv_channels = 3;
  c.conv_kernel = 3;
  c.conv_layers = 1;
  c.encoder_hidden = 2;
  c.speaker_dim = 2;
  c.mixtures = 2;
  c.attention_hidden = 3;
  c.decoder_hidden = 3;
  c.prenet_dim = 3;
  return c;
}

PairedDataset tiny_dataset(const std::vector<std::string>& speakers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> id(0, 4);
  std::uniform_real_distribution<double> v(-6.0, 2.0);
  PairedDataset ds;
  for (std::size_t i = 0; i < 6; ++i) {
    PairedExample p;
    for (std::size_t t = 0; t < 2 + i % 3; ++t) p.tokens.ids.push_back(id(rng));
    p.tokens.ids.push_back(6);
    p.tokens.modality = i % 2 ? Modality::kUlu : Modality::kPhoneme;
    p.tokens.speaker = speakers[i % speakers.size()];
    p.mel.n_mels = 4;
    p.mel.frames = 4 + i;
    for (std::size_t k = 0; k < p.mel.frames * 4; ++k) p.mel.data.push_back(v(rng));
    ds.pairs.push_back(p);
  }
  return ds;
}

Seq2Seq<double> tiny_model() {
  return Seq2Seq<double>(tiny_config(), TokenVocabulary(3, 2), PhonemeInventory({"a", "b"}),
                         {"s0", "s1", "s2", "s3"}, 3);
}

TEST(RegisterSpeaker, AppendsMeanRowAndRejectsDuplicates) {
  Seq2Seq<double> m = tiny_model();
  std::vector<double> mean(2, 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < 2; ++j) mean[j] += m.speakers().row(r)[j] / 4.0;
  }
  EXPECT_EQ(m.speakers().register_speaker("new"), 4);
  EXPECT_EQ(m.speakers().size(), 5u);
  EXPECT_EQ(m.speakers().table().shape(), (Shape{5, 2}));
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(m.speakers().row(4)[j], mean[j], 1e-15);
  EXPECT_THROW(m.speakers().register_speaker("s1"), std::invalid_argument);
}

TEST(Finetune, TtsFreezesEncoderAndTrainsNewSpeaker) {
  Seq2Seq<double> m = tiny_model();
  m.speakers().register_speaker("target");
  const auto before = m.params().snapshot();
  const std::vector<double> row_init = m.speakers().row(4);
  const PairedDataset ds = tiny_dataset({"target"}, 4);
  TrainPlan plan;
  plan.stage = Stage::kFinetuneTts;
  plan.steps = 20;
  plan.batch_size = 3;
  plan.frozen = default_frozen(Stage::kFinetuneTts);
  plan.schedule = LrSchedule::constant(1e-3);
  OptimizerState<double> st;
  run_training<double>(m.params(), st, plan, seq2seq_step(m, ds, plan), {});
  const auto after = m.params().snapshot();
  std::size_t encoder = 0, changed = 0;
  for (const auto& [name, values] : before) {
    if (name.rfind("encoder.", 0) == 0) {
      ++encoder;
      EXPECT_EQ(after.at(name), values) << name;
    } else if (name != "speakers") {
      changed += after.at(name) != values;
    }
  }
  EXPECT_GE(encoder, 3u);
  EXPECT_GT(changed, 0u);
  double l2 = 0;
  for (std::size_t j = 0; j < 2; ++j) l2 += std::pow(m.speakers().row(4)[j] - row_init[j], 2);
  EXPECT_GT(l2, 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(after.at("speakers")[r * 2 + j], before.at("speakers")[r * 2 + j]);
    }
  }
}

TEST(Finetune, FirstTenLossesDeterministic) {
  auto losses = [] {
    Seq2Seq<double> m = tiny_model();
    const PairedDataset ds = tiny_dataset({"s0", "s1", "s2", "s3"}, 8);
    TrainPlan plan;
    plan.stage = Stage::kSeq2Seq;
    plan.steps = 10;
    plan.batch_size = 2;
    plan.seed = 77;
    OptimizerState<double> st;
    std::vector<double> out;
    for (const auto& row : run_training<double>(m.params(), st, plan, seq2seq_step(m, ds, plan), {}).trace) {
      out.push_back(row.terms[0].second);
    }
    return out;
  };
  const auto a = losses();
  const auto b = losses();
  ASSERT_EQ(a.size(), 10u);
  EXPECT_EQ(a, b);
}

// ---------------------------------------------------------------- config

TEST(RunConfig, JsonRoundTripAndStrictness) {
  RunConfig c = default_run_config();
  c.seed = 99;
  c.train_seq2seq.steps = 17;
  RunConfig d = default_run_config();
  read_json(to_json(c), "cfg", d);
  EXPECT_EQ(to_json(d), to_json(c));
  EXPECT_EQ(d.finetune_tts.frozen, std::vector<std::string>{"encoder.*"});

  RunConfig e = default_run_config();
  EXPECT_THROW(read_json(Json{{"sed", 1}}, "cfg", e), ConfigError);
  EXPECT_THROW(read_json(Json{{"corpus", {{"seed", 3}}}}, "cfg", e), ConfigError);
  EXPECT_THROW(read_json(Json{{"mel", {{"n_mels", 80}}}}, "cfg", e), ConfigError);
  EXPECT_THROW(read_json(Json{{"finetune_vc", {{"stage", "VQVAE"}}}}, "cfg", e), ConfigError);
}

TEST(RunLayout, MissingArtifactNamesProducer) {
  RunConfig c = default_run_config();
  c.out = temp_dir("empty_run").string();
  std::ostringstream log;
  try {
    run_train_seq2seq<float>(c, log);
    FAIL() << "expected MissingArtifact";
  } catch (const MissingArtifact& e) {
    EXPECT_NE(std::string(e.what()).find("train-vqvae"), std::string::npos) << e.what();
  }
  try {
    run_train_vqvae<float>(c, log);
    FAIL() << "expected MissingArtifact";
  } catch (const MissingArtifact& e) {
    EXPECT_NE(std::string(e.what()).find("gen-corpus"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_finetune<float>(c, Stage::kFinetuneVc, log), MissingArtifact);
}

}  // namespace
}  // namespace vclone::test
