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

#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vclone/seq2seq.hpp"

namespace vclone::test {
namespace {

Seq2SeqConfig tiny_config() {
  Seq2SeqConfig c;
  c.n_mels = 4;
  c.embed_dim = 3;
  c.conv_channels = 3;
  c.conv_kernel = 3;
  c.conv_layers = 2;
  c.encoder_hidden = 2;
  c.speaker_dim = 2;
  c.mixtures = 2;
  c.attention_hidden = 3;
  c.decoder_hidden = 3;
  c.prenet_dim = 3;
  return c;
}

using Model = Seq2Seq<double>;

Model tiny_model(std::uint64_t seed, Seq2SeqConfig cfg = tiny_config()) {
  return Model(cfg, TokenVocabulary(3, 2), PhonemeInventory({"a", "b"}), {"s0", "s1"}, seed);
}

PairedExample random_example(std::mt19937_64& rng, std::size_t tokens, std::size_t frames,
                             const std::string& speaker, std::size_t n_mels = 4) {
  PairedExample p;
  std::uniform_int_distribution<int> id(0, 4);
  for (std::size_t i = 0; i < tokens; ++i) p.tokens.ids.push_back(id(rng));
  p.tokens.ids.push_back(6);  // EOS
  p.tokens.speaker = speaker;
  p.tokens.utt_id = "u" + std::to_string(tokens);
  p.mel.n_mels = n_mels;
  p.mel.frames = frames;
  std::uniform_real_distribution<double> v(-6.0, 2.0);
  for (std::size_t i = 0; i < frames * n_mels; ++i) p.mel.data.push_back(v(rng));
  return p;
}

TEST(Seq2SeqEncoder, MemoryLengthAndSpeakerColumns) {
  Model m = tiny_model(1);
  TokenSequence seq;
  seq.ids = {0, 1, 2, 3, 4, 1, 6};
  TapeD tape(TapeD::Mode::kNoGrad);
  TensorD a = m.encode_tokens(tape, seq, "s0");
  TensorD b = m.encode_tokens(tape, seq, "s1");
  const std::size_t d = m.config().memory_dim();
  ASSERT_EQ(a.shape(), (Shape{1, 7, d}));
  const std::size_t text = 2 * m.config().encoder_hidden;
  double spk_diff = 0;
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = std::abs(a.data()[t * d + j] - b.data()[t * d + j]);
      if (j < text) {
        EXPECT_EQ(diff, 0.0);
      } else {
        spk_diff += diff;
        EXPECT_EQ(a.data()[t * d + j], m.speakers().row(0)[j - text]);
      }
    }
  }
  EXPECT_GT(spk_diff, 0.0);

  TokenSequence empty;
  EXPECT_THROW(m.encode_tokens(tape, empty, "s0"), std::invalid_argument);
  EXPECT_THROW(m.encode_tokens(tape, seq, "nobody"), std::out_of_range);
  seq.ids[0] = 7;
  EXPECT_THROW(m.encode_tokens(tape, seq, "s0"), std::out_of_range);
}

TEST(GmmAttention, ZeroProjectionMovesMeansByLn2) {
  std::mt19937_64 rng(3);
  TapeD tape(TapeD::Mode::kNoGrad);
  TensorD memory = random_tensor({2, 6, 4}, rng, -1, 1, false);
  TensorD proj({2, 9});
  TensorD mu0({2, 3});
  auto out = gmm_attention_step(tape, proj, mu0, memory, {6, 4});
  for (double mu : out.state.mu.data()) EXPECT_NEAR(mu, std::numbers::ln2, 1e-15);
  for (double w : out.state.w.data()) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  // identical components: alpha is a single renormalized Gaussian
  const double s = std::log1p(1.0);
  for (std::size_t b = 0; b < 2; ++b) {
    const std::size_t len = b == 0 ? 6 : 4;
    double z = 0;
    for (std::size_t t = 0; t < len; ++t) z += std::exp(-std::pow(t - s, 2) / (2 * s * s));
    for (std::size_t t = 0; t < 6; ++t) {
      const double want = t < len ? std::exp(-std::pow(t - s, 2) / (2 * s * s)) / z : 0.0;
      EXPECT_NEAR(out.alpha.data()[b * 6 + t], want, 1e-12);
    }
  }
}

TEST(GmmAttention, InvariantsOverFiftyRandomSteps) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    TapeD tape(TapeD::Mode::kNoGrad);
    TensorD memory = random_tensor({3, 12, 5}, rng, -1, 1, false);
    TensorD mu({3, 4});
    for (int step = 0; step < 50; ++step) {
      TensorD proj = random_tensor({3, 12}, rng, -6, 6, false);
      auto out = gmm_attention_step(tape, proj, mu, memory, {12, 7, 1});
      for (std::size_t b = 0; b < 3; ++b) {
        double row = 0;
        for (std::size_t t = 0; t < 12; ++t) {
          const double a = out.alpha.data()[b * 12 + t];
          EXPECT_GE(a, 0.0);
          row += a;
        }
        EXPECT_NEAR(row, 1.0, 1e-6);
      }
      for (std::size_t i = 0; i < mu.size(); ++i) {
        EXPECT_GE(out.state.mu.data()[i], mu.data()[i]);
        EXPECT_GT(out.state.sigma.data()[i], 0.0);
      }
      mu = out.state.mu;
    }
  }
}

TEST(Seq2SeqDecoder, MeansNonDecreasingDuringSynthesis) {
  Model m = tiny_model(4);
  TokenSequence seq;
  seq.ids = {0, 3, 1, 4, 6};
  Synthesis s = m.synthesize(seq, "s1", 9, 50);
  ASSERT_GE(s.means.size(), 1u);
  for (std::size_t t = 1; t < s.means.size(); ++t) {
    for (std::size_t k = 0; k < s.means[t].size(); ++k) EXPECT_GE(s.means[t][k], s.means[t - 1][k]);
  }
}

TEST(Seq2SeqDecoder, TeacherForcedEmitsOneFramePerTarget) {
  std::mt19937_64 rng(5);
  Model m = tiny_model(5);
  auto a = random_example(rng, 3, 7, "s0");
  auto b = random_example(rng, 5, 4, "s1");
  auto batch = make_batch<double>({&a, &b}, m);
  TapeD tape;
  Rng drop(1);
  auto out = m.forward(tape, batch, drop);
  EXPECT_EQ(out.mels.shape(), (Shape{2, 7, 4}));
  EXPECT_EQ(out.stop_logits.shape(), (Shape{2, 7}));
  EXPECT_EQ(out.alphas.size(), 7u);
  for (double v : out.stop_logits.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(batch.stop_targets, (std::vector<double>{0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0}));
  EXPECT_EQ(batch.frame_mask, (std::vector<double>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0}));
  EXPECT_EQ(batch.tokens[4], m.vocab().pad());
  EXPECT_EQ(batch.tokens[5], m.vocab().pad());
}

TEST(Seq2SeqDecoder, PaddingDoesNotLeakIntoShorterExamples) {
  std::mt19937_64 rng(6);
  Seq2SeqConfig cfg = tiny_config();
  cfg.prenet_dropout = 0.0;
  Model m = tiny_model(6, cfg);
  auto a = random_example(rng, 2, 3, "s0");
  auto b = random_example(rng, 6, 8, "s1");
  Rng r1(1), r2(1);
  TapeD t1, t2;
  auto alone = m.forward(t1, make_batch<double>({&a}, m), r1);
  auto padded_batch = make_batch<double>({&a, &b}, m);
  auto padded = m.forward(t2, padded_batch, r2);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(alone.mels.data()[t * 4 + j], padded.mels.data()[t * 4 + j], 1e-12);
    }
    EXPECT_NEAR(alone.stop_logits.data()[t], padded.stop_logits.data()[t], 1e-12);
  }
}

TEST(Seq2SeqDecoder, DropoutIsStochasticButSeeded) {
  Model m = tiny_model(7);
  m.params().get("decoder.stop_proj.bias").data()[0] = -50.0;
  TokenSequence seq;
  seq.ids = {1, 2, 3, 6};
  auto a = m.synthesize(seq, "s0", 42, 20);
  auto b = m.synthesize(seq, "s0", 42, 20);
  auto c = m.synthesize(seq, "s0", 43, 20);
  ASSERT_EQ(a.mel.frames, 20u);
  EXPECT_EQ(a.mel.data, b.mel.data);
  EXPECT_NE(a.mel.data, c.mel.data);
}

TEST(Seq2SeqDecoder, MaxStepsZeroIsEmptyWithWarning) {
  Model m = tiny_model(8);
  TokenSequence seq;
  seq.ids = {1, 6};
  auto s = m.synthesize(seq, "s0", 1, 0);
  EXPECT_EQ(s.mel.frames, 0u);
  EXPECT_TRUE(s.hit_max_steps);
}

TEST(Seq2SeqDecoder, StopsAtThresholdOrLimit) {
  Model m = tiny_model(9);
  TokenSequence seq;
  seq.ids = {1, 2, 6};
  // stop bias large: fires on the first frame
  m.params().get("decoder.stop_proj.bias").data()[0] = 50.0;
  auto quick = m.synthesize(seq, "s0", 1);
  EXPECT_EQ(quick.mel.frames, 1u);
  EXPECT_FALSE(quick.hit_max_steps);
  m.params().get("decoder.stop_proj.bias").data()[0] = -50.0;
  auto capped = m.synthesize(seq, "s0", 1);
  EXPECT_EQ(capped.mel.frames, 30u);  // 10 x 3 tokens
  EXPECT_TRUE(capped.hit_max_steps);
}

TEST(Seq2SeqLoss, LimitQuadraticAndLengthMismatch) {
  TapeD tape(TapeD::Mode::kNoGrad);
  std::mt19937_64 rng(10);
  TensorD target = random_tensor({1, 5, 4}, rng, -1, 1, false);
  std::vector<double> stop_t = {0, 0, 0, 0, 1}, mask(5, 1.0);
  TensorD logits({1, 5}, {-60, -60, -60, -60, 60});
  auto perfect = seq2seq_loss(tape, target, target, logits, stop_t, mask);
  EXPECT_LT(perfect.total.item(), 1e-20);

  TensorD off1 = target.clone(), off2 = target.clone();
  for (std::size_t i = 0; i < off1.size(); ++i) {
    const double e = 0.1 * std::sin(double(i));
    off1.data()[i] += e;
    off2.data()[i] += 2 * e;
  }
  const double m1 = seq2seq_loss(tape, off1, target, logits, stop_t, mask).mel.item();
  const double m2 = seq2seq_loss(tape, off2, target, logits, stop_t, mask).mel.item();
  EXPECT_NEAR(m2, 4 * m1, 1e-12);

  TensorD short_target = random_tensor({1, 4, 4}, rng, -1, 1, false);
  EXPECT_THROW(seq2seq_loss(tape, target, short_target, logits, stop_t, mask), std::invalid_argument);
  EXPECT_THROW(seq2seq_loss(tape, target, target, logits, std::vector<double>(4, 0.0), mask),
               std::invalid_argument);
}

TEST(Seq2SeqLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    Model m = tiny_model(seed);
    // random biases keep pre-activations off the ReLU kink at exactly zero
    for (auto [_, p] : m.params().items()) {
      for (auto& v : p.data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    }
    auto a = random_example(rng, 2, 4, "s0");
    auto b = random_example(rng, 3, 3, "s1");
    auto batch = make_batch<double>({&a, &b}, m);
    std::vector<std::pair<std::string, TensorD>> params(m.params().items().begin(),
                                                        m.params().items().end());
    auto result = check_gradients(params, [&](TapeD& tape) {
      Rng drop(seed);
      auto out = m.forward(tape, batch, drop);
      return seq2seq_loss(tape, out.mels, batch.mels, out.stop_logits, batch.stop_targets,
                          batch.frame_mask)
          .total;
    });
    EXPECT_TRUE(result.ok()) << "seed " << seed << ": " << result.worst << " rel " << result.max_rel;
  }
}

TEST(Seq2SeqLoss, GradientReachesExactlyThePresentEmbeddingRows) {
  std::mt19937_64 rng(11);
  Model m = tiny_model(11);
  PairedExample a = random_example(rng, 0, 4, "s0"), b = random_example(rng, 0, 3, "s1");
  a.tokens.ids = {0, 2, 6};
  b.tokens.ids = {3, 6};
  auto batch = make_batch<double>({&a, &b}, m);
  TapeD tape;
  Rng drop(2);
  auto out = m.forward(tape, batch, drop);
  auto loss = seq2seq_loss(tape, out.mels, batch.mels, out.stop_logits, batch.stop_targets,
                           batch.frame_mask);
  tape.backward(loss.total);
  const auto g = m.embedding().grad();
  const std::size_t d = m.config().embed_dim;
  std::set<int> present = {0, 2, 3, 6};
  for (int row = 0; row < static_cast<int>(m.vocab().size()); ++row) {
    double norm = 0;
    for (std::size_t j = 0; j < d; ++j) norm += std::abs(g[row * d + j]);
    if (present.count(row)) {
      EXPECT_GT(norm, 0.0) << row;
    } else {
      EXPECT_EQ(norm, 0.0) << row;
    }
  }
}

TEST(Seq2SeqCheckpoint, RoundTripPreservesOutputAndMetadata) {
  Model m = tiny_model(12);
  m.speakers().register_speaker("s2");
  TensorArchive ar;
  m.save(ar);
  Model back = Model::load(ar);
  EXPECT_EQ(back.speakers().ids(), (std::vector<std::string>{"s0", "s1", "s2"}));
  EXPECT_EQ(back.inventory().symbols(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(back.vocab().size(), 7u);
  TokenSequence seq;
  seq.ids = {4, 0, 6};
  EXPECT_EQ(m.synthesize(seq, "s2", 3, 12).mel.data, back.synthesize(seq, "s2", 3, 12).mel.data);

  TensorArchive other;
  other.put_string("meta/kind", "vqvae");
  EXPECT_THROW(Model::load(other), FormatError);
}

TEST(Seq2SeqConfigJson, RejectsUnknownKey) {
  Json j = to_json(tiny_config());
  Seq2SeqConfig c;
  read_json(j, "cfg", c);
  EXPECT_EQ(c.mixtures, 2u);
  j["colour"] = 1;
  EXPECT_THROW(read_json(j, "cfg", c), ConfigError);
}

}  // namespace
}  // namespace vclone::test
