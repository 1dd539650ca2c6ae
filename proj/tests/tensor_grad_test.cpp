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

#include <cstring>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "vclone/serialize.hpp"

namespace vclone::test {
namespace {

constexpr int kSeeds = 20;

using Params = std::vector<std::pair<std::string, TensorD>>;

void expect_fd(const Params& params, const std::function<TensorD(TapeD&)>& fn,
               const std::string& what) {
  GradCheck r = check_gradients(params, fn);
  EXPECT_TRUE(r.ok()) << what << ": max rel " << r.max_rel << " at " << r.worst;
}

TEST(TensorGrad, MatmulShapeAlgebra) {
  TapeD tape;
  TensorD a({2, 3}), b({3, 4});
  EXPECT_EQ(tape.matmul(a, b).shape(), (Shape{2, 4}));
}

TEST(TensorGrad, ShapeMismatchNamesShapes) {
  TapeD tape;
  TensorD a({2, 3}), b({2, 3});
  try {
    tape.matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(tape.add(TensorD({2}), TensorD({3})), ShapeError);
  EXPECT_THROW(tape.straight_through(TensorD({2}), TensorD({3})), ShapeError);
}

TEST(TensorGrad, TanhAtOriginHasUnitSlope) {
  TapeD tape;
  TensorD x({3, 2}, true);
  TensorD y = tape.tanh(x);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  tape.backward(tape.sum(y));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(TensorGrad, ElementwiseOpsMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    TensorD a = random_tensor({3, 5}, rng), b = random_tensor({3, 5}, rng);
    TensorD bias = random_tensor({5}, rng);
    expect_fd({{"a", a}, {"b", b}}, [&](TapeD& t) { return weighted_sum(t, t.add(a, b), seed); }, "add");
    expect_fd({{"a", a}, {"b", b}}, [&](TapeD& t) { return weighted_sum(t, t.sub(a, b), seed); }, "sub");
    expect_fd({{"a", a}, {"b", b}}, [&](TapeD& t) { return weighted_sum(t, t.mul(a, b), seed); }, "mul");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.scale(a, -1.7), seed); }, "scale");
    expect_fd({{"a", a}, {"bias", bias}},
              [&](TapeD& t) { return weighted_sum(t, t.add_bias(a, bias), seed); }, "add_bias");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.tanh(a), seed); }, "tanh");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.sigmoid(a), seed); }, "sigmoid");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.softplus(a), seed); }, "softplus");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.exp(a), seed); }, "exp");
    expect_fd({{"a", a}}, [&](TapeD& t) { return t.sum(a); }, "sum");
    expect_fd({{"a", a}}, [&](TapeD& t) { return t.mean(t.mul(a, a)); }, "mean");
  }
}

TEST(TensorGrad, ReluMatchesFiniteDifferencesAwayFromKink) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed);
    TensorD a = random_tensor({4, 6}, rng);
    for (auto& v : a.data()) {
      if (std::abs(v) < 1e-3) v += 0.01;
    }
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.relu(a), seed); }, "relu");
  }
}

TEST(TensorGrad, StructuralOpsMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 100);
    TensorD a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 2, 4}, rng);
    TensorD m = random_tensor({3, 4}, rng), n = random_tensor({4, 5}, rng);
    expect_fd({{"m", m}, {"n", n}}, [&](TapeD& t) { return weighted_sum(t, t.matmul(m, n), seed); },
              "matmul");
    expect_fd({{"a", a}, {"b", b}},
              [&](TapeD& t) { return weighted_sum(t, t.concat({a, b}, 1), seed); }, "concat");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.slice(a, 2, 1, 3), seed); },
              "slice");
    expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.reshape(a, {6, 4}), seed); },
              "reshape");
    expect_fd({{"m", m}}, [&](TapeD& t) { return weighted_sum(t, t.stack({m, m, m}, 1), seed); },
              "stack");
    for (std::size_t axis = 0; axis < 3; ++axis) {
      expect_fd({{"a", a}}, [&](TapeD& t) { return weighted_sum(t, t.softmax(a, axis), seed); },
                "softmax axis " + std::to_string(axis));
    }
    TensorD table = random_tensor({6, 3}, rng);
    std::vector<int> ids = {0, 5, 2, 2, 1};
    expect_fd({{"table", table}},
              [&](TapeD& t) { return weighted_sum(t, t.embedding(table, ids), seed); }, "embedding");
  }
}

TEST(TensorGrad, Conv1dMatchesFiniteDifferences) {
  // batch 1, 4 channels, 7 steps (laid out [B, T, C])
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 200);
    TensorD x = random_tensor({1, 7, 4}, rng);
    TensorD w = random_tensor({5, 4, 3}, rng);
    TensorD b = random_tensor({3}, rng);
    expect_fd({{"x", x}, {"w", w}, {"b", b}},
              [&](TapeD& t) { return weighted_sum(t, t.conv1d(x, w, b), seed); }, "conv1d");
  }
}

TEST(TensorGrad, LstmCellMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 300);
    TensorD x = random_tensor({2, 3}, rng), h = random_tensor({2, 4}, rng),
            c = random_tensor({2, 4}, rng);
    TensorD wih = random_tensor({3, 16}, rng), whh = random_tensor({4, 16}, rng),
            b = random_tensor({16}, rng);
    expect_fd({{"x", x}, {"h", h}, {"c", c}, {"wih", wih}, {"whh", whh}, {"b", b}},
              [&](TapeD& t) {
                auto s = t.lstm_cell(x, h, c, wih, whh, b);
                return t.add(weighted_sum(t, s.h, seed), weighted_sum(t, s.c, seed + 1));
              },
              "lstm_cell");
  }
}

TEST(TensorGrad, LstmSequenceMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 400);
    TensorD x = random_tensor({2, 5, 3}, rng);
    TensorD wih = random_tensor({3, 8}, rng), whh = random_tensor({2, 8}, rng),
            b = random_tensor({8}, rng);
    for (bool reverse : {false, true}) {
      for (const std::vector<std::size_t>& lens :
           {std::vector<std::size_t>{}, std::vector<std::size_t>{5, 3}}) {
        expect_fd({{"x", x}, {"wih", wih}, {"whh", whh}, {"b", b}},
                  [&](TapeD& t) {
                    return weighted_sum(t, t.lstm_sequence(x, wih, whh, b, lens, reverse), seed);
                  },
                  std::string("lstm_sequence reverse=") + (reverse ? "1" : "0"));
      }
    }
  }
}

TEST(TensorGrad, LstmSequenceAgreesWithUnrolledCells) {
  std::mt19937_64 rng(7);
  TensorD x = random_tensor({2, 4, 3}, rng, -1, 1, false);
  TensorD wih = random_tensor({3, 8}, rng), whh = random_tensor({2, 8}, rng),
          b = random_tensor({8}, rng);
  TapeD tape(TapeD::Mode::kNoGrad);
  TensorD fused = tape.lstm_sequence(x, wih, whh, b, {}, false);
  LstmStep<double> s{TensorD({2, 2}), TensorD({2, 2})};
  for (std::size_t t = 0; t < 4; ++t) {
    TensorD xt = tape.reshape(tape.slice(x, 1, t, t + 1), {2, 3});
    s = tape.lstm_cell(xt, s.h, s.c, wih, whh, b);
    for (std::size_t bi = 0; bi < 2; ++bi) {
      for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_NEAR(fused.data()[(bi * 4 + t) * 2 + j], s.h.data()[bi * 2 + j], 1e-14);
      }
    }
  }
}

TEST(TensorGrad, AttentionOpsMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 500);
    TensorD mu = random_tensor({2, 3}, rng, 0.0, 6.0);
    TensorD sigma = random_tensor({2, 3}, rng, 0.8, 2.5);
    TensorD logits = random_tensor({2, 3}, rng);
    TensorD memory = random_tensor({2, 7, 4}, rng);
    const std::vector<std::size_t> lens = {7, 5};
    expect_fd({{"mu", mu}, {"sigma", sigma}, {"logits", logits}},
              [&](TapeD& t) {
                TensorD w = t.softmax(logits, 1);
                return weighted_sum(t, t.gmm_alignment(mu, sigma, w, 7, lens), seed);
              },
              "gmm_alignment");
    TensorD alpha = random_tensor({2, 7}, rng, 0.0, 1.0);
    expect_fd({{"alpha", alpha}, {"memory", memory}},
              [&](TapeD& t) { return weighted_sum(t, t.attend(alpha, memory), seed); }, "attend");
  }
}

TEST(TensorGrad, LossesMatchFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 600);
    TensorD a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
    TensorD logits = random_tensor({6}, rng, -3, 3);
    std::vector<double> mask = {1, 1, 0, 1, 0, 1};
    std::vector<double> targets = {0, 1, 0, 0, 1, 1};
    expect_fd({{"a", a}, {"b", b}}, [&](TapeD& t) { return t.mse_loss(a, b); }, "mse");
    expect_fd({{"a", a}, {"b", b}}, [&](TapeD& t) { return t.masked_mse(a, b, mask); },
              "masked_mse");
    expect_fd({{"logits", logits}},
              [&](TapeD& t) { return t.bce_with_logits(logits, targets, mask); }, "bce");
  }
}

TEST(TensorGrad, ThreeLayerCompositeMatchesFiniteDifferences) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(seed + 700);
    TensorD x = random_tensor({4, 3}, rng, -1, 1, false);
    TensorD y = random_tensor({4, 2}, rng, 0, 1, false);
    TensorD w1 = random_tensor({3, 5}, rng), b1 = random_tensor({5}, rng);
    TensorD w2 = random_tensor({5, 5}, rng), b2 = random_tensor({5}, rng);
    TensorD w3 = random_tensor({5, 2}, rng), b3 = random_tensor({2}, rng);
    expect_fd({{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}, {"w3", w3}, {"b3", b3}},
              [&](TapeD& t) {
                TensorD h1 = t.tanh(t.add_bias(t.matmul(x, w1), b1));
                TensorD h2 = t.sigmoid(t.add_bias(t.matmul(h1, w2), b2));
                TensorD out = t.add_bias(t.matmul(h2, w3), b3);
                return t.mse_loss(out, y);
              },
              "composite");
  }
}

TEST(TensorGrad, StopGradientForwardIsBitIdentical) {
  std::mt19937_64 rng(1);
  TensorD t0 = random_tensor({3, 3}, rng);
  TapeD tape;
  TensorD s = tape.stop_gradient(t0);
  EXPECT_EQ(std::memcmp(s.data().data(), t0.data().data(), t0.size() * sizeof(double)), 0);
  EXPECT_FALSE(s.requires_grad());
}

TEST(TensorGrad, StopGradientBlocksOnlyTheStoppedFactor) {
  std::mt19937_64 rng(2);
  TensorD t0 = random_tensor({5}, rng);
  TapeD tape;
  TensorD loss = tape.sum(tape.mul(tape.stop_gradient(t0), t0));
  tape.backward(loss);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(t0.grad()[i], t0.data()[i]);

  // finite differences along the non-stopped path agree
  TensorD frozen = t0.clone();
  frozen.set_requires_grad(false);
  expect_fd({{"t", t0}}, [&](TapeD& t) { return t.sum(t.mul(frozen, t0)); }, "sg product");
}

TEST(TensorGrad, StopGradientInCodebookTerm) {
  std::mt19937_64 rng(3);
  TensorD z = random_tensor({4, 2}, rng), e = random_tensor({4, 2}, rng);
  TapeD tape;
  tape.backward(tape.mse_loss(tape.stop_gradient(z), e));
  for (double g : z.grad()) EXPECT_EQ(g, 0.0);
  double norm = 0;
  for (double g : e.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(TensorGrad, StraightThroughForwardAndBackward) {
  TensorD cont({2}, {1.0, 2.0}, true), quant({2}, {5.0, 6.0}, true);
  TapeD tape;
  TensorD out = tape.straight_through(cont, quant);
  EXPECT_EQ(out.data()[0], 5.0);
  EXPECT_EQ(out.data()[1], 6.0);
  TensorD g({2}, {0.3, -1.25});
  tape.backward(tape.sum(tape.mul(out, g)));
  EXPECT_EQ(cont.grad()[0], 0.3);
  EXPECT_EQ(cont.grad()[1], -1.25);
  EXPECT_FALSE(quant.has_grad());
}

TEST(TensorGrad, BackwardClosedForms) {
  std::mt19937_64 rng(4);
  TensorD t0 = random_tensor({3, 2}, rng);
  {
    TapeD tape;
    tape.backward(tape.sum(t0));
    for (double g : t0.grad()) EXPECT_EQ(g, 1.0);
  }
  TensorD a = random_tensor({6}, rng), b = random_tensor({6}, rng, -1, 1, false);
  TapeD tape;
  tape.backward(tape.mse_loss(a, b));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(a.grad()[i], 2.0 * (a.data()[i] - b.data()[i]) / 6.0, 1e-15);
  }
}

TEST(TensorGrad, BackwardErrors) {
  std::mt19937_64 rng(5);
  TensorD a = random_tensor({3}, rng);
  TapeD tape;
  EXPECT_THROW(tape.backward(tape.sum(TensorD({3}))), std::logic_error);  // empty tape
  TensorD y = tape.tanh(a);
  EXPECT_THROW(tape.backward(y), ShapeError);  // non-scalar
  TensorD loss = tape.sum(y);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), std::logic_error);  // double backward
  EXPECT_EQ(tape.size(), 0u);
}

TEST(TensorGrad, NoGradTapeRecordsNothing) {
  std::mt19937_64 rng(6);
  TensorD a = random_tensor({3}, rng);
  TapeD tape(TapeD::Mode::kNoGrad);
  TensorD y = tape.sum(tape.tanh(a));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.requires_grad());
}

TEST(TensorGrad, RepeatedPassesAreBitIdentical) {
  auto run = []() {
    std::mt19937_64 rng(11);
    TensorD x = random_tensor({2, 6, 3}, rng, -1, 1, false);
    TensorD w = random_tensor({3, 3, 4}, rng), wih = random_tensor({4, 8}, rng),
            whh = random_tensor({2, 8}, rng), b = random_tensor({8}, rng);
    TapeD tape;
    TensorD h = tape.relu(tape.conv1d(x, w, TensorD()));
    TensorD y = tape.lstm_sequence(h, wih, whh, b, {6, 4}, true);
    tape.backward(tape.mean(tape.mul(y, y)));
    std::vector<double> out;
    for (auto* t : {&w, &wih, &whh, &b}) {
      auto g = t->grad();
      out.insert(out.end(), g.begin(), g.end());
    }
    return out;
  };
  const auto g1 = run(), g2 = run();
  ASSERT_EQ(g1.size(), g2.size());
  EXPECT_EQ(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)), 0);
}

// ----------------------------------------------------------- serialization

TEST(TensorArchive, RoundTripIsBitExact) {
  std::mt19937_64 rng(9);
  TensorArchive ar;
  TensorD d = random_tensor({3, 4, 2}, rng);
  std::vector<float> fv(17);
  for (auto& v : fv) v = static_cast<float>(uniform_pm(rng, 100.0));
  fv[3] = std::numeric_limits<float>::denorm_min();
  fv[4] = -0.0f;
  Tensor<float> f({17}, fv);
  ar.put("weights/double", d);
  ar.put("weights/float", f);
  ar.put("scalar", TensorD::scalar(3.5));
  ar.put_i64("meta/step", {42, -7});
  ar.put_string("meta/names", "alpha\nbeta");
  std::stringstream ss;
  ar.write(ss);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "VCLT");

  std::stringstream in(bytes);
  TensorArchive back = TensorArchive::read(in);
  TensorD d2 = back.get<double>("weights/double");
  Tensor<float> f2 = back.get<float>("weights/float");
  EXPECT_EQ(d2.shape(), d.shape());
  EXPECT_EQ(std::memcmp(d2.data().data(), d.data().data(), d.size() * 8), 0);
  EXPECT_EQ(std::memcmp(f2.data().data(), f.data().data(), f.size() * 4), 0);
  EXPECT_EQ(back.get<double>("scalar").item(), 3.5);
  EXPECT_EQ(back.get_i64("meta/step"), (std::vector<std::int64_t>{42, -7}));
  EXPECT_EQ(back.get_string("meta/names"), "alpha\nbeta");

  std::stringstream again;
  back.write(again);
  EXPECT_EQ(again.str(), bytes);
}

TEST(TensorArchive, RejectsMalformedInput) {
  std::stringstream bad("XXXX\x01\0\0\0");
  EXPECT_THROW(TensorArchive::read(bad), FormatError);
  TensorArchive ar;
  ar.put("w", TensorD({4}, {1, 2, 3, 4}));
  std::stringstream ss;
  ar.write(ss);
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream in(truncated);
  EXPECT_THROW(TensorArchive::read(in), FormatError);
}

}  // namespace
}  // namespace vclone::test
