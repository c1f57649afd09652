// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "support/oracles.hpp"
#include "vidta/tensor/ops.hpp"
#include "vidta/tensor/params.hpp"
#include "vidta/tensor/random.hpp"
#include "vidta/tensor/tape.hpp"
#include "vidta/tensor/tensor.hpp"

namespace vidta {
namespace {

using testing::check_op;
using testing::random_tensor;
using V = std::vector<Var<double>>;

constexpr double kGradTol = 1e-4;

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW((Tensor<double>(Shape{2, 3}, std::vector<double>(5))), ShapeMismatch);
  Tensor<double> t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t(1, 2), 1.5);
  EXPECT_THROW(t.item(), ShapeMismatch);
  EXPECT_DOUBLE_EQ(Tensor<double>::scalar(4.0).item(), 4.0);
}

TEST(Tensor, CastAndReshapeKeepValues) {
  Tensor<double> t(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto f = t.cast<float>();
  EXPECT_EQ(f.shape(), t.shape());
  EXPECT_FLOAT_EQ(f[3], 4.0f);
  EXPECT_EQ(t.reshaped(Shape{4}).shape(), Shape{4});
  EXPECT_THROW(t.reshaped(Shape{3}), ShapeMismatch);
}

TEST(Ops, MatmulValuesAndShapeErrors) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(Shape{2, 3}, {1, 2, 3, 4, 5, 6}));
  auto b = tape.constant(Tensor<double>(Shape{3, 2}, {7, 8, 9, 10, 11, 12}));
  const auto c = matmul(a, b).value();
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_DOUBLE_EQ(c(0, 0), 58);
  EXPECT_DOUBLE_EQ(c(1, 1), 154);
  try {
    matmul(a, a);
    FAIL() << "expected ShapeMismatch";
  } catch (const ShapeMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Tape<double> tape;
  const auto s = softmax_lastdim(tape.constant(Tensor<double>::vector({0, 0, 0}))).value();
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Ops, SoftmaxStableForLargeInputs) {
  Tape<double> tape;
  Rng rng(1);
  auto x = random_tensor(rng, Shape{5, 7}, -1e4, 1e4);
  const auto s = softmax_lastdim(tape.constant(x)).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0;
    for (double v : s.row(r)) {
      EXPECT_TRUE(std::isfinite(v));
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Ops, SigmoidOfZeroIsHalf) {
  Tape<double> tape;
  EXPECT_DOUBLE_EQ(sigmoid(tape.constant(Tensor<double>::scalar(0.0))).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(sigmoid_value(-800.0), 0.0);
  EXPECT_DOUBLE_EQ(sigmoid_value(800.0), 1.0);
}

TEST(Ops, Conv1dOutputLength) {
  Tape<double> tape;
  for (std::size_t k : {1, 2, 3, 5}) {
    for (std::size_t pad : {0, 1, 5, 11}) {
      auto x = tape.constant(Tensor<double>(Shape{3, 20}, 1.0));
      auto w = tape.constant(Tensor<double>(Shape{4, 3, k}, 0.5));
      auto b = tape.constant(Tensor<double>(Shape{4}));
      EXPECT_EQ(conv1d(x, w, b, pad).value().dim(1), 20 + 2 * pad - k + 1);
    }
  }
}

TEST(Ops, Conv1dMatchesHandComputation) {
  Tape<double> tape;
  // one channel in/out, kernel [1, -1], padding 1: out[t] = x[t-1] - x[t]
  auto x = tape.constant(Tensor<double>(Shape{1, 3}, {1, 4, 9}));
  auto w = tape.constant(Tensor<double>(Shape{1, 1, 2}, {1, -1}));
  auto b = tape.constant(Tensor<double>(Shape{1}, {0.5}));
  const auto y = conv1d(x, w, b, 1).value();
  const std::vector<double> expect{-1 + 0.5, 1 - 4 + 0.5, 4 - 9 + 0.5, 9 + 0.5};
  ASSERT_EQ(y.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_DOUBLE_EQ(y[i], expect[i]);
}

TEST(Ops, MaxpoolPicksPerChannelMaximum) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{2, 4}, {1, 7, 3, 7, -5, -2, -9, -3}));
  const auto m = maxpool_global(x).value();
  EXPECT_DOUBLE_EQ(m[0], 7);
  EXPECT_DOUBLE_EQ(m[1], -2);
}

TEST(Ops, EmbeddingLookupRejectsOutOfRange) {
  Tape<double> tape;
  auto table = tape.constant(Tensor<double>(Shape{3, 2}));
  const std::vector<std::size_t> idx{0, 3};
  EXPECT_THROW(embedding_lookup(table, std::span<const std::size_t>(idx)), ShapeMismatch);
}

TEST(Ops, LayerNormStandardizesRows) {
  Tape<double> tape;
  Rng rng(3);
  auto x = tape.constant(random_tensor(rng, Shape{6, 16}, -5, 5));
  auto gain = tape.constant(Tensor<double>(Shape{16}, 1.0));
  auto bias = tape.constant(Tensor<double>(Shape{16}));
  const auto y = layer_norm(x, gain, bias).value();
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0, var = 0;
    for (double v : y.row(r)) mean += v;
    mean /= 16;
    for (double v : y.row(r)) var += (v - mean) * (v - mean);
    var /= 16;
    EXPECT_LE(std::abs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Ops, BatchNormEvalIsAffineFromRunningStats) {
  Tape<double> tape;
  BatchNormState<double> state(2);
  state.running_mean = Tensor<double>(Shape{2}, {1.0, -1.0});
  state.running_var = Tensor<double>(Shape{2}, {4.0, 0.25});
  auto gain = tape.constant(Tensor<double>(Shape{2}, {2.0, 1.0}));
  auto bias = tape.constant(Tensor<double>(Shape{2}, {0.5, 0.0}));
  auto x = tape.constant(Tensor<double>(Shape{1, 2}, {3.0, 0.0}));
  const auto y = batch_norm(x, gain, bias, state, false).value();
  EXPECT_NEAR(y[0], 2.0 * (3.0 - 1.0) / std::sqrt(4.0 + 1e-5) + 0.5, 1e-12);
  EXPECT_NEAR(y[1], (0.0 + 1.0) / std::sqrt(0.25 + 1e-5), 1e-12);
  const auto again = batch_norm(x, gain, bias, state, false).value();
  EXPECT_EQ(y, again);
  EXPECT_DOUBLE_EQ(state.running_mean[0], 1.0);
}

TEST(Ops, BatchNormTrainUpdatesRunningStats) {
  Tape<double> tape;
  BatchNormState<double> state(1);
  auto gain = tape.constant(Tensor<double>(Shape{1}, 1.0));
  auto bias = tape.constant(Tensor<double>(Shape{1}));
  auto x = tape.constant(Tensor<double>(Shape{4, 1}, {1, 2, 3, 4}));
  batch_norm(x, gain, bias, state, true);
  EXPECT_NEAR(state.running_mean[0], 0.1 * 2.5, 1e-12);
  // unbiased variance of {1,2,3,4} is 5/3
  EXPECT_NEAR(state.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-12);
}

TEST(Ops, DropoutIsInvertedAndSeeded) {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>(Shape{1000}, 1.0));
  Rng a(5), b(5);
  const auto ya = dropout(x, 0.25, a).value();
  const auto yb = dropout(x, 0.25, b).value();
  EXPECT_EQ(ya, yb);
  std::size_t zeros = 0;
  for (double v : ya.values()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_GT(zeros, 180u);
  EXPECT_LT(zeros, 320u);
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::vector({3, -1, 2}));
  tape.backward(sum(x));
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, SumOfSquares) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::vector({1, 2}));
  tape.backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), NotScalarLoss);
}

TEST(Backward, ConstantsRecordNoRule) {
  Tape<double> tape;
  auto c = tape.constant(Tensor<double>::vector({1, 2}));
  auto y = mul(c, c);
  EXPECT_FALSE(y.requires_grad());
  auto x = tape.variable(Tensor<double>::vector({1, 2}));
  EXPECT_TRUE(add(c, x).requires_grad());
}

TEST(Backward, ParameterGradientsAccumulateInStore) {
  ParamStore<double> store;
  const auto id = store.add("w", Shape{2});
  store[id].value = Tensor<double>::vector({1.0, -3.0});
  for (int pass = 0; pass < 2; ++pass) {
    Tape<double> tape;
    auto p = store.bind(tape);
    tape.backward(sum(mul(p[id], p[id])));
  }
  EXPECT_DOUBLE_EQ(store[id].grad[0], 4.0);
  EXPECT_DOUBLE_EQ(store[id].grad[1], -12.0);
  store.zero_grad();
  EXPECT_DOUBLE_EQ(store[id].grad[1], 0.0);
}

TEST(MseLoss, KnownValues) {
  Tape<double> tape;
  auto same = tape.constant(Tensor<double>::vector({1, 2}));
  EXPECT_DOUBLE_EQ(mse_loss(same, same).value().item(), 0.0);
  auto zeros = tape.constant(Tensor<double>::vector({0, 0}));
  EXPECT_DOUBLE_EQ(mse_loss(same, zeros).value().item(), 2.5);
  auto three = tape.constant(Tensor<double>::vector({0, 0, 0}));
  EXPECT_THROW(mse_loss(same, three), ShapeMismatch);
}

TEST(MseLoss, MatchesDirectSummation) {
  Tape<double> tape;
  Rng rng(8);
  const auto p = random_tensor(rng, Shape{37}, -3, 3);
  const auto t = random_tensor(rng, Shape{37}, -3, 3);
  double direct = 0;
  for (std::size_t i = 0; i < 37; ++i) direct += (p[i] - t[i]) * (p[i] - t[i]);
  direct /= 37;
  EXPECT_NEAR(mse_loss(tape.constant(p), tape.constant(t)).value().item(), direct, 1e-12);
}

// Gradient checks of every primitive against central differences.

TEST(GradCheck, MatmulAndLinear) {
  Rng rng(11);
  EXPECT_LE(check_op({random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})},
                     [](Tape<double>&, const V& in) { return matmul(in[0], in[1]); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}), random_tensor(rng, {5})},
                     [](Tape<double>&, const V& in) { return linear(in[0], in[1], in[2]); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {4}), random_tensor(rng, {4, 5}), random_tensor(rng, {5})},
                     [](Tape<double>&, const V& in) { return linear(in[0], in[1], in[2]); })
                .max_rel_error,
            kGradTol);
}

TEST(GradCheck, ShapeOps) {
  Rng rng(12);
  EXPECT_LE(check_op({random_tensor(rng, {3, 4})}, [](Tape<double>&, const V& in) { return transpose(in[0]); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {3, 4})},
                     [](Tape<double>&, const V& in) { return reshape(in[0], Shape{2, 6}); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {4, 3})}, [](Tape<double>&, const V& in) { return select_row(in[0], 2); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {4, 3})}, [](Tape<double>&, const V& in) { return mean_rows(in[0]); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {3}), random_tensor(rng, {3})},
                     [](Tape<double>&, const V& in) {
                       const std::vector<Var<double>> rows{in[0], in[1], in[0]};
                       return stack_rows(std::span<const Var<double>>(rows));
                     })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {3}), random_tensor(rng, {2})},
                     [](Tape<double>&, const V& in) { return concat(in[0], in[1]); })
                .max_rel_error,
            kGradTol);
  const std::vector<std::size_t> rows{2, 0, 2, 1};
  EXPECT_LE(check_op({random_tensor(rng, {3, 2})},
                     [&](Tape<double>&, const V& in) {
                       return gather_rows(in[0], std::span<const std::size_t>(rows));
                     })
                .max_rel_error,
            kGradTol);
}

TEST(GradCheck, ElementwiseWithBroadcast) {
  Rng rng(13);
  for (auto op : {add<double>, sub<double>, mul<double>}) {
    EXPECT_LE(check_op({random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4})},
                       [op](Tape<double>&, const V& in) { return op(in[0], in[1]); })
                  .max_rel_error,
              kGradTol);
    EXPECT_LE(check_op({random_tensor(rng, {2, 3, 4}), random_tensor(rng, {4})},
                       [op](Tape<double>&, const V& in) { return op(in[0], in[1]); })
                  .max_rel_error,
              kGradTol);
  }
  EXPECT_LE(check_op({random_tensor(rng, {5})},
                     [](Tape<double>&, const V& in) { return affine(in[0], 1.5, -0.25); })
                .max_rel_error,
            kGradTol);
}

TEST(GradCheck, Activations) {
  Rng rng(14);
  // keep relu inputs away from the kink
  auto x = random_tensor(rng, {20});
  for (auto& v : x.values()) v = v < 0 ? v - 0.1 : v + 0.1;
  EXPECT_LE(check_op({x}, [](Tape<double>&, const V& in) { return relu(in[0]); }).max_rel_error, kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {20}, -4, 4)}, [](Tape<double>&, const V& in) { return sigmoid(in[0]); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {3, 5}, -3, 3)},
                     [](Tape<double>&, const V& in) { return softmax_lastdim(in[0]); })
                .max_rel_error,
            kGradTol);
}

TEST(GradCheck, Normalizations) {
  Rng rng(15);
  EXPECT_LE(check_op({random_tensor(rng, {4, 6}), random_tensor(rng, {6}), random_tensor(rng, {6})},
                     [](Tape<double>&, const V& in) { return layer_norm(in[0], in[1], in[2]); })
                .max_rel_error,
            kGradTol);
  for (bool train : {true, false}) {
    EXPECT_LE(check_op({random_tensor(rng, {5, 3}), random_tensor(rng, {3}), random_tensor(rng, {3})},
                       [train](Tape<double>&, const V& in) {
                         BatchNormState<double> state(3);
                         state.running_var.fill(0.7);
                         return batch_norm(in[0], in[1], in[2], state, train);
                       })
                  .max_rel_error,
              kGradTol)
        << "train=" << train;
  }
}

TEST(GradCheck, ConvolutionAndPooling) {
  Rng rng(16);
  for (std::size_t pad : {0, 2, 5}) {
    EXPECT_LE(check_op({random_tensor(rng, {3, 9}), random_tensor(rng, {2, 3, 3}), random_tensor(rng, {2})},
                       [pad](Tape<double>&, const V& in) { return conv1d(in[0], in[1], in[2], pad); })
                  .max_rel_error,
              kGradTol)
        << "padding=" << pad;
  }
  EXPECT_LE(check_op({random_tensor(rng, {3, 8})}, [](Tape<double>&, const V& in) { return maxpool_global(in[0]); })
                .max_rel_error,
            kGradTol);
  const std::vector<std::size_t> idx{1, 0, 1, 3, 3};
  EXPECT_LE(check_op({random_tensor(rng, {4, 3})},
                     [&](Tape<double>&, const V& in) {
                       return embedding_lookup(in[0], std::span<const std::size_t>(idx));
                     })
                .max_rel_error,
            kGradTol);
}

TEST(GradCheck, SegmentOps) {
  Rng rng(17);
  const std::vector<std::size_t> seg{0, 0, 1, 2, 2, 2};
  EXPECT_LE(check_op({random_tensor(rng, {6, 6})},
                     [](Tape<double>&, const V& in) { return block_sum(in[0], 3); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {6, 2}, -2, 2)},
                     [&](Tape<double>&, const V& in) {
                       return segment_softmax(in[0], std::span<const std::size_t>(seg), 4);
                     })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {6, 2}), random_tensor(rng, {6, 6})},
                     [&](Tape<double>&, const V& in) {
                       return weighted_scatter(in[0], in[1], std::span<const std::size_t>(seg), 4);
                     })
                .max_rel_error,
            kGradTol);
}

TEST(GradCheck, LossAndDropout) {
  Rng rng(18);
  EXPECT_LE(check_op({random_tensor(rng, {7}), random_tensor(rng, {7})},
                     [](Tape<double>&, const V& in) { return mse_loss(in[0], in[1]); })
                .max_rel_error,
            kGradTol);
  EXPECT_LE(check_op({random_tensor(rng, {4, 5})},
                     [](Tape<double>&, const V& in) {
                       Rng mask(4);
                       return dropout(in[0], 0.3, mask);
                     })
                .max_rel_error,
            kGradTol);
}

TEST(SegmentSoftmax, EmptySegmentsStayEmpty) {
  Tape<double> tape;
  const std::vector<std::size_t> seg{0, 0, 2};
  auto w = segment_softmax(tape.constant(Tensor<double>(Shape{3, 1}, {1.0, 1.0, 5.0})),
                           std::span<const std::size_t>(seg), 3)
               .value();
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  EXPECT_DOUBLE_EQ(w[2], 1.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> w{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamMoments<double> m{Tensor<double>(Shape{2}), Tensor<double>(Shape{2})};
  adam_step<double>(std::span<double>(w), std::span<const double>(g), m, 1, {});
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], -2.0);
}

TEST(Adam, OneStepDescendsOnSquare) {
  std::vector<double> w{1.0};
  const std::vector<double> g{2.0 * w[0]};
  AdamMoments<double> m{Tensor<double>(Shape{1}), Tensor<double>(Shape{1})};
  AdamHyper h;
  h.lr = 0.1;
  adam_step<double>(std::span<double>(w), std::span<const double>(g), m, 1, h);
  EXPECT_LT(w[0], 1.0);
  // the first bias-corrected step has magnitude lr
  EXPECT_NEAR(w[0], 0.9, 1e-6);
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  // f(w) = (w0 - 3)^2 + 2 (w1 + 1)^2 + w0 w1 has minimizer (4, -2)
  ParamStore<double> store;
  const auto id = store.add("w", Shape{2});
  Adam<double> adam;
  for (int step = 0; step < 200; ++step) {
    store.zero_grad();
    const double w0 = store[id].value[0], w1 = store[id].value[1];
    store[id].grad[0] = 2 * (w0 - 3) + w1;
    store[id].grad[1] = 4 * (w1 + 1) + w0;
    adam.step(store, 0.1);
  }
  EXPECT_NEAR(store[id].value[0], 4.0, 1e-3);
  EXPECT_NEAR(store[id].value[1], -2.0, 1e-3);
  EXPECT_EQ(adam.steps(), 200);
}

TEST(Adam, RejectsMismatchedSizes) {
  std::vector<double> w{1.0, 2.0};
  const std::vector<double> g{0.0};
  AdamMoments<double> m{Tensor<double>(Shape{2}), Tensor<double>(Shape{2})};
  EXPECT_THROW(adam_step<double>(std::span<double>(w), std::span<const double>(g), m, 1, {}), ShapeMismatch);
}

TEST(ParamStore, NamesAreUnique) {
  ParamStore<float> store;
  store.add("a", Shape{2});
  EXPECT_THROW(store.add("a", Shape{3}), Error);
  EXPECT_TRUE(store.find("a").has_value());
  EXPECT_FALSE(store.find("b").has_value());
  EXPECT_THROW(store.at("b"), Error);
}

TEST(Random, SeededAndRestorable) {
  Rng a(42), b(42);
  EXPECT_EQ(uniform01(a), uniform01(b));
  const std::string state = rng_state(a);
  const double next = uniform01(a);
  Rng c;
  restore_rng_state(c, state);
  EXPECT_EQ(uniform01(c), next);
  std::vector<int> items(20);
  std::iota(items.begin(), items.end(), 0);
  auto copy = items;
  Rng s1(9), s2(9);
  shuffle(items, s1);
  shuffle(copy, s2);
  EXPECT_EQ(items, copy);
  EXPECT_EQ(std::set<int>(items.begin(), items.end()).size(), 20u);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(a);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(uniform_index(a, 7), 7u);
  }
}

}  // namespace
}  // namespace vidta
