// Copyright 2026 The xluda authors
// SPDX-License-Identifier: Apache-2.0
#include "xluda/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace xluda;

TEST(TensorOps, MatmulIdentity) {
  Tape tape;
  Tensor a = make_tensor({2, 2}, {1, 2, 3, 4});
  Tensor id = make_tensor({2, 2}, {1, 0, 0, 1});
  Tensor out = matmul(tape, a, id);
  EXPECT_EQ(out->values, (std::vector<double>{1, 2, 3, 4}));
}

TEST(TensorOps, LogsumexpStable) {
  Tape tape;
  Tensor x = make_tensor({1, 2}, {1000.0, 1000.0});
  Tensor out = logsumexp_rows(tape, x);
  EXPECT_NEAR(out->values[0], 1000.0 + std::log(2.0), 1e-12);
}

TEST(TensorOps, LayerNormConstantRow) {
  Tape tape;
  Tensor x = make_tensor({1, 4}, {3.0, 3.0, 3.0, 3.0});
  Tensor gain = make_tensor({4}, {1, 1, 1, 1});
  Tensor bias = make_tensor({4}, {0, 0, 0, 0});
  Tensor out = layer_norm(tape, x, gain, bias);
  for (double v : out->values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(TensorOps, ShapeMismatchNamesOp) {
  Tape tape;
  Tensor a = make_tensor({2, 2}, {1, 2, 3, 4});
  Tensor b = make_tensor({1, 3}, {1, 2, 3});
  try {
    add(tape, a, b);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("add"), std::string::npos);
  }
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  Tensor x = make_tensor({1}, {3.0}, true);
  Tensor loss = reduce_mean(tape, mul(tape, x, x));
  tape.backward(loss);
  EXPECT_NEAR(x->grad[0], 6.0, 1e-12);
}

TEST(Backward, UnreachableParamGetsZero) {
  Tape tape;
  Tensor x = make_tensor({1}, {3.0}, true);
  Tensor y = make_tensor({1}, {5.0}, true);
  Tensor loss = reduce_mean(tape, mul(tape, x, x));
  tape.backward(loss);
  EXPECT_EQ(y->grad[0], 0.0);
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  Tensor x = make_tensor({1, 2}, {1.0, 2.0}, true);
  Tensor y = add(tape, x, x);
  EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(Backward, TwiceWithoutZeroingDoubles) {
  Tensor x = make_tensor({1}, {3.0}, true);
  Tape tape;
  Tensor loss = reduce_mean(tape, mul(tape, x, x));
  tape.backward(loss);
  double once = x->grad[0];
  Tape tape2;
  Tensor loss2 = reduce_mean(tape2, mul(tape2, x, x));
  tape2.backward(loss2);
  EXPECT_NEAR(x->grad[0], 2.0 * once, 1e-12);
}

TEST(Backward, StopGradientBlocks) {
  Tape tape;
  Tensor x = make_tensor({1}, {3.0}, true);
  Tensor frozen = stop_gradient(tape, x);
  Tensor y = mul(tape, x, x);
  Tensor loss = reduce_mean(tape, add(tape, y, frozen));
  tape.backward(loss);
  // d/dx of (x^2 + sg(x)) = 2x only
  EXPECT_NEAR(x->grad[0], 6.0, 1e-12);
}

// finite-difference oracle for each exposed op at unit-scale random points
namespace {

double rand_val(Rng& rng) { return 2.0 * rng.next_double() - 1.0; }

Tensor rand_tensor(std::vector<std::size_t> shape, Rng& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rand_val(rng);
  return make_tensor(std::move(shape), std::move(v), true);
}

}  // namespace

TEST(GradCheck, Quadratic) {
  Rng rng(1);
  Tensor x = rand_tensor({3, 3}, rng);
  auto f = [&](bool with_grad) {
    Tape tape;
    Tensor loss = reduce_mean(tape, mul(tape, x, x));
    if (with_grad) tape.backward(loss);
    return loss->values[0];
  };
  EXPECT_LT(grad_check(f, {x}, 1e-5, 200, 0), 1e-8);
}

TEST(GradCheck, CoreOpComposition) {
  Rng rng(2);
  Tensor a = rand_tensor({4, 5}, rng);
  Tensor b = rand_tensor({5, 3}, rng);
  Tensor bias = rand_tensor({3}, rng);
  Tensor gain = rand_tensor({3}, rng);
  auto f = [&](bool with_grad) {
    Tape tape;
    Tensor h = relu(tape, add_bias(tape, matmul(tape, a, b), bias));
    h = layer_norm(tape, h, gain, bias);
    Tensor lse = logsumexp_rows(tape, h);
    Tensor loss = reduce_mean(tape, concat_rows(tape, lse, slice_rows(tape, lse, 0, 2)));
    if (with_grad) tape.backward(loss);
    return loss->values[0];
  };
  EXPECT_LT(grad_check(f, {a, b, bias, gain}, 1e-5, 200, 1), 1e-4);
}

TEST(GradCheck, AttentionFused) {
  Rng rng(3);
  std::size_t batch = 2, seq = 3, d = 4;
  Tensor q = rand_tensor({batch * seq, d}, rng);
  Tensor k = rand_tensor({batch * seq, d}, rng);
  Tensor v = rand_tensor({batch * seq, d}, rng);
  std::vector<double> mask{1, 1, 0, 1, 1, 1};  // one PAD key in example 0
  auto f = [&](bool with_grad) {
    Tape tape;
    Tensor out = attention(tape, q, k, v, batch, seq, 2, mask);
    Tensor loss = reduce_mean(tape, mul(tape, out, out));
    if (with_grad) tape.backward(loss);
    return loss->values[0];
  };
  EXPECT_LT(grad_check(f, {q, k, v}, 1e-5, 200, 2), 1e-6);
}

TEST(GradCheck, CrossEntropyAndKl) {
  Rng rng(4);
  Tensor logits = rand_tensor({4, 3}, rng);
  std::vector<int> labels{0, 2, -1, 1};
  std::vector<double> q(12);
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0;
    for (int c = 0; c < 3; ++c) {
      q[r * 3 + c] = 0.1 + rng.next_double();
      z += q[r * 3 + c];
    }
    for (int c = 0; c < 3; ++c) q[r * 3 + c] /= z;
  }
  auto f = [&](bool with_grad) {
    Tape tape;
    Tensor ce = cross_entropy_logits(tape, logits, labels);
    Tensor kl1 = kl_softmax_vs_const(tape, logits, q);
    Tensor kl2 = kl_const_vs_softmax(tape, q, logits);
    Tensor loss = add(tape, ce, add(tape, kl1, kl2));
    if (with_grad) tape.backward(loss);
    return loss->values[0];
  };
  EXPECT_LT(grad_check(f, {logits}, 1e-5, 200, 3), 1e-6);
}

TEST(GradCheck, EmbeddingAndGather) {
  Rng rng(5);
  Tensor table = rand_tensor({6, 4}, rng);
  std::vector<int> ids{0, 3, 3, 5};
  auto f = [&](bool with_grad) {
    Tape tape;
    Tensor rows = embedding_lookup(tape, table, ids);
    Tensor picked = gather_rows(tape, rows, {1, 2});
    Tensor loss = reduce_mean(tape, mul(tape, picked, picked));
    if (with_grad) tape.backward(loss);
    return loss->values[0];
  };
  EXPECT_LT(grad_check(f, {table}, 1e-5, 200, 4), 1e-6);
}

TEST(Losses, KlIdentities) {
  std::vector<double> p{0.3, 0.7};
  EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-15);
  EXPECT_NEAR(kl_divergence({1.0, 0.0}, {0.5, 0.5}), std::log(2.0), 1e-12);
  EXPECT_NEAR(kl_divergence({0.5, 0.5}, {0.9, 0.1}), 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1), 1e-12);
  EXPECT_GE(kl_divergence({0.2, 0.8}, {0.6, 0.4}), 0.0);
}

TEST(Losses, MaskedBatchZeroLoss) {
  Tape tape;
  Tensor logits = make_tensor({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor loss = cross_entropy_logits(tape, logits, {0, 1}, {0.0, 0.0});
  EXPECT_EQ(loss->values[0], 0.0);
  tape.backward(loss);
  for (double g : logits->grad) EXPECT_EQ(g, 0.0);
}
