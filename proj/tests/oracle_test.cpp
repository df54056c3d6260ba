#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "gainattn/oracle.hpp"
#include "test_support.hpp"

using namespace gainattn;
using gainattn::testing::masked_matrix_attention;
using gainattn::testing::uniform_sequence;

namespace {

OracleConfig relu_config(std::size_t d, std::size_t window, bool scaled = true) {
  OracleConfig c;
  c.d = d;
  c.window = window;
  c.activation = Activation::ReLU;
  c.scale_scores = scaled;
  return c;
}

}  // namespace

TEST(IdealAttention, SingleToken) {
  const Sequence q{{1.0, 2.0, 0.5, 1.0}};
  const Sequence k{{0.5, 1.0, 2.0, 0.0}};
  const Sequence v{{1.0, -1.0, 3.0, 0.25}};
  const auto a = ideal_attention(q, k, v, relu_config(4, 8));
  const double s = (0.5 + 2.0 + 1.0) / 2.0;
  for (int r = 0; r < 4; ++r) EXPECT_DOUBLE_EQ(a[0][r], s * v[0][r]);
}

TEST(IdealAttention, OrthogonalQueryGivesZero) {
  const Sequence q{{1.0, 0.0}, {1.0, 0.0}};
  const Sequence k{{0.0, 3.0}, {0.0, -2.0}};
  const Sequence v{{5.0, 5.0}, {7.0, -1.0}};
  const auto a = ideal_attention(q, k, v, relu_config(2, 4));
  for (const auto& row : a)
    for (double x : row) EXPECT_EQ(x, 0.0);
}

TEST(IdealAttention, BruteForceMaskT5M2) {
  // Frozen instance; the reference is an explicit T x T masked matrix product.
  std::mt19937_64 rng(1234);
  const auto q = uniform_sequence(rng, 5, 3, -1.0, 1.0);
  const auto k = uniform_sequence(rng, 5, 3, -1.0, 1.0);
  const auto v = uniform_sequence(rng, 5, 3, -1.0, 1.0);
  for (Activation act : {Activation::ReLU, Activation::Softmax}) {
    OracleConfig c = relu_config(3, 2);
    c.activation = act;
    const auto got = ideal_attention(q, k, v, c);
    const auto want = masked_matrix_attention(q, k, v, 2, act == Activation::ReLU, 1.0 / std::sqrt(3.0));
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(got[t][r], want[t][r], 1e-14);
  }
}

TEST(IdealAttention, SoftmaxRowsAreConvex) {
  std::mt19937_64 rng(3);
  const auto q = uniform_sequence(rng, 6, 2, -3.0, 3.0);
  const auto k = uniform_sequence(rng, 6, 2, -3.0, 3.0);
  const Sequence v(6, std::vector<double>{1.0, 1.0});
  OracleConfig c = relu_config(2, 3);
  c.activation = Activation::Softmax;
  for (const auto& row : ideal_attention(q, k, v, c))
    for (double x : row) EXPECT_NEAR(x, 1.0, 1e-15);
}

TEST(IdealAttention, Causality) {
  std::mt19937_64 rng(77);
  auto q = uniform_sequence(rng, 10, 4, -1.0, 1.0);
  auto k = uniform_sequence(rng, 10, 4, -1.0, 1.0);
  auto v = uniform_sequence(rng, 10, 4, -1.0, 1.0);
  const auto c = relu_config(4, 6);
  const auto base = ideal_attention(q, k, v, c);
  for (std::size_t future = 1; future < 10; ++future) {
    auto q2 = q, k2 = k, v2 = v;
    q2[future] = {9.0, 9.0, 9.0, 9.0};
    k2[future] = {-4.0, 2.0, 1.0, 7.0};
    v2[future] = {3.0, 3.0, -3.0, 1.0};
    const auto out = ideal_attention(q2, k2, v2, c);
    for (std::size_t t = 0; t < future; ++t) ASSERT_EQ(out[t], base[t]);
  }
}

TEST(IdealAttention, WindowForgetsOldTokens) {
  std::mt19937_64 rng(78);
  auto q = uniform_sequence(rng, 12, 3, -1.0, 1.0);
  auto k = uniform_sequence(rng, 12, 3, -1.0, 1.0);
  auto v = uniform_sequence(rng, 12, 3, -1.0, 1.0);
  const std::size_t m = 4;
  const auto c = relu_config(3, m);
  const auto base = ideal_attention(q, k, v, c);
  for (std::size_t old = 0; old < 8; ++old) {
    auto k2 = k, v2 = v;
    k2[old] = {5.0, 5.0, 5.0};
    v2[old] = {-5.0, 5.0, -5.0};
    const auto out = ideal_attention(q, k2, v2, c);
    for (std::size_t t = old + m; t < 12; ++t) ASSERT_EQ(out[t], base[t]);
  }
}

TEST(IdealAttention, ReluHomogeneousInQuery) {
  std::mt19937_64 rng(79);
  const auto q = uniform_sequence(rng, 7, 3, -1.0, 1.0);
  const auto k = uniform_sequence(rng, 7, 3, -1.0, 1.0);
  const auto v = uniform_sequence(rng, 7, 3, -1.0, 1.0);
  const auto c = relu_config(3, 3);
  const auto base = ideal_attention(q, k, v, c);
  for (double lambda : {0.5, 2.0, 7.25}) {
    auto scaled = q;
    for (auto& row : scaled)
      for (double& x : row) x *= lambda;
    const auto out = ideal_attention(scaled, k, v, c);
    for (std::size_t t = 0; t < 7; ++t)
      for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(out[t][r], lambda * base[t][r], 1e-13);
  }
}

TEST(IdealAttention, DimensionMismatch) {
  const Sequence a{{1.0, 2.0}};
  const Sequence b{{1.0, 2.0, 3.0}};
  EXPECT_THROW(ideal_attention(a, b, a, relu_config(2, 2)), std::invalid_argument);
  EXPECT_THROW(ideal_attention(a, a, Sequence{}, relu_config(2, 2)), std::invalid_argument);
  EXPECT_THROW(ideal_attention(a, a, a, relu_config(3, 2)), std::invalid_argument);
  EXPECT_THROW(ideal_attention(a, a, a, relu_config(2, 0)), std::invalid_argument);
}

TEST(DecayedAttention, InfiniteTauIsUndecayed) {
  std::mt19937_64 rng(80);
  const auto q = uniform_sequence(rng, 9, 2, -1.0, 1.0);
  const auto k = uniform_sequence(rng, 9, 2, -1.0, 1.0);
  const auto v = uniform_sequence(rng, 9, 2, -1.0, 1.0);
  const auto c = relu_config(2, 5);
  EXPECT_EQ(ideal_decayed_attention(q, k, v, c, std::numeric_limits<double>::infinity(), 65e-9),
            ideal_attention(q, k, v, c));
}

TEST(DecayedAttention, HalvingPerStep) {
  // dt / tau = ln 2: a token one step old contributes with k and v halved.
  const Sequence q{{1.0}, {1.0}};
  const Sequence k{{2.0}, {0.0}};
  const Sequence v{{3.0}, {0.0}};
  const auto c = relu_config(1, 2, false);
  const auto a = ideal_decayed_attention(q, k, v, c, 1.0, std::log(2.0));
  EXPECT_DOUBLE_EQ(a[0][0], 6.0);
  EXPECT_NEAR(a[1][0], (1.0 * 1.0) * 1.5, 1e-15);
}

TEST(DecayedAttention, MatchesExplicitFactors) {
  std::mt19937_64 rng(81);
  const auto q = uniform_sequence(rng, 11, 3, -1.0, 1.0);
  const auto k = uniform_sequence(rng, 11, 3, -1.0, 1.0);
  const auto v = uniform_sequence(rng, 11, 3, -1.0, 1.0);
  const double tau = 3.0;
  const double dt = 0.4;
  const auto got = ideal_decayed_attention(q, k, v, relu_config(3, 4), tau, dt);
  const auto want = masked_matrix_attention(q, k, v, 4, true, 1.0 / std::sqrt(3.0), std::exp(-dt / tau));
  for (std::size_t t = 0; t < 11; ++t)
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(got[t][r], want[t][r], 1e-12);
}
