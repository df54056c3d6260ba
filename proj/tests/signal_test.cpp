#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <gtest/gtest.h>

#include "gainattn/signal.hpp"

using namespace gainattn;

namespace {
const QuantizerSpec kPwm{16, 0.0, 15.0};
}

TEST(Scale, AffineExamples) {
  EXPECT_EQ(scale(3.0, {1.0, 0.0}), 3.0);
  EXPECT_EQ(scale(2.0, {0.5, -1.0}), 0.0);
  EXPECT_EQ(scale(-4.0, {0.25, 2.0}), 1.0);
}

TEST(Scale, ZeroGainRejected) { EXPECT_THROW((ScalingStage{0.0, 1.0}.validate()), std::invalid_argument); }

TEST(Quantize, ClipsAboveRange) {
  const auto q = quantize(20.0, kPwm);
  EXPECT_EQ(q.level, 15);
  EXPECT_EQ(q.value, 15.0);
}

TEST(Quantize, NearestGridPoint) {
  const auto q = quantize(7.4, kPwm);
  EXPECT_EQ(q.level, 7);
  EXPECT_EQ(q.value, 7.0);
}

TEST(Quantize, TiesGoToEvenLevel) {
  EXPECT_EQ(quantize(6.5, kPwm).level, 6);
  EXPECT_EQ(quantize(7.5, kPwm).level, 8);
  EXPECT_EQ(quantize(-3.0, kPwm).level, 0);
}

TEST(Quantize, NaNIsAnError) {
  EXPECT_THROW((void)quantize(std::numeric_limits<double>::quiet_NaN(), kPwm), std::domain_error);
}

TEST(Quantize, EndpointsAreExact) {
  const QuantizerSpec spec{8, -1.0, 1.0};
  EXPECT_EQ(quantize(-1.0, spec).value, -1.0);
  EXPECT_EQ(quantize(1.0, spec).value, 1.0);
  EXPECT_EQ(quantize(1e9, spec).level, 7);
}

TEST(Quantize, InvalidSpecs) {
  EXPECT_THROW((QuantizerSpec{1, 0.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((QuantizerSpec{4, 1.0, 1.0}.validate()), std::invalid_argument);
}

TEST(Quantize, PropertiesOverDenseSweep) {
  for (const QuantizerSpec spec : {QuantizerSpec{16, 0.0, 15.0}, QuantizerSpec{8, -1.0, 1.0}, QuantizerSpec{32, -2.0, 3.0}}) {
    std::set<std::int64_t> seen;
    double previous = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 20000; ++i) {
      const double x = spec.lo - 1.0 + (spec.hi - spec.lo + 2.0) * i / 20000.0;
      const auto q = quantize(x, spec);
      ASSERT_GE(q.value, spec.lo);
      ASSERT_LE(q.value, spec.hi);
      ASSERT_GE(q.value, previous);
      previous = q.value;
      const auto again = quantize(q.value, spec);
      ASSERT_EQ(again.level, q.level);
      ASSERT_EQ(again.value, q.value);
      ASSERT_EQ(quantize(scale(x, {1.0, 0.0}), spec).value, q.value);
      seen.insert(q.level);
    }
    EXPECT_EQ(static_cast<std::int64_t>(seen.size()), spec.levels);
  }
}

TEST(EncodePwm, Examples) {
  EXPECT_EQ(encode_pwm(0.0, kPwm).width, 0.0);
  EXPECT_EQ(encode_pwm(15.0, kPwm).width, 15.0);
  EXPECT_EQ(encode_pwm(9.6, kPwm).width, 10.0);
  EXPECT_EQ(encode_pwm(-2.0, kPwm).width, 0.0);
}

TEST(EncodePwm, RejectsGridOutsidePulseRange) {
  EXPECT_THROW((void)encode_pwm(1.0, QuantizerSpec{16, -1.0, 15.0}), std::invalid_argument);
  EXPECT_THROW((void)encode_pwm(1.0, QuantizerSpec{16, 0.0, 16.0}), std::invalid_argument);
}

TEST(RoundHalfEven, Basic) {
  EXPECT_EQ(round_half_even(0.5), 0.0);
  EXPECT_EQ(round_half_even(1.5), 2.0);
  EXPECT_EQ(round_half_even(2.5), 2.0);
  EXPECT_EQ(round_half_even(2.4999), 2.0);
  EXPECT_EQ(round_half_even(2.5001), 3.0);
}
