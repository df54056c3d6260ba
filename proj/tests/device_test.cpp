#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "gainattn/device.hpp"

using namespace gainattn;

namespace {

DeviceModel linear(double beta = 1.0) {
  DeviceModel m;
  m.beta = beta;
  return m;
}

}  // namespace

TEST(CellCurrent, LinearExamples) {
  EXPECT_EQ(cell_current(linear(), 0.0, true), 0.0);
  EXPECT_DOUBLE_EQ(cell_current(linear(), -0.45, true), 0.45);
  EXPECT_EQ(cell_current(linear(), -0.45, false), 0.0);
}

TEST(CellCurrent, CubicExample) {
  DeviceModel m;
  m.kind = DeviceKind::Cubic;
  m.cubic = {1.0, 0.0, -0.5};
  // -(0.3 - 0.5 * 0.027)
  EXPECT_NEAR(cell_current(m, 0.3, true), -0.2865, 1e-15);
}

TEST(CellCurrent, RejectsUnclippedWeight) {
  EXPECT_THROW((void)cell_current(linear(), 0.4500001, true), std::domain_error);
  EXPECT_THROW((void)cell_current(linear(), -0.46, false), std::domain_error);
}

TEST(CellCurrent, GainJitterMultiplies) { EXPECT_DOUBLE_EQ(cell_current(linear(2.0), -0.2, true, 1.1), 0.44); }

TEST(CellCurrent, PolarityAndLinearity) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> w(-0.225, 0.225);
  const DeviceModel m = linear(1.7);
  for (int i = 0; i < 1000; ++i) {
    const double a = w(rng);
    const double b = w(rng);
    if (a != 0.0) EXPECT_EQ(std::signbit(cell_current(m, a, true)), !std::signbit(a));
    EXPECT_NEAR(cell_current(m, a + b, true), cell_current(m, a, true) + cell_current(m, b, true), 1e-15);
  }
}

TEST(Decay, Examples) {
  DeviceModel m;  // tau = 1 s, dt = 65 ns
  const GainCellState s{0.45, StepIndex{0}};
  EXPECT_DOUBLE_EQ(apply_decay(s, 1, m).w, 0.45 * std::exp(-6.5e-8));
  EXPECT_NEAR(apply_decay(s, 1, m).w, 0.45 * (1.0 - 6.5e-8), 1e-15);

  m.dt = 1e-3;
  EXPECT_NEAR(apply_decay(s, 1000, m).w, 0.45 / std::exp(1.0), 1e-15);

  const GainCellState zero{0.0, StepIndex{3}};
  EXPECT_EQ(apply_decay(zero, 1'000'000, m).w, 0.0);
  const GainCellState unwritten{};
  EXPECT_EQ(apply_decay(unwritten, 50, m).w, 0.0);
}

TEST(Decay, KeepsWriteStep) {
  const GainCellState s{0.3, StepIndex{4}};
  EXPECT_EQ(apply_decay(s, 9, DeviceModel{}).written_at, StepIndex{4});
}

TEST(Decay, ReadBeforeWriteRejected) {
  EXPECT_THROW((void)apply_decay(GainCellState{0.1, StepIndex{5}}, 4, DeviceModel{}), std::invalid_argument);
}

TEST(Decay, InfiniteTauIsIdentity) {
  DeviceModel m;
  m.tau = std::numeric_limits<double>::infinity();
  EXPECT_EQ(apply_decay(GainCellState{0.3, StepIndex{0}}, 1 << 20, m).w, 0.3);
}

TEST(Decay, MonotoneAndSignPreserving) {
  DeviceModel m;
  m.dt = 1e-3;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(-0.45, 0.45);
  for (int i = 0; i < 200; ++i) {
    const GainCellState s{w(rng), StepIndex{0}};
    double prev = std::abs(s.w);
    for (StepIndex t = 0; t < 3000; t += 37) {
      const double now = apply_decay(s, t, m).w;
      ASSERT_LE(std::abs(now), prev);
      ASSERT_EQ(std::signbit(now), std::signbit(s.w));
      prev = std::abs(now);
    }
  }
}

TEST(Decay, LazyMatchesStepwise) {
  DeviceModel m;
  m.dt = 1e-4;
  GainCellState stepwise{0.41, StepIndex{0}};
  const GainCellState lazy = stepwise;
  const int n = 500;
  for (int i = 0; i < n; ++i) {
    stepwise = apply_decay(stepwise, *stepwise.written_at + 1, m);
    stepwise.written_at = *stepwise.written_at + 1;
  }
  const double once = apply_decay(lazy, n, m).w;
  // n one-step products accumulate about n/2 ulp of rounding.
  EXPECT_NEAR(stepwise.w, once, n * std::numeric_limits<double>::epsilon() * std::abs(once));
}

TEST(WriteCell, LevelMap) {
  const QuantizerSpec spec{8, -1.0, 1.0};
  EXPECT_EQ(write_cell({}, 0, spec, 0).w, -0.45);
  EXPECT_EQ(write_cell({}, 7, spec, 0).w, 0.45);
  EXPECT_NEAR(write_cell({}, 3, spec, 0).w, -0.45 + 3.0 * (0.9 / 7.0), 1e-16);
  EXPECT_NEAR(write_cell({}, 3, spec, 0).w, -0.0642857142857143, 1e-15);
}

TEST(WriteCell, RefreshDiscardsHistory) {
  const QuantizerSpec spec{8, -1.0, 1.0};
  const GainCellState old{0.2, StepIndex{3}, 1.3};
  const GainCellState fresh = write_cell(old, 5, spec, 40);
  EXPECT_EQ(fresh.written_at, StepIndex{40});
  EXPECT_EQ(fresh.gain, 1.0);
  EXPECT_EQ(fresh.w, level_voltage(5, spec));
}

TEST(WriteCell, OutOfRangeLevel) {
  const QuantizerSpec spec{8, -1.0, 1.0};
  EXPECT_THROW((void)write_cell({}, 8, spec, 0), std::out_of_range);
  EXPECT_THROW((void)write_cell({}, -1, spec, 0), std::out_of_range);
}

TEST(DeviceModel, Validation) {
  DeviceModel m;
  m.tau = 0.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = {};
  m.dt = -1.0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = {};
  m.variability_sigma = -0.1;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = {};
  m.tau = std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(m.validate());
}
