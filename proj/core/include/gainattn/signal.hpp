#pragma once

#include <cstdint>

namespace gainattn {

/// Uniform quantizer with `levels` grid points spanning [lo, hi], both
/// endpoints included.
struct QuantizerSpec {
  std::int64_t levels = 16;
  double lo = 0.0;
  double hi = 15.0;

  [[nodiscard]] double step() const { return (hi - lo) / static_cast<double>(levels - 1); }
  /// Reconstructed value of a grid index. The top index returns `hi` exactly.
  [[nodiscard]] double value_of(std::int64_t level) const;
  void validate() const;

  friend bool operator==(const QuantizerSpec&, const QuantizerSpec&) = default;
};

/// Digital affine stage y = a*x + b placed in front of every quantizer and
/// after the output adder tree.
struct ScalingStage {
  double a = 1.0;
  double b = 0.0;

  void validate() const;

  friend bool operator==(const ScalingStage&, const ScalingStage&) = default;
};

struct Quantized {
  std::int64_t level;
  double value;
};

/// Word-line input pulse. Width is in nanoseconds; the hardware DAC emits
/// whole nanoseconds, the idealized preset relaxes that.
struct PwmPulse {
  double width = 0.0;
};

inline constexpr double kMaxPulseWidthNs = 15.0;

[[nodiscard]] inline double scale(double x, const ScalingStage& stage) { return stage.a * x + stage.b; }

/// Clips to [lo, hi] and rounds to the nearest grid point, ties to the even
/// level index. NaN throws std::domain_error.
[[nodiscard]] Quantized quantize(double x, const QuantizerSpec& spec);

/// Pulse whose width is the quantized value of x. Requires a non-negative
/// grid no wider than the maximum pulse.
[[nodiscard]] PwmPulse encode_pwm(double x, const QuantizerSpec& spec);

/// Half-to-even rounding of a finite value, independent of the FP environment.
[[nodiscard]] double round_half_even(double t);

}  // namespace gainattn
