#pragma once

#include <cstdint>
#include <span>

#include "gainattn/device.hpp"
#include "gainattn/signal.hpp"

namespace gainattn {

/// Parameters of a charge-to-pulse converter (ReLU or signed).
struct ConverterSpec {
  /// Charge at which the pulse saturates at t_max (normalized volt*ns).
  double s_sat = 1.0;
  double t_max = kMaxPulseWidthNs;
  /// Counter clock. Pulse widths are floored to whole periods of 1/clock_ghz ns.
  double clock_ghz = 1.0;

  void validate() const;

  friend bool operator==(const ConverterSpec&, const ConverterSpec&) = default;
};

/// Charge integrated on one bit line over the input window.
struct BitlineCharge {
  double s = 0.0;
};

struct SignedPulse {
  double width = 0.0;
  int sign = 1;
};

/// Sum over the bit line of pulse width times cell current, with each cell
/// decayed to `now`. Throws std::invalid_argument on a length mismatch or a
/// pulse wider than 15 ns.
[[nodiscard]] BitlineCharge bitline_mac(std::span<const PwmPulse> pulses, std::span<const GainCellState> column,
                                        const DeviceModel& model, StepIndex now);

/// Piecewise-linear ReLU transfer before clock flooring: 0 for s <= 0,
/// t_max for s >= s_sat, t_max * s / s_sat in between.
[[nodiscard]] double relu_transfer(double s, const ConverterSpec& spec);

/// Magnitude path of the signed converter before flooring.
[[nodiscard]] double signed_transfer(double s, const ConverterSpec& spec);

/// Floors a width onto the counter clock grid.
[[nodiscard]] double floor_to_clock(double width, const ConverterSpec& spec);

[[nodiscard]] PwmPulse relu_charge_to_pulse(BitlineCharge charge, const ConverterSpec& spec);

/// Sign bit is +1 for s >= 0.
[[nodiscard]] SignedPulse signed_charge_to_pulse(BitlineCharge charge, const ConverterSpec& spec);

/// Counter readout in clock periods: sign * width * clock. At 1 GHz this is
/// an integer in [-15, 15]. Throws std::out_of_range for widths outside
/// [0, t_max] or off the clock grid.
[[nodiscard]] std::int64_t counter_decode(SignedPulse pulse, const ConverterSpec& spec);

}  // namespace gainattn
