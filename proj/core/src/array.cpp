#include "gainattn/array.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gainattn {

void ConverterSpec::validate() const {
  if (!(s_sat > 0.0) || !std::isfinite(s_sat)) throw std::invalid_argument("converter: s_sat must be finite and > 0");
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("converter: t_max must be finite and > 0");
  if (!(clock_ghz > 0.0) || !std::isfinite(clock_ghz)) {
    throw std::invalid_argument("converter: clock_ghz must be finite and > 0");
  }
  // Counter values are exact integers in a double.
  if (t_max * clock_ghz > 0x1p52) throw std::invalid_argument("converter: t_max * clock_ghz exceeds 2^52 counts");
}

BitlineCharge bitline_mac(std::span<const PwmPulse> pulses, std::span<const GainCellState> column,
                          const DeviceModel& model, StepIndex now) {
  if (pulses.size() != column.size()) throw std::invalid_argument("bitline_mac: pulse/column length mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < pulses.size(); ++j) {
    const double width = pulses[j].width;
    if (width < 0.0 || width > kMaxPulseWidthNs) throw std::invalid_argument("bitline_mac: pulse width out of range");
    const GainCellState cell = apply_decay(column[j], now, model);
    s += width * cell_current(model, cell.w, width > 0.0, cell.gain);
  }
  return {s};
}

double relu_transfer(double s, const ConverterSpec& spec) {
  if (s <= 0.0) return 0.0;
  if (s >= spec.s_sat) return spec.t_max;
  return spec.t_max * (s / spec.s_sat);
}

double signed_transfer(double s, const ConverterSpec& spec) { return relu_transfer(std::abs(s), spec); }

double floor_to_clock(double width, const ConverterSpec& spec) {
  return std::floor(width * spec.clock_ghz) / spec.clock_ghz;
}

PwmPulse relu_charge_to_pulse(BitlineCharge charge, const ConverterSpec& spec) {
  return {floor_to_clock(relu_transfer(charge.s, spec), spec)};
}

SignedPulse signed_charge_to_pulse(BitlineCharge charge, const ConverterSpec& spec) {
  return {floor_to_clock(signed_transfer(charge.s, spec), spec), charge.s >= 0.0 ? 1 : -1};
}

std::int64_t counter_decode(SignedPulse pulse, const ConverterSpec& spec) {
  if (pulse.width < 0.0 || pulse.width > spec.t_max) throw std::out_of_range("counter_decode: width out of range");
  if (pulse.sign != 1 && pulse.sign != -1) throw std::invalid_argument("counter_decode: sign must be +1 or -1");
  const double raw = pulse.width * spec.clock_ghz;
  const double ticks = std::round(raw);
  if (std::abs(raw - ticks) > 1e-9 * std::max(1.0, ticks)) {
    throw std::out_of_range("counter_decode: width is not on the clock grid");
  }
  return pulse.sign * static_cast<std::int64_t>(ticks);
}

}  // namespace gainattn
