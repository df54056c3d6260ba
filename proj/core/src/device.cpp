#include "gainattn/device.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gainattn {

void DeviceModel::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("device: tau must be > 0");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("device: dt must be finite and > 0");
  if (!(variability_sigma >= 0.0)) throw std::invalid_argument("device: variability_sigma must be >= 0");
  if (kind == DeviceKind::Linear && !(beta > 0.0)) throw std::invalid_argument("device: beta must be > 0");
}

double cell_current(const DeviceModel& model, double w, bool gate_open, double gain_jitter) {
  if (!(std::abs(w) <= kMaxWeightVolts)) {
    throw std::domain_error("cell_current: |w| = " + std::to_string(std::abs(w)) + " V exceeds 0.45 V");
  }
  if (!gate_open) return 0.0;
  if (model.kind == DeviceKind::Linear) return -model.beta * w * gain_jitter;
  const auto& c = model.cubic;
  return -(w * (c[0] + w * (c[1] + w * c[2]))) * gain_jitter;
}

double decay_factor(StepIndex elapsed, const DeviceModel& model) {
  if (std::isinf(model.tau)) return 1.0;
  return std::exp(-static_cast<double>(elapsed) * model.dt / model.tau);
}

GainCellState apply_decay(const GainCellState& state, StepIndex now, const DeviceModel& model) {
  if (!state.written()) return state;
  if (now < *state.written_at) throw std::invalid_argument("apply_decay: read step precedes write step");
  GainCellState out = state;
  out.w = state.w * decay_factor(now - *state.written_at, model);
  return out;
}

double level_voltage(std::int64_t level, const QuantizerSpec& spec) {
  if (level == spec.levels - 1) return kMaxWeightVolts;
  return -kMaxWeightVolts + static_cast<double>(level) * (2.0 * kMaxWeightVolts) / static_cast<double>(spec.levels - 1);
}

GainCellState write_cell(const GainCellState& /*state*/, std::int64_t level, const QuantizerSpec& spec, StepIndex now,
                         double gain) {
  if (level < 0 || level >= spec.levels) {
    throw std::out_of_range("write_cell: level " + std::to_string(level) + " outside [0, " +
                            std::to_string(spec.levels) + ")");
  }
  if (!(gain > 0.0)) throw std::invalid_argument("write_cell: gain must be > 0");
  return GainCellState{level_voltage(level, spec), now, gain};
}

}  // namespace gainattn
