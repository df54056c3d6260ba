#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "gainattn/signal.hpp"

namespace gainattn {

/// Stored-voltage swing around the zero-current point, in volts.
inline constexpr double kMaxWeightVolts = 0.45;

using StepIndex = std::int64_t;

/// One gain cell. `w` is the stored voltage relative to the zero-current
/// point (V_store - 0.45 V) as it was at `written_at`; read paths apply decay
/// lazily on top of it.
struct GainCellState {
  double w = 0.0;
  std::optional<StepIndex> written_at;
  /// Per-cell multiplicative gain drawn at write time (1 without variability).
  double gain = 1.0;

  [[nodiscard]] bool written() const { return written_at.has_value(); }
};

enum class DeviceKind { Linear, Cubic };

struct DeviceModel {
  DeviceKind kind = DeviceKind::Linear;
  /// Linear transconductance, current per volt of stored offset.
  double beta = 1.0;
  /// i(w) = c1*w + c2*w^2 + c3*w^3 for the cubic fit.
  std::array<double, 3> cubic{1.0, 0.05, -0.8};
  /// Retention time constant in seconds; +inf disables decay.
  double tau = 1.0;
  /// Time per token step in seconds.
  double dt = 65e-9;
  /// Relative std-dev of per-cell gain, 0 disables.
  double variability_sigma = 0.0;

  void validate() const;

  friend bool operator==(const DeviceModel&, const DeviceModel&) = default;
};

/// Current sourced into the bit line while the read gate is open. Positive
/// for w < 0 (stored voltage below mid-rail).
/// Throws std::domain_error for |w| > 0.45 V.
[[nodiscard]] double cell_current(const DeviceModel& model, double w, bool gate_open, double gain_jitter = 1.0);

/// exp(-elapsed * dt / tau), 1 for tau = +inf.
[[nodiscard]] double decay_factor(StepIndex elapsed, const DeviceModel& model);

/// Read-time view of a cell at step `now`: w scaled by the decay accumulated
/// since the write. `written_at` is preserved, so the result is a snapshot and
/// must not be stored back as the cell's write state.
[[nodiscard]] GainCellState apply_decay(const GainCellState& state, StepIndex now, const DeviceModel& model);

/// Full refresh of a cell to quantizer level `level`, mapped affinely onto
/// [-0.45, +0.45] V.
[[nodiscard]] GainCellState write_cell(const GainCellState& state, std::int64_t level, const QuantizerSpec& spec,
                                       StepIndex now, double gain = 1.0);

/// Stored voltage of a quantizer level (level 0 -> -0.45 V, top level -> +0.45 V).
[[nodiscard]] double level_voltage(std::int64_t level, const QuantizerSpec& spec);

}  // namespace gainattn
