#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gainattn/attention.hpp"

namespace gainattn {

/// Pipeline phases of one token, in nanoseconds.
struct LatencyBreakdown {
  double reset_ns = 5.0;
  double input_ns = 15.0;
  double discharge_ns = 15.0;
  double second_dot_ns = 15.0;
  double digital_sum_ns = 15.0;

  [[nodiscard]] double total_ns() const { return reset_ns + input_ns + discharge_ns + second_dot_ns + digital_sum_ns; }
};

struct AreaConstants {
  double cmos_cell_width_um = 3.9;
  double cmos_cell_height_um = 4.9;
  /// 64x64 silicon array.
  double cmos_array_mm2 = 0.08;
  double relu_ctp_mm2 = 0.01;
  double signed_ctp_mm2 = 0.02;
  /// Full 16-tile head with IGZO cells, digital and routing included.
  double igzo_head_mm2 = 0.5;
};

/// A GPU measured on 1024-step, 12-head autoregressive attention.
struct GpuReference {
  std::string name;
  /// Published speedup and energy reduction of the analog head over this GPU.
  double latency_ratio;
  double energy_ratio;
  /// Per-token latency and 12-head energy implied by those ratios at the
  /// reference operating point (65 ns, 12 x 6.1 nJ).
  double latency_ns;
  double energy_nj;
};

/// Measured per-head, per-token figures of the 28 nm design at d = 64,
/// M = 1024.
struct CostConstants {
  double e_qk_pj = 1120.0;
  /// Second-array energy at `reference_sparsity`.
  double e_sv_dense_pj = 700.0;
  /// Digital control and routing, quoted as 4 nJ for 113.7 mW.
  double e_digital_pj = 4000.0;
  double digital_power_mw = 113.7;
  double e_dac_pj = 330.0;
  /// Fraction of zero ReLU pulses at which e_sv_dense_pj was measured.
  double reference_sparsity = 0.5;
  /// Second-array energy when every ReLU pulse is zero.
  double e_sv_floor_pj = 0.0;
  /// Rounded head energy as published.
  double reported_head_energy_nj = 6.1;
  /// GPU comparisons were run with this many heads.
  std::size_t reference_heads = 12;
  /// Relative deviation from a published GPU ratio that gets flagged.
  double ratio_flag_tolerance = 0.20;

  LatencyBreakdown latency;
  AreaConstants area;
  std::vector<GpuReference> gpus = default_gpus();

  void validate() const;
  [[nodiscard]] static std::vector<GpuReference> default_gpus();
};

struct EnergyReport {
  std::size_t num_heads = 0;
  std::size_t num_tokens = 0;
  double sparsity = 0.0;

  // Per head, per token.
  double e_qk_pj = 0.0;
  double e_sv_pj = 0.0;
  double e_digital_pj = 0.0;
  double e_dac_pj = 0.0;
  double head_energy_pj = 0.0;

  /// head_energy_pj * num_heads.
  double token_energy_pj = 0.0;
  /// token_energy_pj * num_tokens.
  double total_energy_pj = 0.0;

  LatencyBreakdown latency;
  /// Heads run in parallel, tokens one after another.
  double latency_per_token_ns = 0.0;
  double total_latency_ns = 0.0;

  double cmos_array_mm2 = 0.0;
  double cmos_cell_array_mm2 = 0.0;
  double cmos_head_mm2 = 0.0;
  double igzo_head_mm2 = 0.0;
  double igzo_total_mm2 = 0.0;
};

/// Energy, latency and area for `num_heads` heads over `num_tokens` tokens.
/// Second-array energy is affine in the active (nonzero-pulse) fraction,
/// anchored at the reference sparsity and the zero-activity floor. Energy
/// constants are per head at the reference geometry; area follows the
/// config's tile count and size.
/// Throws std::invalid_argument for sparsity outside [0, 1] or num_heads = 0.
[[nodiscard]] EnergyReport estimate(const AttentionHeadConfig& config, std::size_t num_heads, std::size_t num_tokens,
                                    double measured_sparsity, const CostConstants& constants = {});

struct GpuComparison {
  std::string name;
  double gpu_latency_ns;
  double gpu_energy_nj;
  double latency_ratio;
  double energy_ratio;
  double published_latency_ratio;
  double published_energy_ratio;
  bool latency_flagged;
  bool energy_flagged;
};

/// Speedup and energy-reduction ratios against each GPU reference, with the
/// analog energy normalized to the reference head count. Empty for a report
/// with no tokens.
[[nodiscard]] std::vector<GpuComparison> gpu_ratio_report(const EnergyReport& report,
                                                          const CostConstants& constants = {});

/// Fixed-order (name, value) list used by the CSV and JSON writers.
[[nodiscard]] std::vector<std::pair<std::string, double>> report_fields(const EnergyReport& report);

}  // namespace gainattn
