#include "gainattn/costmodel.hpp"

#include <cmath>
#include <stdexcept>

namespace gainattn {

namespace {

constexpr double kReferenceLatencyNs = 65.0;

bool deviates(double value, double published, double tolerance) {
  return std::abs(value / published - 1.0) > tolerance;
}

}  // namespace

std::vector<GpuReference> CostConstants::default_gpus() {
  // Absolute GPU figures are not published; they are reconstructed from the
  // published ratios at 65 ns per token and 12 heads x 6.1 nJ.
  const double analog_energy_nj = 12.0 * 6.1;
  return {
      {"Jetson Nano", 7000.0, 40000.0, 7000.0 * kReferenceLatencyNs, 40000.0 * analog_energy_nj},
      {"RTX 4090", 300.0, 90000.0, 300.0 * kReferenceLatencyNs, 90000.0 * analog_energy_nj},
  };
}

void CostConstants::validate() const {
  for (double v : {e_qk_pj, e_sv_dense_pj, e_digital_pj, e_dac_pj, digital_power_mw, reported_head_energy_nj}) {
    if (!(v > 0.0)) throw std::invalid_argument("cost constants must be positive");
  }
  if (!(reference_sparsity >= 0.0 && reference_sparsity < 1.0)) {
    throw std::invalid_argument("cost: reference_sparsity must lie in [0, 1)");
  }
  if (!(e_sv_floor_pj >= 0.0 && e_sv_floor_pj <= e_sv_dense_pj)) {
    throw std::invalid_argument("cost: e_sv_floor_pj must lie in [0, e_sv_dense_pj]");
  }
  if (reference_heads == 0) throw std::invalid_argument("cost: reference_heads must be > 0");
}

EnergyReport estimate(const AttentionHeadConfig& config, std::size_t num_heads, std::size_t num_tokens,
                      double measured_sparsity, const CostConstants& constants) {
  constants.validate();
  if (num_heads == 0) throw std::invalid_argument("estimate: num_heads must be >= 1");
  if (!(measured_sparsity >= 0.0 && measured_sparsity <= 1.0)) {
    throw std::invalid_argument("estimate: sparsity must lie in [0, 1]");
  }

  EnergyReport r;
  r.num_heads = num_heads;
  r.num_tokens = num_tokens;
  r.sparsity = measured_sparsity;

  const double active_ratio = (1.0 - measured_sparsity) / (1.0 - constants.reference_sparsity);
  r.e_qk_pj = constants.e_qk_pj;
  r.e_sv_pj = constants.e_sv_floor_pj + (constants.e_sv_dense_pj - constants.e_sv_floor_pj) * active_ratio;
  r.e_digital_pj = constants.e_digital_pj;
  r.e_dac_pj = constants.e_dac_pj;
  r.head_energy_pj = r.e_qk_pj + r.e_sv_pj + r.e_digital_pj + r.e_dac_pj;
  r.token_energy_pj = r.head_energy_pj * static_cast<double>(num_heads);
  r.total_energy_pj = r.token_energy_pj * static_cast<double>(num_tokens);

  r.latency = constants.latency;
  r.latency_per_token_ns = constants.latency.total_ns();
  r.total_latency_ns = r.latency_per_token_ns * static_cast<double>(num_tokens);

  const double tile_ratio = static_cast<double>(config.tile_size) / 64.0;
  const auto& area = constants.area;
  r.cmos_array_mm2 = area.cmos_array_mm2 * tile_ratio * tile_ratio;
  const double cells = static_cast<double>(config.tile_size * config.tile_size);
  r.cmos_cell_array_mm2 = cells * area.cmos_cell_width_um * area.cmos_cell_height_um * 1e-6;
  r.cmos_head_mm2 =
      static_cast<double>(config.num_tiles) * (2.0 * r.cmos_array_mm2 + area.relu_ctp_mm2 + area.signed_ctp_mm2);
  r.igzo_head_mm2 = area.igzo_head_mm2;
  r.igzo_total_mm2 = area.igzo_head_mm2 * static_cast<double>(num_heads);
  return r;
}

std::vector<GpuComparison> gpu_ratio_report(const EnergyReport& report, const CostConstants& constants) {
  std::vector<GpuComparison> rows;
  if (report.num_tokens == 0) return rows;
  const double analog_energy_nj = report.head_energy_pj * static_cast<double>(constants.reference_heads) * 1e-3;
  for (const auto& gpu : constants.gpus) {
    GpuComparison row;
    row.name = gpu.name;
    row.gpu_latency_ns = gpu.latency_ns;
    row.gpu_energy_nj = gpu.energy_nj;
    row.latency_ratio = gpu.latency_ns / report.latency_per_token_ns;
    row.energy_ratio = gpu.energy_nj / analog_energy_nj;
    row.published_latency_ratio = gpu.latency_ratio;
    row.published_energy_ratio = gpu.energy_ratio;
    row.latency_flagged = deviates(row.latency_ratio, gpu.latency_ratio, constants.ratio_flag_tolerance);
    row.energy_flagged = deviates(row.energy_ratio, gpu.energy_ratio, constants.ratio_flag_tolerance);
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::pair<std::string, double>> report_fields(const EnergyReport& r) {
  return {
      {"num_heads", static_cast<double>(r.num_heads)},
      {"num_tokens", static_cast<double>(r.num_tokens)},
      {"sparsity", r.sparsity},
      {"e_qk_pj", r.e_qk_pj},
      {"e_sv_pj", r.e_sv_pj},
      {"e_digital_pj", r.e_digital_pj},
      {"e_dac_pj", r.e_dac_pj},
      {"head_energy_pj", r.head_energy_pj},
      {"token_energy_pj", r.token_energy_pj},
      {"total_energy_pj", r.total_energy_pj},
      {"latency_reset_ns", r.latency.reset_ns},
      {"latency_input_ns", r.latency.input_ns},
      {"latency_discharge_ns", r.latency.discharge_ns},
      {"latency_second_dot_ns", r.latency.second_dot_ns},
      {"latency_digital_sum_ns", r.latency.digital_sum_ns},
      {"latency_per_token_ns", r.latency_per_token_ns},
      {"total_latency_ns", r.total_latency_ns},
      {"cmos_array_mm2", r.cmos_array_mm2},
      {"cmos_cell_array_mm2", r.cmos_cell_array_mm2},
      {"cmos_head_mm2", r.cmos_head_mm2},
      {"igzo_head_mm2", r.igzo_head_mm2},
      {"igzo_total_mm2", r.igzo_total_mm2},
  };
}

}  // namespace gainattn
