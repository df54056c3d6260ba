#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gainattn/array.hpp"
#include "gainattn/device.hpp"
#include "gainattn/signal.hpp"

namespace gainattn {

/// Everything that defines one analog attention head.
///
/// Key and value scalings default to negative gains: a positive key is
/// written as a low stored voltage, which sources positive bit-line current.
struct AttentionHeadConfig {
  std::size_t d = 64;
  std::size_t tile_size = 64;
  std::size_t num_tiles = 16;

  DeviceModel device;
  ConverterSpec relu_converter;
  ConverterSpec signed_converter;

  QuantizerSpec input_quantizer{16, 0.0, 15.0};
  QuantizerSpec stored_quantizer{8, -1.0, 1.0};
  QuantizerSpec output_quantizer{32, -1.0, 1.0};

  ScalingStage q_scale{2.5, 7.5};
  ScalingStage k_scale{-1.0 / 3.0, 0.0};
  ScalingStage v_scale{-1.0 / 3.0, 0.0};
  ScalingStage out_scale{1.0, 0.0};

  /// Seed for per-cell gain variability draws.
  std::uint64_t variability_seed = 0;

  /// Sliding window length M.
  [[nodiscard]] std::size_t window() const { return tile_size * num_tiles; }
  void validate() const;

  /// d = 64, M = 1024 over 16 tiles of 64x64, 16/8/32-level quantizers,
  /// tau = 1 s, dt = 65 ns, converter thresholds and output gain from
  /// calibrate_head() with its default arguments.
  [[nodiscard]] static AttentionHeadConfig paper_default();

  friend bool operator==(const AttentionHeadConfig&, const AttentionHeadConfig&) = default;
};

/// Quantizer resolution used by the idealized preset.
inline constexpr std::int64_t kIdealLevels = std::int64_t{1} << 40;

/// Same geometry and ranges as `base`, with a linear non-decaying device,
/// 2^40-level quantizers, a 2^40 GHz counter clock and converter thresholds
/// above any reachable charge. The output quantizer spans the full adder
/// range with unit output gain and an odd level count, so zero is exact.
[[nodiscard]] AttentionHeadConfig idealized(const AttentionHeadConfig& base);

/// One sub-tile: a K array and a V array of tile_size x tile_size cells.
/// K cells are laid out one bit line per window slot; V cells one bit line
/// per output dimension (the transposed write enables).
class TilePair {
 public:
  explicit TilePair(std::size_t size);

  [[nodiscard]] std::size_t size() const { return size_; }

  [[nodiscard]] std::span<const GainCellState> k_bitline(std::size_t slot) const;
  [[nodiscard]] std::span<const GainCellState> v_bitline(std::size_t dim) const;

  [[nodiscard]] const GainCellState& k_cell(std::size_t slot, std::size_t dim) const;
  [[nodiscard]] const GainCellState& v_cell(std::size_t slot, std::size_t dim) const;
  GainCellState& k_cell(std::size_t slot, std::size_t dim);
  GainCellState& v_cell(std::size_t slot, std::size_t dim);

 private:
  std::size_t size_;
  std::vector<GainCellState> k_cells_;
  std::vector<GainCellState> v_cells_;
};

struct ConverterCounts {
  std::size_t relu_total = 0;
  std::size_t relu_zero = 0;
  std::size_t relu_saturated = 0;
  std::size_t signed_total = 0;
  std::size_t signed_saturated = 0;

  ConverterCounts& operator+=(const ConverterCounts& other);
};

/// Intermediate signals of one tile during attend.
struct TileTrace {
  std::vector<double> charge_qk;     // per slot
  std::vector<double> relu_pulse;    // per slot, ns
  std::vector<double> charge_sv;     // per output dim
  std::vector<std::int64_t> counter_out;  // per output dim, clock periods
};

struct AttendTrace {
  std::vector<double> q_pulse;  // word-line widths, ns
  std::vector<TileTrace> tiles;
};

struct AttendResult {
  /// Digital adder outputs over all tiles, in counter clock periods.
  std::vector<std::int64_t> counter_sum;
  /// Output scaling stage result before output clipping/quantization.
  std::vector<double> scaled_output;
  /// Head output after the output quantizer.
  std::vector<double> output;
  ConverterCounts counts;
};

/// KV storage for one head spread over num_tiles tiles, written one window
/// slot per token in ring order.
class SlidingWindowCache {
 public:
  /// Empty cache: every cell unwritten, step 0, write pointer 0.
  /// Throws std::invalid_argument for inconsistent dimensions.
  explicit SlidingWindowCache(AttentionHeadConfig config);

  [[nodiscard]] const AttentionHeadConfig& config() const { return config_; }
  [[nodiscard]] std::size_t window() const { return config_.window(); }
  [[nodiscard]] StepIndex step_index() const { return step_; }
  [[nodiscard]] std::size_t write_ptr() const { return write_ptr_; }
  [[nodiscard]] const std::vector<TilePair>& tiles() const { return tiles_; }

  /// Scales, quantizes and writes one token's key and value into slot
  /// write_ptr. Does not advance the pointer.
  void write_kv(std::span<const double> k, std::span<const double> v);

  /// Runs the query through every tile and the adder tree at the current step.
  [[nodiscard]] AttendResult attend(std::span<const double> q, AttendTrace* trace = nullptr) const;

  /// Moves to the next token: step + 1, write_ptr = step mod M.
  void advance();

  /// write_kv, then attend with the token's own query, then advance.
  AttendResult step(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                    AttendTrace* trace = nullptr);

 private:
  double draw_gain();

  AttentionHeadConfig config_;
  std::vector<TilePair> tiles_;
  StepIndex step_ = 0;
  std::size_t write_ptr_ = 0;
  std::mt19937_64 rng_;
};

/// Convenience alias matching the cache constructor.
[[nodiscard]] inline SlidingWindowCache new_cache(AttentionHeadConfig config) {
  return SlidingWindowCache(std::move(config));
}

/// Inputs as an ideal linear device would see them: the clipped query pulse
/// widths, and for keys/values the cell current per unit gate time of the
/// unquantized stored voltage.
struct EffectiveToken {
  std::vector<double> q;
  std::vector<double> k;
  std::vector<double> v;
};

[[nodiscard]] EffectiveToken effective_token(const AttentionHeadConfig& config, std::span<const double> q,
                                             std::span<const double> k, std::span<const double> v);

/// Factor g with scaled_output = g * ReLU(q_eff . K_eff^T) V_eff + out_scale.b
/// when no converter saturates and quantization is ignored.
[[nodiscard]] double oracle_gain(const AttentionHeadConfig& config);

struct Calibration {
  double relu_s_sat;
  double signed_s_sat;
  /// Output scaling gain that maps the 99th percentile of |adder sum| to the
  /// top of the output quantizer.
  double out_scale_a;
};

/// Picks converter thresholds so the 99th percentile of |charge| under
/// unit-variance Gaussian q/k/v sits at saturation, stage by stage.
/// `samples` queries feed the QK stage (one charge per tile each); a tenth
/// of them drive full tile windows for the SV stage and the adder output.
[[nodiscard]] Calibration calibrate_head(const AttentionHeadConfig& config, std::uint64_t seed = 2024,
                                         std::size_t samples = 1000);

}  // namespace gainattn
