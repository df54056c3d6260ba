#include "gainattn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gainattn {

namespace {

void require_length(std::span<const double> x, std::size_t d, const char* what) {
  if (x.size() != d) {
    throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(d) + ", got " +
                                std::to_string(x.size()));
  }
}

double percentile99(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("calibrate_head: no samples");
  for (double& v : values) v = std::abs(v);
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(values.size()))) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank), values.end());
  return values[rank];
}

// Unquantized stored voltage for a value already inside the quantizer range.
double continuous_voltage(double x, const QuantizerSpec& spec) {
  const double clipped = std::clamp(x, spec.lo, spec.hi);
  return -kMaxWeightVolts + (2.0 * kMaxWeightVolts) * (clipped - spec.lo) / (spec.hi - spec.lo);
}

}  // namespace

void AttentionHeadConfig::validate() const {
  if (d == 0 || tile_size == 0 || num_tiles == 0) throw std::invalid_argument("head: d, tile_size, num_tiles must be > 0");
  if (d > tile_size) {
    throw std::invalid_argument("head: d = " + std::to_string(d) + " exceeds tile_size = " + std::to_string(tile_size));
  }
  device.validate();
  relu_converter.validate();
  signed_converter.validate();
  if (relu_converter.t_max > kMaxPulseWidthNs) throw std::invalid_argument("head: ReLU converter t_max exceeds 15 ns");
  input_quantizer.validate();
  stored_quantizer.validate();
  output_quantizer.validate();
  if (input_quantizer.lo < 0.0 || input_quantizer.hi > kMaxPulseWidthNs) {
    throw std::invalid_argument("head: input quantizer must lie within [0, 15] ns");
  }
  q_scale.validate();
  k_scale.validate();
  v_scale.validate();
  out_scale.validate();
}

AttentionHeadConfig AttentionHeadConfig::paper_default() {
  AttentionHeadConfig config;
  // Frozen output of calibrate_head(config) for the fields above; see
  // attention_test.cpp for the regression check.
  config.relu_converter.s_sat = 25.457142857142838;
  config.signed_converter.s_sat = 12.535714285714281;
  config.out_scale.a = 1.0 / 54.0;
  return config;
}

AttentionHeadConfig idealized(const AttentionHeadConfig& base) {
  AttentionHeadConfig ideal = base;
  ideal.device.kind = DeviceKind::Linear;
  ideal.device.tau = std::numeric_limits<double>::infinity();
  ideal.device.variability_sigma = 0.0;
  ideal.input_quantizer.levels = kIdealLevels;
  ideal.stored_quantizer.levels = kIdealLevels;

  const double max_current = kMaxWeightVolts * ideal.device.beta;
  const double clock = 0x1p40;
  ideal.relu_converter.clock_ghz = clock;
  ideal.relu_converter.s_sat =
      2.0 * static_cast<double>(ideal.d) * ideal.input_quantizer.hi * max_current;
  ideal.signed_converter.clock_ghz = clock;
  ideal.signed_converter.s_sat =
      2.0 * static_cast<double>(ideal.tile_size) * ideal.relu_converter.t_max * max_current;

  const double adder_span = static_cast<double>(ideal.num_tiles) * ideal.signed_converter.t_max;
  ideal.out_scale = {1.0, 0.0};
  // Odd count keeps 0 on the grid.
  ideal.output_quantizer = {kIdealLevels + 1, -adder_span, adder_span};
  return ideal;
}

TilePair::TilePair(std::size_t size) : size_(size), k_cells_(size * size), v_cells_(size * size) {}

std::span<const GainCellState> TilePair::k_bitline(std::size_t slot) const {
  return std::span<const GainCellState>(k_cells_).subspan(slot * size_, size_);
}

std::span<const GainCellState> TilePair::v_bitline(std::size_t dim) const {
  return std::span<const GainCellState>(v_cells_).subspan(dim * size_, size_);
}

const GainCellState& TilePair::k_cell(std::size_t slot, std::size_t dim) const { return k_cells_.at(slot * size_ + dim); }
const GainCellState& TilePair::v_cell(std::size_t slot, std::size_t dim) const { return v_cells_.at(dim * size_ + slot); }
GainCellState& TilePair::k_cell(std::size_t slot, std::size_t dim) { return k_cells_.at(slot * size_ + dim); }
GainCellState& TilePair::v_cell(std::size_t slot, std::size_t dim) { return v_cells_.at(dim * size_ + slot); }

ConverterCounts& ConverterCounts::operator+=(const ConverterCounts& other) {
  relu_total += other.relu_total;
  relu_zero += other.relu_zero;
  relu_saturated += other.relu_saturated;
  signed_total += other.signed_total;
  signed_saturated += other.signed_saturated;
  return *this;
}

SlidingWindowCache::SlidingWindowCache(AttentionHeadConfig config)
    : config_(std::move(config)), rng_(config_.variability_seed) {
  config_.validate();
  tiles_.reserve(config_.num_tiles);
  for (std::size_t t = 0; t < config_.num_tiles; ++t) tiles_.emplace_back(config_.tile_size);
}

double SlidingWindowCache::draw_gain() {
  const double sigma = config_.device.variability_sigma;
  if (sigma == 0.0) return 1.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  double gain = 0.0;
  do {
    gain = 1.0 + sigma * normal(rng_);
  } while (gain <= 0.0);
  return gain;
}

void SlidingWindowCache::write_kv(std::span<const double> k, std::span<const double> v) {
  require_length(k, config_.d, "write_kv(k)");
  require_length(v, config_.d, "write_kv(v)");
  TilePair& tile = tiles_[write_ptr_ / config_.tile_size];
  const std::size_t slot = write_ptr_ % config_.tile_size;
  for (std::size_t r = 0; r < config_.d; ++r) {
    const auto k_level = quantize(scale(k[r], config_.k_scale), config_.stored_quantizer).level;
    tile.k_cell(slot, r) = write_cell(tile.k_cell(slot, r), k_level, config_.stored_quantizer, step_, draw_gain());
  }
  for (std::size_t r = 0; r < config_.d; ++r) {
    const auto v_level = quantize(scale(v[r], config_.v_scale), config_.stored_quantizer).level;
    tile.v_cell(slot, r) = write_cell(tile.v_cell(slot, r), v_level, config_.stored_quantizer, step_, draw_gain());
  }
}

AttendResult SlidingWindowCache::attend(std::span<const double> q, AttendTrace* trace) const {
  require_length(q, config_.d, "attend(q)");
  const std::size_t n = config_.tile_size;
  const std::size_t d = config_.d;
  const DeviceModel& device = config_.device;

  std::vector<PwmPulse> q_pulses(n);
  for (std::size_t r = 0; r < d; ++r) q_pulses[r] = encode_pwm(scale(q[r], config_.q_scale), config_.input_quantizer);

  if (trace != nullptr) {
    trace->q_pulse.resize(d);
    for (std::size_t r = 0; r < d; ++r) trace->q_pulse[r] = q_pulses[r].width;
    trace->tiles.assign(config_.num_tiles, {});
  }

  AttendResult result;
  result.counter_sum.assign(d, 0);
  std::vector<double> slot_decay(n);
  std::vector<double> relu_width(n);

  for (std::size_t t = 0; t < config_.num_tiles; ++t) {
    const TilePair& tile = tiles_[t];
    // All cells of a slot share one write step.
    for (std::size_t c = 0; c < n; ++c) {
      const auto& written_at = tile.k_cell(c, 0).written_at;
      slot_decay[c] = written_at ? decay_factor(step_ - *written_at, device) : 1.0;
    }

    TileTrace* tile_trace = trace != nullptr ? &trace->tiles[t] : nullptr;
    if (tile_trace != nullptr) {
      tile_trace->charge_qk.resize(n);
      tile_trace->relu_pulse.resize(n);
      tile_trace->charge_sv.resize(d);
      tile_trace->counter_out.resize(d);
    }

    for (std::size_t c = 0; c < n; ++c) {
      const auto cells = tile.k_bitline(c);
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double width = q_pulses[r].width;
        s += width * cell_current(device, cells[r].w * slot_decay[c], width > 0.0, cells[r].gain);
      }
      relu_width[c] = relu_charge_to_pulse({s}, config_.relu_converter).width;
      ++result.counts.relu_total;
      if (relu_width[c] == 0.0) ++result.counts.relu_zero;
      if (s >= config_.relu_converter.s_sat) ++result.counts.relu_saturated;
      if (tile_trace != nullptr) {
        tile_trace->charge_qk[c] = s;
        tile_trace->relu_pulse[c] = relu_width[c];
      }
    }

    for (std::size_t r = 0; r < d; ++r) {
      const auto cells = tile.v_bitline(r);
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double width = relu_width[c];
        s += width * cell_current(device, cells[c].w * slot_decay[c], width > 0.0, cells[c].gain);
      }
      const SignedPulse pulse = signed_charge_to_pulse({s}, config_.signed_converter);
      const std::int64_t count = counter_decode(pulse, config_.signed_converter);
      result.counter_sum[r] += count;
      ++result.counts.signed_total;
      if (std::abs(s) >= config_.signed_converter.s_sat) ++result.counts.signed_saturated;
      if (tile_trace != nullptr) {
        tile_trace->charge_sv[r] = s;
        tile_trace->counter_out[r] = count;
      }
    }
  }

  result.scaled_output.resize(d);
  result.output.resize(d);
  for (std::size_t r = 0; r < d; ++r) {
    const double sum_ns = static_cast<double>(result.counter_sum[r]) / config_.signed_converter.clock_ghz;
    result.scaled_output[r] = scale(sum_ns, config_.out_scale);
    result.output[r] = quantize(result.scaled_output[r], config_.output_quantizer).value;
  }
  return result;
}

void SlidingWindowCache::advance() {
  ++step_;
  write_ptr_ = static_cast<std::size_t>(step_ % static_cast<StepIndex>(window()));
}

AttendResult SlidingWindowCache::step(std::span<const double> q, std::span<const double> k, std::span<const double> v,
                                      AttendTrace* trace) {
  write_kv(k, v);
  AttendResult result = attend(q, trace);
  advance();
  return result;
}

EffectiveToken effective_token(const AttentionHeadConfig& config, std::span<const double> q,
                               std::span<const double> k, std::span<const double> v) {
  require_length(q, config.d, "effective_token(q)");
  require_length(k, config.d, "effective_token(k)");
  require_length(v, config.d, "effective_token(v)");
  const double beta = config.device.beta;
  EffectiveToken out;
  out.q.resize(config.d);
  out.k.resize(config.d);
  out.v.resize(config.d);
  for (std::size_t r = 0; r < config.d; ++r) {
    out.q[r] = std::clamp(scale(q[r], config.q_scale), config.input_quantizer.lo, config.input_quantizer.hi);
    out.k[r] = -beta * continuous_voltage(scale(k[r], config.k_scale), config.stored_quantizer);
    out.v[r] = -beta * continuous_voltage(scale(v[r], config.v_scale), config.stored_quantizer);
  }
  return out;
}

double oracle_gain(const AttentionHeadConfig& config) {
  const auto& relu = config.relu_converter;
  const auto& sign = config.signed_converter;
  return config.out_scale.a * (relu.t_max / relu.s_sat) * (sign.t_max / sign.s_sat);
}

Calibration calibrate_head(const AttentionHeadConfig& config, std::uint64_t seed, std::size_t samples) {
  config.validate();
  if (samples == 0) throw std::invalid_argument("calibrate_head: samples must be > 0");
  const std::size_t d = config.d;
  const std::size_t n = config.tile_size;
  const DeviceModel& device = config.device;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto query_widths = [&] {
    std::vector<double> widths(d);
    for (auto& w : widths) w = encode_pwm(scale(normal(rng), config.q_scale), config.input_quantizer).width;
    return widths;
  };
  auto stored_current = [&](double x, const ScalingStage& stage) {
    const auto level = quantize(scale(x, stage), config.stored_quantizer).level;
    return cell_current(device, level_voltage(level, config.stored_quantizer), true);
  };
  auto qk_charge = [&](const std::vector<double>& widths) {
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += widths[r] * stored_current(normal(rng), config.k_scale);
    return s;
  };

  Calibration cal{};
  {
    std::vector<double> charges;
    charges.reserve(samples * config.num_tiles);
    for (std::size_t i = 0; i < samples; ++i) {
      const auto widths = query_widths();
      for (std::size_t t = 0; t < config.num_tiles; ++t) charges.push_back(qk_charge(widths));
    }
    cal.relu_s_sat = percentile99(std::move(charges));
  }
  if (!(cal.relu_s_sat > 0.0)) throw std::runtime_error("calibrate_head: degenerate QK charge distribution");

  ConverterSpec relu = config.relu_converter;
  relu.s_sat = cal.relu_s_sat;

  // One query shared by all tiles, fresh keys and values per slot. Each query
  // yields num_tiles * d charges, so a tenth of the queries suffices.
  const std::size_t window_samples = (samples + 9) / 10;
  std::vector<double> sv_charges;
  sv_charges.reserve(window_samples * config.num_tiles * d);
  std::vector<double> pulses(n);
  for (std::size_t i = 0; i < window_samples; ++i) {
    const auto widths = query_widths();
    for (std::size_t t = 0; t < config.num_tiles; ++t) {
      for (auto& p : pulses) p = relu_charge_to_pulse({qk_charge(widths)}, relu).width;
      std::vector<double> acc(d, 0.0);
      for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < d; ++r) acc[r] += pulses[c] * stored_current(normal(rng), config.v_scale);
      }
      sv_charges.insert(sv_charges.end(), acc.begin(), acc.end());
    }
  }
  cal.signed_s_sat = percentile99(sv_charges);
  if (!(cal.signed_s_sat > 0.0)) throw std::runtime_error("calibrate_head: degenerate SV charge distribution");

  ConverterSpec signed_conv = config.signed_converter;
  signed_conv.s_sat = cal.signed_s_sat;
  std::vector<double> sums(window_samples * d, 0.0);
  for (std::size_t i = 0; i < window_samples; ++i) {
    for (std::size_t t = 0; t < config.num_tiles; ++t) {
      for (std::size_t r = 0; r < d; ++r) {
        const double s = sv_charges[(i * config.num_tiles + t) * d + r];
        const auto count = counter_decode(signed_charge_to_pulse({s}, signed_conv), signed_conv);
        sums[i * d + r] += static_cast<double>(count) / signed_conv.clock_ghz;
      }
    }
  }
  const double p99_sum = percentile99(std::move(sums));
  if (!(p99_sum > 0.0)) throw std::runtime_error("calibrate_head: degenerate adder output distribution");
  cal.out_scale_a = config.output_quantizer.hi / p99_sum;
  return cal;
}

}  // namespace gainattn
