#include "gainattn/signal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gainattn {

double QuantizerSpec::value_of(std::int64_t level) const {
  if (level == levels - 1) return hi;
  return lo + static_cast<double>(level) * step();
}

void QuantizerSpec::validate() const {
  if (levels < 2) throw std::invalid_argument("quantizer needs at least 2 levels, got " + std::to_string(levels));
  if (!(lo < hi)) throw std::invalid_argument("quantizer range must satisfy lo < hi");
  // Level indices are carried in doubles during rounding.
  if (levels > (std::int64_t{1} << 52)) throw std::invalid_argument("quantizer level count exceeds 2^52");
}

void ScalingStage::validate() const {
  if (a == 0.0 || !std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("scaling stage needs finite a != 0 and finite b");
  }
}

double round_half_even(double t) {
  const double floor_t = std::floor(t);
  const double frac = t - floor_t;
  if (frac > 0.5) return floor_t + 1.0;
  if (frac < 0.5) return floor_t;
  return std::fmod(floor_t, 2.0) == 0.0 ? floor_t : floor_t + 1.0;
}

Quantized quantize(double x, const QuantizerSpec& spec) {
  if (std::isnan(x)) throw std::domain_error("quantize: NaN input");
  const double clipped = std::clamp(x, spec.lo, spec.hi);
  const double index = round_half_even((clipped - spec.lo) / spec.step());
  const auto level = std::clamp(static_cast<std::int64_t>(index), std::int64_t{0}, spec.levels - 1);
  return {level, spec.value_of(level)};
}

PwmPulse encode_pwm(double x, const QuantizerSpec& spec) {
  if (spec.lo < 0.0 || spec.hi > kMaxPulseWidthNs) {
    throw std::invalid_argument("encode_pwm: pulse grid must lie within [0, 15] ns");
  }
  return {quantize(x, spec).value};
}

}  // namespace gainattn
