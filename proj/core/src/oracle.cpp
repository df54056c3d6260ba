#include "gainattn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gainattn {

void OracleConfig::validate() const {
  if (d == 0 || window == 0) throw std::invalid_argument("oracle: d and window must be >= 1");
}

namespace {

void check_sequences(const Sequence& q, const Sequence& k, const Sequence& v, std::size_t d) {
  if (q.size() != k.size() || q.size() != v.size()) throw std::invalid_argument("oracle: sequence lengths differ");
  for (const Sequence* seq : {&q, &k, &v}) {
    for (const auto& row : *seq) {
      if (row.size() != d) {
        throw std::invalid_argument("oracle: vector of length " + std::to_string(row.size()) + ", expected " +
                                    std::to_string(d));
      }
    }
  }
}

}  // namespace

Sequence ideal_decayed_attention(const Sequence& q, const Sequence& k, const Sequence& v, const OracleConfig& config,
                                 double tau, double dt) {
  config.validate();
  check_sequences(q, k, v, config.d);
  if (!(tau > 0.0) || !(dt >= 0.0)) throw std::invalid_argument("oracle: tau must be > 0 and dt >= 0");

  const std::size_t d = config.d;
  const double score_scale = config.scale_scores ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0;
  Sequence out(q.size(), std::vector<double>(d, 0.0));
  std::vector<double> weights;

  for (std::size_t t = 0; t < q.size(); ++t) {
    const std::size_t first = t + 1 >= config.window ? t + 1 - config.window : 0;
    weights.assign(t - first + 1, 0.0);
    std::vector<double> factors(weights.size());
    for (std::size_t j = first; j <= t; ++j) {
      const double decay = std::isinf(tau) ? 1.0 : std::exp(-static_cast<double>(t - j) * dt / tau);
      factors[j - first] = decay;
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += q[t][r] * (k[j][r] * decay);
      weights[j - first] = s * score_scale;
    }

    if (config.activation == Activation::ReLU) {
      for (double& w : weights) w = std::max(w, 0.0);
    } else {
      const double peak = *std::max_element(weights.begin(), weights.end());
      double total = 0.0;
      for (double& w : weights) {
        w = std::exp(w - peak);
        total += w;
      }
      for (double& w : weights) w /= total;
    }

    for (std::size_t j = first; j <= t; ++j) {
      const double w = weights[j - first];
      if (w == 0.0) continue;
      for (std::size_t r = 0; r < d; ++r) out[t][r] += w * (v[j][r] * factors[j - first]);
    }
  }
  return out;
}

Sequence ideal_attention(const Sequence& q, const Sequence& k, const Sequence& v, const OracleConfig& config) {
  return ideal_decayed_attention(q, k, v, config, std::numeric_limits<double>::infinity(), 0.0);
}

}  // namespace gainattn
