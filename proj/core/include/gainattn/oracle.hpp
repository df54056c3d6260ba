#pragma once

#include <cstddef>
#include <vector>

namespace gainattn {

/// Row-major token sequence: one vector of length d per step.
using Sequence = std::vector<std::vector<double>>;

enum class Activation { ReLU, Softmax };

struct OracleConfig {
  std::size_t d = 64;
  std::size_t window = 1024;
  Activation activation = Activation::ReLU;
  /// Divide scores by sqrt(d).
  bool scale_scores = true;

  void validate() const;
};

/// Floating-point sliding-window attention: token t attends to
/// [max(0, t - M + 1), t].
[[nodiscard]] Sequence ideal_attention(const Sequence& q, const Sequence& k, const Sequence& v,
                                       const OracleConfig& config);

/// As ideal_attention, with k_j and v_j each multiplied by
/// exp(-(t - j) * dt / tau) when read at step t.
[[nodiscard]] Sequence ideal_decayed_attention(const Sequence& q, const Sequence& k, const Sequence& v,
                                               const OracleConfig& config, double tau, double dt);

}  // namespace gainattn
