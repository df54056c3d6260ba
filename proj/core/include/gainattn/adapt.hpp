#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gainattn/attention.hpp"
#include "gainattn/device.hpp"
#include "gainattn/signal.hpp"

namespace gainattn {

/// One input sample: a sequence of vectors fed to a pipeline in order.
using SampleStream = std::vector<std::vector<double>>;

struct StageStats {
  double mu = 0.0;
  /// Sample standard deviation (n - 1 denominator).
  double sigma = 0.0;
  std::size_t count = 0;
};

/// Collects every scaling stage's output values during forward passes.
class StageRecorder {
 public:
  explicit StageRecorder(std::size_t stages) : values_(stages) {}

  void record(std::size_t stage, double value) { values_.at(stage).push_back(value); }
  void record(std::size_t stage, std::span<const double> values);
  /// Appends another recorder's values stage by stage.
  void append(const StageRecorder& other);

  [[nodiscard]] std::size_t stage_count() const { return values_.size(); }
  /// Two-pass moments with compensated sums. Throws std::invalid_argument
  /// for a stage with fewer than two values.
  [[nodiscard]] std::vector<StageStats> stats() const;

 private:
  std::vector<std::vector<double>> values_;
};

/// A forward model with an ordered list of affine scaling stages.
class ScaledPipeline {
 public:
  virtual ~ScaledPipeline() = default;

  [[nodiscard]] virtual std::size_t stage_count() const = 0;
  [[nodiscard]] virtual ScalingStage stage(std::size_t index) const = 0;
  virtual void set_stage(std::size_t index, ScalingStage stage) = 0;

  /// Runs one sample and records each stage's output after scaling and
  /// before any clipping or quantization.
  virtual void forward(const SampleStream& sample, StageRecorder& recorder) const = 0;
};

/// Per-stage mean and standard deviation over all samples. Samples are
/// evaluated concurrently and merged in sample order.
[[nodiscard]] std::vector<StageStats> collect_stats(const ScaledPipeline& pipeline,
                                                    std::span<const SampleStream> samples);

struct AdaptOptions {
  /// Relative tolerance on sigma and sigma-normalized tolerance on the mean.
  double tol = 0.05;
  std::size_t max_iter = 50;
  /// Floor on sigma_L in the mean criterion.
  double epsilon = 1e-12;
};

struct StageGap {
  /// |sigma_NL / sigma_L - 1| (computed as |sigma_NL - sigma_L| / max(sigma_L, eps)).
  double sigma_gap = 0.0;
  /// |mu_NL - mu_L| / max(sigma_L, eps).
  double mean_gap = 0.0;

  [[nodiscard]] double max() const { return sigma_gap > mean_gap ? sigma_gap : mean_gap; }
};

struct DegenerateStage {
  std::size_t iteration;
  std::size_t stage;
};

struct AdaptReport {
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<StageStats> linear_stats;
  std::vector<StageStats> final_stats;
  std::vector<StageGap> final_gaps;
  /// Largest stage gap after each measurement of the nonlinear pipeline,
  /// starting with the initial one.
  std::vector<double> gap_history;
  /// Stages whose sigma_NL was 0 when updated; only b moved for those.
  std::vector<DegenerateStage> degenerate;
};

[[nodiscard]] std::vector<StageGap> stage_gaps(std::span<const StageStats> linear, std::span<const StageStats> nonlinear,
                                               double epsilon);

/// Statistics matching: repeatedly sets a <- a * sigma_L / sigma_NL and
/// b <- b + (mu_L - mu_NL) on every stage of `nonlinear` at once, until each
/// stage satisfies |sigma_NL - sigma_L| <= tol * max(sigma_L, eps) and
/// |mu_NL - mu_L| <= tol * max(sigma_L, eps), or max_iter updates have run.
/// A pipeline that already matches is left untouched and reports iteration 1.
/// Throws std::invalid_argument on stage-count mismatch, empty samples or
/// negative tol.
AdaptReport adapt_scalings(const ScaledPipeline& linear, ScaledPipeline& nonlinear,
                           std::span<const SampleStream> samples, const AdaptOptions& options = {});

/// Attention head as a four-stage pipeline (Q, K, V, output). Each sample row
/// is q|k|v concatenated (length 3d) and runs through a fresh cache.
class HeadPipeline final : public ScaledPipeline {
 public:
  enum Stage : std::size_t { kQuery = 0, kKey = 1, kValue = 2, kOutput = 3 };

  explicit HeadPipeline(AttentionHeadConfig config);

  [[nodiscard]] const AttentionHeadConfig& config() const { return config_; }

  [[nodiscard]] std::size_t stage_count() const override { return 4; }
  [[nodiscard]] ScalingStage stage(std::size_t index) const override;
  void set_stage(std::size_t index, ScalingStage stage) override;
  void forward(const SampleStream& sample, StageRecorder& recorder) const override;

  /// Head outputs (after the output quantizer) for every token of a sample.
  [[nodiscard]] SampleStream outputs(const SampleStream& sample) const;

 private:
  ScalingStage& stage_ref(std::size_t index);
  AttentionHeadConfig config_;
};

/// Feed-forward chain: stage 0, then for each layer a PWM-driven gain-cell
/// array followed by the next stage.
///
///   x -> stage0 -> [pwm -> cells(W0)] -> stage1 -> [pwm -> cells(W1)] -> ...
///
/// Weights are in [-1, 1] and stored so that positive weights source
/// positive current.
class AnalogChain final : public ScaledPipeline {
 public:
  using Matrix = std::vector<std::vector<double>>;  // [out][in]

  AnalogChain(std::vector<ScalingStage> stages, std::vector<Matrix> layers, DeviceModel device,
              QuantizerSpec input_quantizer = {16, 0.0, 15.0}, QuantizerSpec stored_quantizer = {8, -1.0, 1.0});

  [[nodiscard]] std::size_t stage_count() const override { return stages_.size(); }
  [[nodiscard]] ScalingStage stage(std::size_t index) const override { return stages_.at(index); }
  void set_stage(std::size_t index, ScalingStage stage) override;
  void forward(const SampleStream& sample, StageRecorder& recorder) const override;

  /// Final-stage output for one input vector.
  [[nodiscard]] std::vector<double> evaluate(std::span<const double> x) const;

  [[nodiscard]] const DeviceModel& device() const { return device_; }
  [[nodiscard]] const std::vector<Matrix>& layers() const { return layers_; }

 private:
  std::vector<double> run(std::span<const double> x, StageRecorder* recorder) const;

  std::vector<ScalingStage> stages_;
  std::vector<Matrix> layers_;
  std::vector<std::vector<std::vector<double>>> stored_;  // stored voltage per layer [out][in]
  DeviceModel device_;
  QuantizerSpec input_quantizer_;
  QuantizerSpec stored_quantizer_;
};

/// Small fixed-seed chain used by the adaptation fixtures: two `width` x
/// `width` layers of uniform [-1, 1] weights between an input stage
/// (2.5x + 7.5), a middle stage (0.25x + 7.5) and a unit output stage.
[[nodiscard]] AnalogChain toy_chain(const DeviceModel& device, std::uint64_t seed = 7, std::size_t width = 4);

/// `count` streams of `tokens` standard-normal vectors. Every stream is
/// followed by its negation so each coordinate has exactly zero sample mean.
[[nodiscard]] std::vector<SampleStream> symmetric_samples(std::size_t count, std::size_t tokens, std::size_t width,
                                                          std::uint64_t seed);

}  // namespace gainattn
