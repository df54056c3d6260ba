#include "gainattn/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace gainattn {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

}  // namespace

void StageRecorder::record(std::size_t stage, std::span<const double> values) {
  auto& dst = values_.at(stage);
  dst.insert(dst.end(), values.begin(), values.end());
}

void StageRecorder::append(const StageRecorder& other) {
  if (other.values_.size() != values_.size()) throw std::invalid_argument("StageRecorder::append: stage count differs");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i].insert(values_[i].end(), other.values_[i].begin(), other.values_[i].end());
  }
}

std::vector<StageStats> StageRecorder::stats() const {
  std::vector<StageStats> out;
  out.reserve(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto& xs = values_[i];
    if (xs.size() < 2) {
      throw std::invalid_argument("stage " + std::to_string(i) + " recorded fewer than two values");
    }
    const double n = static_cast<double>(xs.size());
    CompensatedSum sum;
    for (double x : xs) sum.add(x);
    const double mu = sum.value() / n;
    CompensatedSum sq;
    for (double x : xs) sq.add((x - mu) * (x - mu));
    out.push_back({mu, std::sqrt(sq.value() / (n - 1.0)), xs.size()});
  }
  return out;
}

std::vector<StageStats> collect_stats(const ScaledPipeline& pipeline, std::span<const SampleStream> samples) {
  if (samples.empty()) throw std::invalid_argument("collect_stats: empty sample set");
  const std::size_t stages = pipeline.stage_count();
  if (stages == 0) throw std::invalid_argument("collect_stats: pipeline has no scaling stages");

  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), std::size_t{1}, samples.size());
  std::vector<StageRecorder> partial(samples.size(), StageRecorder(stages));
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) pipeline.forward(samples[i], partial[i]);
  };
  if (workers == 1) {
    run_range(0, samples.size());
  } else {
    std::vector<std::future<void>> jobs;
    const std::size_t chunk = (samples.size() + workers - 1) / workers;
    for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
      jobs.push_back(std::async(std::launch::async, run_range, begin, std::min(samples.size(), begin + chunk)));
    }
    for (auto& job : jobs) job.get();
  }

  StageRecorder merged(stages);
  for (const auto& rec : partial) merged.append(rec);
  return merged.stats();
}

std::vector<StageGap> stage_gaps(std::span<const StageStats> linear, std::span<const StageStats> nonlinear,
                                 double epsilon) {
  if (linear.size() != nonlinear.size()) throw std::invalid_argument("stage_gaps: stage count differs");
  std::vector<StageGap> gaps(linear.size());
  for (std::size_t i = 0; i < linear.size(); ++i) {
    const double denom = std::max(linear[i].sigma, epsilon);
    gaps[i].sigma_gap = std::abs(nonlinear[i].sigma - linear[i].sigma) / denom;
    gaps[i].mean_gap = std::abs(nonlinear[i].mu - linear[i].mu) / denom;
  }
  return gaps;
}

AdaptReport adapt_scalings(const ScaledPipeline& linear, ScaledPipeline& nonlinear,
                           std::span<const SampleStream> samples, const AdaptOptions& options) {
  if (linear.stage_count() != nonlinear.stage_count()) {
    throw std::invalid_argument("adapt_scalings: pipelines have different stage structure");
  }
  if (!(options.tol >= 0.0)) throw std::invalid_argument("adapt_scalings: tol must be >= 0");
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("adapt_scalings: epsilon must be > 0");

  AdaptReport report;
  report.linear_stats = collect_stats(linear, samples);
  std::vector<StageStats> current = collect_stats(nonlinear, samples);
  std::vector<StageGap> gaps = stage_gaps(report.linear_stats, current, options.epsilon);

  auto largest = [&] {
    double g = 0.0;
    for (const auto& gap : gaps) g = std::max(g, gap.max());
    return g;
  };
  auto matched = [&] {
    return std::all_of(gaps.begin(), gaps.end(),
                       [&](const StageGap& g) { return g.sigma_gap <= options.tol && g.mean_gap <= options.tol; });
  };
  report.gap_history.push_back(largest());

  for (std::size_t it = 1; it <= options.max_iter; ++it) {
    if (matched()) {
      report.converged = true;
      report.iterations = it;
      break;
    }
    for (std::size_t i = 0; i < nonlinear.stage_count(); ++i) {
      ScalingStage stage = nonlinear.stage(i);
      const StageStats& ref = report.linear_stats[i];
      const StageStats& cur = current[i];
      if (cur.sigma > 0.0 && ref.sigma > 0.0) {
        stage.a *= ref.sigma / cur.sigma;
      } else {
        report.degenerate.push_back({it, i});
      }
      stage.b += ref.mu - cur.mu;
      nonlinear.set_stage(i, stage);
    }
    current = collect_stats(nonlinear, samples);
    gaps = stage_gaps(report.linear_stats, current, options.epsilon);
    report.gap_history.push_back(largest());
    report.iterations = it;
    if (matched()) {
      report.converged = true;
      break;
    }
  }
  if (options.max_iter == 0 && matched()) report.converged = true;

  report.final_stats = std::move(current);
  report.final_gaps = std::move(gaps);
  return report;
}

HeadPipeline::HeadPipeline(AttentionHeadConfig config) : config_(std::move(config)) { config_.validate(); }

ScalingStage& HeadPipeline::stage_ref(std::size_t index) {
  switch (index) {
    case kQuery: return config_.q_scale;
    case kKey: return config_.k_scale;
    case kValue: return config_.v_scale;
    case kOutput: return config_.out_scale;
    default: throw std::out_of_range("HeadPipeline: stage index " + std::to_string(index));
  }
}

ScalingStage HeadPipeline::stage(std::size_t index) const {
  switch (index) {
    case kQuery: return config_.q_scale;
    case kKey: return config_.k_scale;
    case kValue: return config_.v_scale;
    case kOutput: return config_.out_scale;
    default: throw std::out_of_range("HeadPipeline: stage index " + std::to_string(index));
  }
}

void HeadPipeline::set_stage(std::size_t index, ScalingStage stage) {
  stage.validate();
  stage_ref(index) = stage;
}

void HeadPipeline::forward(const SampleStream& sample, StageRecorder& recorder) const {
  const std::size_t d = config_.d;
  SlidingWindowCache cache(config_);
  for (const auto& row : sample) {
    if (row.size() != 3 * d) throw std::invalid_argument("HeadPipeline: sample row must have length 3d");
    const std::span<const double> all(row);
    const auto q = all.subspan(0, d);
    const auto k = all.subspan(d, d);
    const auto v = all.subspan(2 * d, d);
    for (std::size_t r = 0; r < d; ++r) {
      recorder.record(kQuery, scale(q[r], config_.q_scale));
      recorder.record(kKey, scale(k[r], config_.k_scale));
      recorder.record(kValue, scale(v[r], config_.v_scale));
    }
    const AttendResult result = cache.step(q, k, v);
    recorder.record(kOutput, result.scaled_output);
  }
}

SampleStream HeadPipeline::outputs(const SampleStream& sample) const {
  const std::size_t d = config_.d;
  SlidingWindowCache cache(config_);
  SampleStream out;
  out.reserve(sample.size());
  for (const auto& row : sample) {
    if (row.size() != 3 * d) throw std::invalid_argument("HeadPipeline: sample row must have length 3d");
    const std::span<const double> all(row);
    out.push_back(cache.step(all.subspan(0, d), all.subspan(d, d), all.subspan(2 * d, d)).output);
  }
  return out;
}

AnalogChain::AnalogChain(std::vector<ScalingStage> stages, std::vector<Matrix> layers, DeviceModel device,
                         QuantizerSpec input_quantizer, QuantizerSpec stored_quantizer)
    : stages_(std::move(stages)),
      layers_(std::move(layers)),
      device_(device),
      input_quantizer_(input_quantizer),
      stored_quantizer_(stored_quantizer) {
  if (stages_.empty()) throw std::invalid_argument("AnalogChain: at least one stage required");
  if (layers_.size() + 1 != stages_.size()) throw std::invalid_argument("AnalogChain: need one layer between stages");
  for (const auto& s : stages_) s.validate();
  device_.validate();
  input_quantizer_.validate();
  stored_quantizer_.validate();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Matrix& w = layers_[l];
    if (w.empty() || w.front().empty()) throw std::invalid_argument("AnalogChain: empty weight matrix");
    if (l > 0 && w.front().size() != layers_[l - 1].size()) {
      throw std::invalid_argument("AnalogChain: layer input width does not match previous layer output");
    }
    std::vector<std::vector<double>> volts(w.size());
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (w[r].size() != w.front().size()) throw std::invalid_argument("AnalogChain: ragged weight matrix");
      volts[r].resize(w[r].size());
      for (std::size_t c = 0; c < w[r].size(); ++c) {
        // Negated so that a positive weight sits below mid-rail.
        volts[r][c] = level_voltage(quantize(-w[r][c], stored_quantizer_).level, stored_quantizer_);
      }
    }
    stored_.push_back(std::move(volts));
  }
}

void AnalogChain::set_stage(std::size_t index, ScalingStage stage) {
  stage.validate();
  stages_.at(index) = stage;
}

std::vector<double> AnalogChain::run(std::span<const double> x, StageRecorder* recorder) const {
  if (!layers_.empty() && x.size() != layers_.front().front().size()) {
    throw std::invalid_argument("AnalogChain: input width does not match first layer");
  }
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale(x[i], stages_[0]);
  if (recorder != nullptr) recorder->record(0, y);

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    std::vector<double> widths(y.size());
    for (std::size_t c = 0; c < y.size(); ++c) widths[c] = encode_pwm(y[c], input_quantizer_).width;
    const auto& volts = stored_[l];
    std::vector<double> next(volts.size());
    for (std::size_t r = 0; r < volts.size(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < widths.size(); ++c) {
        s += widths[c] * cell_current(device_, volts[r][c], widths[c] > 0.0);
      }
      next[r] = scale(s, stages_[l + 1]);
    }
    y = std::move(next);
    if (recorder != nullptr) recorder->record(l + 1, y);
  }
  return y;
}

void AnalogChain::forward(const SampleStream& sample, StageRecorder& recorder) const {
  for (const auto& x : sample) run(x, &recorder);
}

std::vector<double> AnalogChain::evaluate(std::span<const double> x) const { return run(x, nullptr); }

AnalogChain toy_chain(const DeviceModel& device, std::uint64_t seed, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<AnalogChain::Matrix> layers(2, AnalogChain::Matrix(width, std::vector<double>(width)));
  for (auto& layer : layers)
    for (auto& row : layer)
      for (auto& x : row) x = dist(rng);
  return AnalogChain({{2.5, 7.5}, {0.25, 7.5}, {1.0, 0.0}}, std::move(layers), device);
}

std::vector<SampleStream> symmetric_samples(std::size_t count, std::size_t tokens, std::size_t width,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<SampleStream> out;
  out.reserve(2 * count);
  for (std::size_t i = 0; i < count; ++i) {
    SampleStream s(tokens, std::vector<double>(width));
    for (auto& row : s)
      for (auto& x : row) x = dist(rng);
    SampleStream mirrored = s;
    for (auto& row : mirrored)
      for (auto& x : row) x = -x;
    out.push_back(std::move(s));
    out.push_back(std::move(mirrored));
  }
  return out;
}

}  // namespace gainattn
