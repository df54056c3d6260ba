#pragma once

// Command-line driver pieces, kept in a library so tests can call them
// without spawning the executable.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gainattn/adapt.hpp"
#include "gainattn/attention.hpp"
#include "gainattn/costmodel.hpp"
#include "gainattn/oracle.hpp"

namespace gainattn::driver {

/// Anything wrong with the configuration or the files it names (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaussianSource {
  double q_mean = 0.0, q_std = 1.0;
  double k_mean = 0.0, k_std = 1.0;
  double v_mean = 0.0, v_std = 1.0;

  friend bool operator==(const GaussianSource&, const GaussianSource&) = default;
};

/// Flat run configuration. Field names match the config keys one to one
/// (see README for the list).
struct RunConfig {
  AttentionHeadConfig head = AttentionHeadConfig::paper_default();
  /// "auto" in the config: calibrate at startup instead of using the number.
  bool relu_s_sat_auto = false;
  bool signed_s_sat_auto = false;
  bool out_scale_a_auto = false;

  std::uint64_t seed = 0;
  std::size_t tokens = 64;
  std::size_t heads = 1;
  bool ideal = false;

  /// "gaussian", "files" (q/k/v_file) or "projected" (x_file and w*_file).
  std::string source = "gaussian";
  GaussianSource gaussian;
  std::string q_file, k_file, v_file;
  std::string x_file, wq_file, wk_file, wv_file;

  /// "full", "head" (q_in and head_out only) or "none".
  std::string trace = "full";

  /// compare fails (exit 1) when the worst per-step relative error exceeds it.
  std::optional<double> threshold;

  /// cost: fixed sparsity, or measured from a run when absent and
  /// cost_sparsity_from_run is set; the reference sparsity otherwise.
  std::optional<double> cost_sparsity;
  bool cost_sparsity_from_run = false;

  /// "head" adapts the head's four stages against a linear-device copy;
  /// "chain" uses the small two-layer fixture chain.
  std::string adapt_target = "head";
  double adapt_tol = 0.05;
  std::size_t adapt_max_iter = 50;
  std::size_t adapt_samples = 8;
  std::size_t adapt_sample_tokens = 16;
  std::uint64_t adapt_chain_seed = 7;
  std::size_t adapt_chain_width = 4;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses flat JSON-shaped text. Missing keys keep their defaults; unknown
/// keys, wrong types and invalid values raise ConfigError naming the key (or
/// line and column for syntax errors). Relative file paths are resolved
/// against `base_dir`.
[[nodiscard]] RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in a fixed order; parse_config of the
/// result gives back an equal RunConfig.
[[nodiscard]] std::string dump_config(const RunConfig& config);

/// Checks cross-field constraints and that referenced files exist.
void validate(const RunConfig& config);

/// Head config actually simulated: calibration for "auto" fields, then the
/// idealization preset if requested.
[[nodiscard]] AttentionHeadConfig resolve_head(const RunConfig& config);

struct TokenStream {
  Sequence q, k, v;
};

/// Token stream for one head. Gaussian streams draw from seed and the head
/// index; file streams are the same for every head.
[[nodiscard]] TokenStream make_stream(const RunConfig& config, std::size_t head);

/// Reads a CSV of numbers, one vector per line. Blank lines and lines
/// starting with '#' are skipped.
[[nodiscard]] Sequence read_matrix_csv(const std::filesystem::path& path);

struct HeadSummary {
  double output_norm_mean = 0.0;
  double output_norm_max = 0.0;
  ConverterCounts counts;
  [[nodiscard]] double sparsity() const;
};

struct RunSummary {
  std::size_t tokens = 0;
  std::size_t trace_records = 0;
  std::vector<HeadSummary> heads;
  [[nodiscard]] ConverterCounts total_counts() const;
  [[nodiscard]] double sparsity() const;
};

/// Runs every head over its stream and, if `out_dir` is set, writes
/// trace.csv, trace.jsonl and summary.json there. Heads run concurrently;
/// their records are merged in head order.
RunSummary run_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir);

struct CompareReport {
  /// Per step of head 0: ||hw - ref|| / ||ref|| (0 when both are zero).
  std::vector<double> step_rel_error;
  double max_rel_error = 0.0;
  /// Relative L2 error over the whole run.
  double total_rel_error = 0.0;
  double worst_abs_error = 0.0;
  /// First-order error budget from quantization and clock flooring,
  /// ignoring saturation. Informational only.
  double quantization_budget = 0.0;
  bool exceeded = false;
};

/// Runs head 0 against ideal_decayed_attention on the same stream (fed the
/// effective inputs the cells see) and writes compare.csv and compare.json.
CompareReport compare_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir);

struct AdaptOutcome {
  AdaptReport report;
  std::vector<std::string> stage_names;
  std::vector<ScalingStage> before;
  std::vector<ScalingStage> after;
  /// The input config with adapted head scalings (head target only).
  std::optional<RunConfig> adapted;
};

/// Writes scalings.json, adapt_report.json and, for the head target,
/// adapted_config.json.
AdaptOutcome adapt_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir);

struct CostOutcome {
  EnergyReport report;
  std::vector<GpuComparison> gpus;
};

/// Writes cost.json, cost.csv and gpu_ratios.csv.
CostOutcome cost_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir);

/// Shortest round-trip decimal text for a double; "inf"/"-inf"/"nan" for
/// non-finite values.
[[nodiscard]] std::string format_double(double x);

}  // namespace gainattn::driver
