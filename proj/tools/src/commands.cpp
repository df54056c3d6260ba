#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <random>
#include <sstream>

#include "json.hpp"

#include "gainattn/driver.hpp"

namespace gainattn::driver {

namespace {

using Json = nlohmann::ordered_json;

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

double l2(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// One trace record in both output formats.
class TraceWriter {
 public:
  void add(std::size_t head, std::size_t step, const char* stage, long tile, const std::vector<double>& values) {
    csv_ << head << ',' << step << ',' << stage << ',' << tile << ',';
    json_ << "{\"head\":" << head << ",\"step\":" << step << ",\"stage\":\"" << stage << "\",\"tile\":" << tile
          << ",\"values\":[";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::string v = format_double(values[i]);
      csv_ << (i == 0 ? "" : " ") << v;
      json_ << (i == 0 ? "" : ",") << v;
    }
    csv_ << '\n';
    json_ << "]}\n";
    ++records_;
  }

  void add(std::size_t head, std::size_t step, const char* stage, long tile, const std::vector<std::int64_t>& values) {
    std::vector<double> as_double(values.begin(), values.end());
    add(head, step, stage, tile, as_double);
  }

  [[nodiscard]] std::string csv() const { return csv_.str(); }
  [[nodiscard]] std::string jsonl() const { return json_.str(); }
  [[nodiscard]] std::size_t records() const { return records_; }

 private:
  std::ostringstream csv_;
  std::ostringstream json_;
  std::size_t records_ = 0;
};

struct HeadRun {
  HeadSummary summary;
  TraceWriter trace;
  Sequence outputs;
};

HeadRun run_head(const RunConfig& config, const AttentionHeadConfig& head_config, std::size_t head) {
  AttentionHeadConfig hc = head_config;
  hc.variability_seed = head_config.variability_seed + head;
  const TokenStream stream = make_stream(config, head);
  SlidingWindowCache cache(hc);
  HeadRun run;
  const bool full = config.trace == "full";
  const bool any = config.trace != "none";
  double norm_sum = 0.0;
  for (std::size_t t = 0; t < stream.q.size(); ++t) {
    AttendTrace trace;
    const AttendResult result = cache.step(stream.q[t], stream.k[t], stream.v[t], full || any ? &trace : nullptr);
    run.summary.counts += result.counts;
    const double norm = l2(result.output);
    norm_sum += norm;
    run.summary.output_norm_max = std::max(run.summary.output_norm_max, norm);
    if (any) {
      run.trace.add(head, t, "q_in", -1, trace.q_pulse);
      if (full) {
        for (std::size_t tile = 0; tile < trace.tiles.size(); ++tile) {
          const TileTrace& tt = trace.tiles[tile];
          const long index = static_cast<long>(tile);
          run.trace.add(head, t, "charge_qk", index, tt.charge_qk);
          run.trace.add(head, t, "relu_pulse", index, tt.relu_pulse);
          run.trace.add(head, t, "charge_sv", index, tt.charge_sv);
          run.trace.add(head, t, "counter_out", index, tt.counter_out);
        }
      }
      run.trace.add(head, t, "head_out", -1, result.output);
    }
    run.outputs.push_back(result.output);
  }
  if (!stream.q.empty()) run.summary.output_norm_mean = norm_sum / static_cast<double>(stream.q.size());
  return run;
}

// JSON has no infinities; those go out as strings.
Json number_json(double x) { return std::isfinite(x) ? Json(x) : Json(format_double(x)); }

Json counts_json(const ConverterCounts& c) {
  Json j = Json::object();
  j["relu_total"] = c.relu_total;
  j["relu_zero"] = c.relu_zero;
  j["relu_saturated"] = c.relu_saturated;
  j["signed_total"] = c.signed_total;
  j["signed_saturated"] = c.signed_saturated;
  return j;
}

Sequence matvec_rows(const Sequence& w, const Sequence& x, const std::string& name) {
  Sequence out;
  out.reserve(x.size());
  for (const auto& row : x) {
    std::vector<double> y(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i].size() != row.size()) {
        throw ConfigError(name + ": row " + std::to_string(i + 1) + " has " + std::to_string(w[i].size()) +
                          " columns but x_file vectors have " + std::to_string(row.size()) + " values");
      }
      for (std::size_t j = 0; j < row.size(); ++j) y[i] += w[i][j] * row[j];
    }
    out.push_back(std::move(y));
  }
  return out;
}

void check_stream(const Sequence& s, const std::string& name, std::size_t d, std::size_t tokens) {
  if (s.size() < tokens) {
    throw ConfigError(name + " provides " + std::to_string(s.size()) + " tokens but tokens = " +
                      std::to_string(tokens));
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].size() != d) {
      throw ConfigError(name + ": token " + std::to_string(i + 1) + " has " + std::to_string(s[i].size()) +
                        " values, expected d = " + std::to_string(d));
    }
  }
}

// Worst case over written columns only: every rounding and flooring error
// aligned, no saturation, no decay.
double quantization_budget(const AttentionHeadConfig& c, std::size_t tokens) {
  const double d = static_cast<double>(c.d);
  const double imax = kMaxWeightVolts * c.device.beta;
  const double dq = c.input_quantizer.step() / 2.0;
  // Half a stored level, as a current.
  const double di = c.device.beta * kMaxWeightVolts / static_cast<double>(c.stored_quantizer.levels - 1);
  const double qk = d * (dq * imax + c.input_quantizer.hi * di);
  const auto& r = c.relu_converter;
  const auto& s = c.signed_converter;
  const double dw = std::min(r.t_max, r.t_max / r.s_sat * qk + 1.0 / r.clock_ghz);
  const std::size_t written = std::min(tokens, c.window());
  double total_ns = 0.0;
  for (std::size_t tile = 0; tile < c.num_tiles; ++tile) {
    const std::size_t start = tile * c.tile_size;
    if (written <= start) break;
    const double cols = static_cast<double>(std::min(c.tile_size, written - start));
    const double sv = cols * (dw * imax + r.t_max * di);
    total_ns += std::min(s.t_max, s.t_max / s.s_sat * sv) + 1.0 / s.clock_ghz;
  }
  return std::abs(c.out_scale.a) * total_ns + c.output_quantizer.step() / 2.0;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Sequence read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  Sequence rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = std::min(line.find(',', pos), line.size());
      std::string cell = line.substr(pos, comma - pos);
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? std::string() : cell.substr(b, e - b + 1);
      double value = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": column " +
                          std::to_string(row.size() + 1) + ": not a number: '" + cell + "'");
      }
      row.push_back(value);
      pos = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

AttentionHeadConfig resolve_head(const RunConfig& config) {
  AttentionHeadConfig head = config.head;
  if (config.relu_s_sat_auto || config.signed_s_sat_auto || config.out_scale_a_auto) {
    // calibrate_head derives all three together; only the "auto" fields
    // take its values.
    if (config.relu_s_sat_auto) head.relu_converter.s_sat = 1.0;
    if (config.signed_s_sat_auto) head.signed_converter.s_sat = 1.0;
    if (config.out_scale_a_auto) head.out_scale.a = 1.0;
    const Calibration cal = calibrate_head(head);
    if (config.relu_s_sat_auto) head.relu_converter.s_sat = cal.relu_s_sat;
    if (config.signed_s_sat_auto) head.signed_converter.s_sat = cal.signed_s_sat;
    if (config.out_scale_a_auto) head.out_scale.a = cal.out_scale_a;
  }
  if (config.ideal) head = idealized(head);
  return head;
}

TokenStream make_stream(const RunConfig& config, std::size_t head) {
  const std::size_t d = config.head.d;
  const std::size_t tokens = config.tokens;
  TokenStream s;
  if (config.source == "gaussian") {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(head)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const GaussianSource& g = config.gaussian;
    auto draw = [&](double mean, double sd) {
      std::vector<double> x(d);
      for (auto& v : x) v = mean + sd * normal(rng);
      return x;
    };
    for (std::size_t t = 0; t < tokens; ++t) {
      s.q.push_back(draw(g.q_mean, g.q_std));
      s.k.push_back(draw(g.k_mean, g.k_std));
      s.v.push_back(draw(g.v_mean, g.v_std));
    }
    return s;
  }
  if (config.source == "files") {
    s.q = read_matrix_csv(config.q_file);
    s.k = read_matrix_csv(config.k_file);
    s.v = read_matrix_csv(config.v_file);
    if (s.q.size() != s.k.size() || s.q.size() != s.v.size()) {
      throw ConfigError("token files disagree in length: q_file " + std::to_string(s.q.size()) + ", k_file " +
                        std::to_string(s.k.size()) + ", v_file " + std::to_string(s.v.size()) + " tokens");
    }
  } else {
    const Sequence x = read_matrix_csv(config.x_file);
    s.q = matvec_rows(read_matrix_csv(config.wq_file), x, "wq_file");
    s.k = matvec_rows(read_matrix_csv(config.wk_file), x, "wk_file");
    s.v = matvec_rows(read_matrix_csv(config.wv_file), x, "wv_file");
  }
  check_stream(s.q, config.source == "files" ? "q_file" : "wq_file", d, tokens);
  check_stream(s.k, config.source == "files" ? "k_file" : "wk_file", d, tokens);
  check_stream(s.v, config.source == "files" ? "v_file" : "wv_file", d, tokens);
  s.q.resize(tokens);
  s.k.resize(tokens);
  s.v.resize(tokens);
  return s;
}

double HeadSummary::sparsity() const {
  return counts.relu_total == 0 ? 0.0
                                : static_cast<double>(counts.relu_zero) / static_cast<double>(counts.relu_total);
}

ConverterCounts RunSummary::total_counts() const {
  ConverterCounts total;
  for (const auto& h : heads) total += h.counts;
  return total;
}

double RunSummary::sparsity() const {
  const ConverterCounts c = total_counts();
  return c.relu_total == 0 ? 0.0 : static_cast<double>(c.relu_zero) / static_cast<double>(c.relu_total);
}

RunSummary run_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  const AttentionHeadConfig head_config = resolve_head(config);
  std::vector<std::future<HeadRun>> jobs;
  for (std::size_t h = 0; h < config.heads; ++h) {
    jobs.push_back(std::async(std::launch::async, [&, h] { return run_head(config, head_config, h); }));
  }
  std::vector<HeadRun> runs;
  for (auto& job : jobs) runs.push_back(job.get());

  RunSummary summary;
  summary.tokens = config.tokens;
  std::string csv = "head,step,stage,tile,values\n";
  std::string jsonl;
  for (auto& r : runs) {
    summary.heads.push_back(r.summary);
    summary.trace_records += r.trace.records();
    csv += r.trace.csv();
    jsonl += r.trace.jsonl();
  }

  if (out_dir) {
    const auto dir = prepare_dir(*out_dir);
    if (config.trace != "none") {
      write_file(dir / "trace.csv", csv);
      write_file(dir / "trace.jsonl", jsonl);
    }
    Json j = Json::object();
    j["tokens"] = summary.tokens;
    j["heads"] = config.heads;
    j["window"] = head_config.window();
    j["trace_records"] = summary.trace_records;
    j["sparsity"] = summary.sparsity();
    j["counts"] = counts_json(summary.total_counts());
    Json per_head = Json::array();
    for (std::size_t h = 0; h < summary.heads.size(); ++h) {
      const HeadSummary& hs = summary.heads[h];
      Json e = Json::object();
      e["head"] = h;
      e["output_norm_mean"] = hs.output_norm_mean;
      e["output_norm_max"] = hs.output_norm_max;
      e["sparsity"] = hs.sparsity();
      e["counts"] = counts_json(hs.counts);
      per_head.push_back(e);
    }
    j["per_head"] = per_head;
    write_file(dir / "summary.json", j.dump(2) + "\n");
  }
  return summary;
}

CompareReport compare_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  const AttentionHeadConfig hc = resolve_head(config);
  const TokenStream stream = make_stream(config, 0);
  SlidingWindowCache cache(hc);
  Sequence hw;
  Sequence qe, ke, ve;
  for (std::size_t t = 0; t < stream.q.size(); ++t) {
    hw.push_back(cache.step(stream.q[t], stream.k[t], stream.v[t]).output);
    EffectiveToken e = effective_token(hc, stream.q[t], stream.k[t], stream.v[t]);
    qe.push_back(std::move(e.q));
    ke.push_back(std::move(e.k));
    ve.push_back(std::move(e.v));
  }
  OracleConfig oc;
  oc.d = hc.d;
  oc.window = hc.window();
  oc.activation = Activation::ReLU;
  oc.scale_scores = false;
  Sequence ref = stream.q.empty() ? Sequence{} : ideal_decayed_attention(qe, ke, ve, oc, hc.device.tau, hc.device.dt);
  const double gain = oracle_gain(hc);
  for (auto& row : ref)
    for (double& x : row) x = gain * x + hc.out_scale.b;

  CompareReport report;
  double diff_total = 0.0;
  double ref_total = 0.0;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t r = 0; r < hc.d; ++r) {
      const double e = hw[t][r] - ref[t][r];
      diff += e * e;
      norm += ref[t][r] * ref[t][r];
      report.worst_abs_error = std::max(report.worst_abs_error, std::abs(e));
    }
    diff_total += diff;
    ref_total += norm;
    double rel = 0.0;
    if (norm > 0.0) {
      rel = std::sqrt(diff / norm);
    } else if (diff > 0.0) {
      rel = std::numeric_limits<double>::infinity();
    }
    report.step_rel_error.push_back(rel);
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  report.total_rel_error =
      ref_total > 0.0 ? std::sqrt(diff_total / ref_total)
                      : (diff_total > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  report.quantization_budget = quantization_budget(hc, stream.q.size());
  report.exceeded = config.threshold.has_value() && !(report.max_rel_error <= *config.threshold);

  if (out_dir) {
    const auto dir = prepare_dir(*out_dir);
    std::string csv = "step,rel_l2_error\n";
    for (std::size_t t = 0; t < report.step_rel_error.size(); ++t) {
      csv += std::to_string(t) + "," + format_double(report.step_rel_error[t]) + "\n";
    }
    write_file(dir / "compare.csv", csv);
    Json j = Json::object();
    j["tokens"] = ref.size();
    j["ideal"] = config.ideal;
    j["max_rel_error"] = number_json(report.max_rel_error);
    j["total_rel_error"] = number_json(report.total_rel_error);
    j["worst_abs_error"] = report.worst_abs_error;
    j["quantization_budget_abs"] = report.quantization_budget;
    j["threshold"] = config.threshold ? Json(*config.threshold) : Json(nullptr);
    j["exceeded"] = report.exceeded;
    write_file(dir / "compare.json", j.dump(2) + "\n");
  }
  return report;
}

AdaptOutcome adapt_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  AdaptOptions options;
  options.tol = config.adapt_tol;
  options.max_iter = config.adapt_max_iter;
  AdaptOutcome outcome;

  if (config.adapt_target == "chain") {
    const std::size_t w = config.adapt_chain_width;
    DeviceModel linear = config.head.device;
    linear.kind = DeviceKind::Linear;
    const AnalogChain reference = toy_chain(linear, config.adapt_chain_seed, w);
    AnalogChain chain = toy_chain(config.head.device, config.adapt_chain_seed, w);
    const auto samples = symmetric_samples(config.adapt_samples, config.adapt_sample_tokens, w, config.seed);
    for (std::size_t i = 0; i < chain.stage_count(); ++i) {
      outcome.stage_names.push_back("stage" + std::to_string(i));
      outcome.before.push_back(chain.stage(i));
    }
    outcome.report = adapt_scalings(reference, chain, samples, options);
    for (std::size_t i = 0; i < chain.stage_count(); ++i) outcome.after.push_back(chain.stage(i));
  } else {
    AttentionHeadConfig hc = resolve_head(config);
    AttentionHeadConfig linear_hc = hc;
    linear_hc.device.kind = DeviceKind::Linear;
    const HeadPipeline reference(linear_hc);
    HeadPipeline head(hc);
    const auto samples = symmetric_samples(config.adapt_samples, config.adapt_sample_tokens, 3 * hc.d, config.seed);
    outcome.stage_names = {"q_scale", "k_scale", "v_scale", "out_scale"};
    for (std::size_t i = 0; i < 4; ++i) outcome.before.push_back(head.stage(i));
    outcome.report = adapt_scalings(reference, head, samples, options);
    for (std::size_t i = 0; i < 4; ++i) outcome.after.push_back(head.stage(i));
    RunConfig adapted = config;
    adapted.head.q_scale = outcome.after[0];
    adapted.head.k_scale = outcome.after[1];
    adapted.head.v_scale = outcome.after[2];
    adapted.head.out_scale = outcome.after[3];
    adapted.out_scale_a_auto = false;
    if (!config.ideal) outcome.adapted = adapted;
  }

  if (out_dir) {
    const auto dir = prepare_dir(*out_dir);
    Json scalings = Json::array();
    for (std::size_t i = 0; i < outcome.after.size(); ++i) {
      Json e = Json::object();
      e["stage"] = outcome.stage_names[i];
      e["a"] = outcome.after[i].a;
      e["b"] = outcome.after[i].b;
      scalings.push_back(e);
    }
    write_file(dir / "scalings.json", scalings.dump(2) + "\n");

    const AdaptReport& r = outcome.report;
    Json rep = Json::object();
    rep["target"] = config.adapt_target;
    rep["converged"] = r.converged;
    rep["iterations"] = r.iterations;
    rep["tol"] = config.adapt_tol;
    rep["max_iter"] = config.adapt_max_iter;
    Json stages = Json::array();
    for (std::size_t i = 0; i < outcome.after.size(); ++i) {
      Json e = Json::object();
      e["stage"] = outcome.stage_names[i];
      e["a_before"] = outcome.before[i].a;
      e["b_before"] = outcome.before[i].b;
      e["a"] = outcome.after[i].a;
      e["b"] = outcome.after[i].b;
      e["mu_linear"] = r.linear_stats[i].mu;
      e["sigma_linear"] = r.linear_stats[i].sigma;
      e["mu_final"] = r.final_stats[i].mu;
      e["sigma_final"] = r.final_stats[i].sigma;
      e["sigma_gap"] = r.final_gaps[i].sigma_gap;
      e["mean_gap"] = r.final_gaps[i].mean_gap;
      stages.push_back(e);
    }
    rep["stages"] = stages;
    rep["gap_history"] = r.gap_history;
    Json degenerate = Json::array();
    for (const auto& dgn : r.degenerate) {
      degenerate.push_back(Json{{"iteration", dgn.iteration}, {"stage", outcome.stage_names[dgn.stage]}});
    }
    rep["degenerate"] = degenerate;
    write_file(dir / "adapt_report.json", rep.dump(2) + "\n");
    if (outcome.adapted) write_file(dir / "adapted_config.json", dump_config(*outcome.adapted));
  }
  return outcome;
}

CostOutcome cost_command(const RunConfig& config, const std::optional<std::filesystem::path>& out_dir) {
  const CostConstants constants;
  double sparsity = constants.reference_sparsity;
  if (config.cost_sparsity) {
    sparsity = *config.cost_sparsity;
  } else if (config.cost_sparsity_from_run) {
    RunConfig quiet = config;
    quiet.trace = "none";
    sparsity = run_command(quiet, std::nullopt).sparsity();
  }
  CostOutcome outcome;
  outcome.report = estimate(resolve_head(config), config.heads, config.tokens, sparsity, constants);
  outcome.gpus = gpu_ratio_report(outcome.report, constants);

  if (out_dir) {
    const auto dir = prepare_dir(*out_dir);
    const auto fields = report_fields(outcome.report);
    std::string csv = "field,value\n";
    Json j = Json::object();
    for (const auto& [name, value] : fields) {
      csv += name + "," + format_double(value) + "\n";
      j[name] = value;
    }
    write_file(dir / "cost.csv", csv);
    std::string gpu_csv =
        "gpu,gpu_latency_ns,gpu_energy_nj,latency_ratio,energy_ratio,published_latency_ratio,"
        "published_energy_ratio,latency_flagged,energy_flagged\n";
    Json gpus = Json::array();
    for (const auto& g : outcome.gpus) {
      gpu_csv += g.name + "," + format_double(g.gpu_latency_ns) + "," + format_double(g.gpu_energy_nj) + "," +
                 format_double(g.latency_ratio) + "," + format_double(g.energy_ratio) + "," +
                 format_double(g.published_latency_ratio) + "," + format_double(g.published_energy_ratio) + "," +
                 (g.latency_flagged ? "1" : "0") + "," + (g.energy_flagged ? "1" : "0") + "\n";
      Json e = Json::object();
      e["gpu"] = g.name;
      e["gpu_latency_ns"] = g.gpu_latency_ns;
      e["gpu_energy_nj"] = g.gpu_energy_nj;
      e["latency_ratio"] = g.latency_ratio;
      e["energy_ratio"] = g.energy_ratio;
      e["published_latency_ratio"] = g.published_latency_ratio;
      e["published_energy_ratio"] = g.published_energy_ratio;
      e["latency_flagged"] = g.latency_flagged;
      e["energy_flagged"] = g.energy_flagged;
      gpus.push_back(e);
    }
    j["gpu_ratios"] = gpus;
    write_file(dir / "cost.json", j.dump(2) + "\n");
    write_file(dir / "gpu_ratios.csv", gpu_csv);
  }
  return outcome;
}

}  // namespace gainattn::driver
