#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "gainattn/driver.hpp"

namespace gainattn::driver {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail_key(const std::string& key, const std::string& what) {
  throw ConfigError("config: field '" + key + "': " + what);
}

std::uint64_t read_uint(const Json& j, const std::string& key) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) fail_key(key, "must be >= 0");
  fail_key(key, "expected an integer, got " + std::string(j.type_name()));
}

std::size_t read_size(const Json& j, const std::string& key) { return static_cast<std::size_t>(read_uint(j, key)); }

std::int64_t read_levels(const Json& j, const std::string& key) {
  const std::uint64_t v = read_uint(j, key);
  if (v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) fail_key(key, "too large");
  return static_cast<std::int64_t>(v);
}

double read_double(const Json& j, const std::string& key) {
  if (!j.is_number()) fail_key(key, "expected a number, got " + std::string(j.type_name()));
  return j.get<double>();
}

// A number, or the string `word` which sets `flag`.
double read_double_or(const Json& j, const std::string& key, const char* word, bool& flag) {
  if (j.is_string()) {
    if (j.get<std::string>() != word) fail_key(key, std::string("expected a number or \"") + word + "\"");
    flag = true;
    return 0.0;
  }
  flag = false;
  return read_double(j, key);
}

bool read_bool(const Json& j, const std::string& key) {
  if (!j.is_boolean()) fail_key(key, "expected true or false, got " + std::string(j.type_name()));
  return j.get<bool>();
}

std::string read_string(const Json& j, const std::string& key) {
  if (!j.is_string()) fail_key(key, "expected a string, got " + std::string(j.type_name()));
  return j.get<std::string>();
}

std::string read_choice(const Json& j, const std::string& key, std::initializer_list<const char*> choices) {
  const std::string s = read_string(j, key);
  for (const char* c : choices)
    if (s == c) return s;
  std::string list;
  for (const char* c : choices) list += std::string(list.empty() ? "" : ", ") + c;
  fail_key(key, "'" + s + "' is not one of " + list);
}

Json tau_json(double tau) { return std::isinf(tau) ? Json("inf") : Json(tau); }

Json auto_or(bool is_auto, double value) { return is_auto ? Json("auto") : Json(value); }

Json optional_json(const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const Json&, const std::filesystem::path&)> read;
  std::function<Json(const RunConfig&)> write;
};

std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal().string();
}

#define GA_DOUBLE(name, member)                                                                 \
  Field {                                                                                       \
    name, [](RunConfig& c, const Json& j, const auto&) { c.member = read_double(j, name); },    \
        [](const RunConfig& c) { return Json(c.member); }                                       \
  }
#define GA_SIZE(name, member)                                                                   \
  Field {                                                                                       \
    name, [](RunConfig& c, const Json& j, const auto&) { c.member = read_size(j, name); },      \
        [](const RunConfig& c) { return Json(c.member); }                                       \
  }
#define GA_LEVELS(name, member)                                                                 \
  Field {                                                                                       \
    name, [](RunConfig& c, const Json& j, const auto&) { c.member = read_levels(j, name); },    \
        [](const RunConfig& c) { return Json(c.member); }                                       \
  }
#define GA_PATH(name, member)                                                                   \
  Field {                                                                                       \
    name,                                                                                       \
        [](RunConfig& c, const Json& j, const std::filesystem::path& base) {                    \
          c.member = resolve_path(read_string(j, name), base);                                  \
        },                                                                                      \
        [](const RunConfig& c) { return Json(c.member); }                                       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GA_SIZE("d", head.d),
      GA_SIZE("tile_size", head.tile_size),
      GA_SIZE("num_tiles", head.num_tiles),

      {"device_kind",
       [](RunConfig& c, const Json& j, const auto&) {
         c.head.device.kind =
             read_choice(j, "device_kind", {"linear", "cubic"}) == "cubic" ? DeviceKind::Cubic : DeviceKind::Linear;
       },
       [](const RunConfig& c) { return Json(c.head.device.kind == DeviceKind::Cubic ? "cubic" : "linear"); }},
      GA_DOUBLE("beta", head.device.beta),
      GA_DOUBLE("cubic_c1", head.device.cubic[0]),
      GA_DOUBLE("cubic_c2", head.device.cubic[1]),
      GA_DOUBLE("cubic_c3", head.device.cubic[2]),
      {"tau",
       [](RunConfig& c, const Json& j, const auto&) {
         bool inf = false;
         const double v = read_double_or(j, "tau", "inf", inf);
         c.head.device.tau = inf ? std::numeric_limits<double>::infinity() : v;
       },
       [](const RunConfig& c) { return tau_json(c.head.device.tau); }},
      GA_DOUBLE("dt", head.device.dt),
      GA_DOUBLE("variability_sigma", head.device.variability_sigma),
      {"variability_seed",
       [](RunConfig& c, const Json& j, const auto&) { c.head.variability_seed = read_uint(j, "variability_seed"); },
       [](const RunConfig& c) { return Json(c.head.variability_seed); }},

      {"relu_s_sat",
       [](RunConfig& c, const Json& j, const auto&) {
         const double v = read_double_or(j, "relu_s_sat", "auto", c.relu_s_sat_auto);
         if (!c.relu_s_sat_auto) c.head.relu_converter.s_sat = v;
       },
       [](const RunConfig& c) { return auto_or(c.relu_s_sat_auto, c.head.relu_converter.s_sat); }},
      GA_DOUBLE("relu_t_max", head.relu_converter.t_max),
      GA_DOUBLE("relu_clock_ghz", head.relu_converter.clock_ghz),
      {"signed_s_sat",
       [](RunConfig& c, const Json& j, const auto&) {
         const double v = read_double_or(j, "signed_s_sat", "auto", c.signed_s_sat_auto);
         if (!c.signed_s_sat_auto) c.head.signed_converter.s_sat = v;
       },
       [](const RunConfig& c) { return auto_or(c.signed_s_sat_auto, c.head.signed_converter.s_sat); }},
      GA_DOUBLE("signed_t_max", head.signed_converter.t_max),
      GA_DOUBLE("signed_clock_ghz", head.signed_converter.clock_ghz),

      GA_LEVELS("input_levels", head.input_quantizer.levels),
      GA_DOUBLE("input_lo", head.input_quantizer.lo),
      GA_DOUBLE("input_hi", head.input_quantizer.hi),
      GA_LEVELS("stored_levels", head.stored_quantizer.levels),
      GA_DOUBLE("stored_lo", head.stored_quantizer.lo),
      GA_DOUBLE("stored_hi", head.stored_quantizer.hi),
      GA_LEVELS("output_levels", head.output_quantizer.levels),
      GA_DOUBLE("output_lo", head.output_quantizer.lo),
      GA_DOUBLE("output_hi", head.output_quantizer.hi),

      GA_DOUBLE("q_scale_a", head.q_scale.a),
      GA_DOUBLE("q_scale_b", head.q_scale.b),
      GA_DOUBLE("k_scale_a", head.k_scale.a),
      GA_DOUBLE("k_scale_b", head.k_scale.b),
      GA_DOUBLE("v_scale_a", head.v_scale.a),
      GA_DOUBLE("v_scale_b", head.v_scale.b),
      {"out_scale_a",
       [](RunConfig& c, const Json& j, const auto&) {
         const double v = read_double_or(j, "out_scale_a", "auto", c.out_scale_a_auto);
         if (!c.out_scale_a_auto) c.head.out_scale.a = v;
       },
       [](const RunConfig& c) { return auto_or(c.out_scale_a_auto, c.head.out_scale.a); }},
      GA_DOUBLE("out_scale_b", head.out_scale.b),

      {"seed", [](RunConfig& c, const Json& j, const auto&) { c.seed = read_uint(j, "seed"); },
       [](const RunConfig& c) { return Json(c.seed); }},
      GA_SIZE("tokens", tokens),
      GA_SIZE("heads", heads),
      {"ideal", [](RunConfig& c, const Json& j, const auto&) { c.ideal = read_bool(j, "ideal"); },
       [](const RunConfig& c) { return Json(c.ideal); }},

      {"source",
       [](RunConfig& c, const Json& j, const auto&) {
         c.source = read_choice(j, "source", {"gaussian", "files", "projected"});
       },
       [](const RunConfig& c) { return Json(c.source); }},
      GA_DOUBLE("q_mean", gaussian.q_mean),
      GA_DOUBLE("q_std", gaussian.q_std),
      GA_DOUBLE("k_mean", gaussian.k_mean),
      GA_DOUBLE("k_std", gaussian.k_std),
      GA_DOUBLE("v_mean", gaussian.v_mean),
      GA_DOUBLE("v_std", gaussian.v_std),
      GA_PATH("q_file", q_file),
      GA_PATH("k_file", k_file),
      GA_PATH("v_file", v_file),
      GA_PATH("x_file", x_file),
      GA_PATH("wq_file", wq_file),
      GA_PATH("wk_file", wk_file),
      GA_PATH("wv_file", wv_file),

      {"trace",
       [](RunConfig& c, const Json& j, const auto&) { c.trace = read_choice(j, "trace", {"full", "head", "none"}); },
       [](const RunConfig& c) { return Json(c.trace); }},
      {"threshold",
       [](RunConfig& c, const Json& j, const auto&) {
         c.threshold = j.is_null() ? std::nullopt : std::optional<double>(read_double(j, "threshold"));
       },
       [](const RunConfig& c) { return optional_json(c.threshold); }},

      {"cost_sparsity",
       [](RunConfig& c, const Json& j, const auto&) {
         c.cost_sparsity = j.is_null() ? std::nullopt : std::optional<double>(read_double(j, "cost_sparsity"));
       },
       [](const RunConfig& c) { return optional_json(c.cost_sparsity); }},
      {"cost_sparsity_from_run",
       [](RunConfig& c, const Json& j, const auto&) {
         c.cost_sparsity_from_run = read_bool(j, "cost_sparsity_from_run");
       },
       [](const RunConfig& c) { return Json(c.cost_sparsity_from_run); }},

      {"adapt_target",
       [](RunConfig& c, const Json& j, const auto&) {
         c.adapt_target = read_choice(j, "adapt_target", {"head", "chain"});
       },
       [](const RunConfig& c) { return Json(c.adapt_target); }},
      GA_DOUBLE("adapt_tol", adapt_tol),
      GA_SIZE("adapt_max_iter", adapt_max_iter),
      GA_SIZE("adapt_samples", adapt_samples),
      GA_SIZE("adapt_sample_tokens", adapt_sample_tokens),
      {"adapt_chain_seed",
       [](RunConfig& c, const Json& j, const auto&) { c.adapt_chain_seed = read_uint(j, "adapt_chain_seed"); },
       [](const RunConfig& c) { return Json(c.adapt_chain_seed); }},
      GA_SIZE("adapt_chain_width", adapt_chain_width),
  };
  return table;
}

#undef GA_DOUBLE
#undef GA_SIZE
#undef GA_LEVELS
#undef GA_PATH

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError("config: field '" + key + "' is required for this source");
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError("config: field '" + key + "': file not found: " + path);
  }
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  Json root;
  try {
    root = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // The library message is "[json.exception.parse_error.101] parse error at line L, column C: ...".
    std::string what = e.what();
    const auto colon = what.find(": ");
    throw ConfigError("config: syntax error at " + line_col(text, e.byte) +
                      (colon == std::string::npos ? "" : ": " + what.substr(colon + 2)));
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");

  RunConfig config;
  for (const auto& [key, value] : root.items()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->read(config, value, base_dir);
  }
  validate(config);
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) {
  Json out = Json::object();
  for (const auto& f : fields()) out[f.key] = f.write(config);
  return out.dump(2) + "\n";
}

void validate(const RunConfig& config) {
  try {
    // Auto fields are placeholders until calibration; check the rest with a
    // stand-in value.
    AttentionHeadConfig head = config.head;
    if (config.relu_s_sat_auto) head.relu_converter.s_sat = 1.0;
    if (config.signed_s_sat_auto) head.signed_converter.s_sat = 1.0;
    if (config.out_scale_a_auto) head.out_scale.a = 1.0;
    head.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (config.heads == 0) fail_key("heads", "must be >= 1");
  const GaussianSource& g = config.gaussian;
  for (double s : {g.q_std, g.k_std, g.v_std}) {
    if (!(s >= 0.0 && std::isfinite(s))) throw ConfigError("config: gaussian std values must be finite and >= 0");
  }
  for (double m : {g.q_mean, g.k_mean, g.v_mean}) {
    if (!std::isfinite(m)) throw ConfigError("config: gaussian means must be finite");
  }
  if (config.source == "files") {
    require_file("q_file", config.q_file);
    require_file("k_file", config.k_file);
    require_file("v_file", config.v_file);
  } else if (config.source == "projected") {
    require_file("x_file", config.x_file);
    require_file("wq_file", config.wq_file);
    require_file("wk_file", config.wk_file);
    require_file("wv_file", config.wv_file);
  }
  if (config.threshold && !(*config.threshold >= 0.0)) fail_key("threshold", "must be >= 0");
  if (config.cost_sparsity && !(*config.cost_sparsity >= 0.0 && *config.cost_sparsity <= 1.0)) {
    fail_key("cost_sparsity", "must lie in [0, 1]");
  }
  if (!(config.adapt_tol >= 0.0)) fail_key("adapt_tol", "must be >= 0");
  if (config.adapt_samples == 0) fail_key("adapt_samples", "must be >= 1");
  if (config.adapt_sample_tokens == 0) fail_key("adapt_sample_tokens", "must be >= 1");
  if (config.adapt_chain_width == 0) fail_key("adapt_chain_width", "must be >= 1");
}

}  // namespace gainattn::driver
