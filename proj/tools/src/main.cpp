#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gainattn/driver.hpp"

namespace drv = gainattn::driver;

namespace {

constexpr int kOk = 0;
constexpr int kThresholdExceeded = 1;
constexpr int kConfigError = 2;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> tokens;
  std::optional<std::size_t> heads;
  std::optional<std::string> out;
  std::optional<double> threshold;
  bool ideal = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Config file (flat JSON)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--tokens", f.tokens, "Number of tokens");
  cmd->add_option("--heads", f.heads, "Number of heads");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--threshold", f.threshold, "compare: fail when the worst step error exceeds this");
  cmd->add_flag("--ideal", f.ideal, "Apply the idealization preset");
}

drv::RunConfig build_config(const Flags& f) {
  drv::RunConfig c = f.config ? drv::load_config(*f.config) : drv::RunConfig{};
  if (f.seed) c.seed = *f.seed;
  if (f.tokens) c.tokens = *f.tokens;
  if (f.heads) c.heads = *f.heads;
  if (f.threshold) c.threshold = *f.threshold;
  if (f.ideal) c.ideal = true;
  drv::validate(c);
  return c;
}

std::optional<std::filesystem::path> out_dir(const Flags& f) {
  if (!f.out) return std::nullopt;
  return std::filesystem::path(*f.out);
}

int cmd_run(const Flags& f) {
  const auto c = build_config(f);
  const auto s = drv::run_command(c, out_dir(f));
  const auto counts = s.total_counts();
  std::printf("tokens %zu  heads %zu  records %zu  sparsity %.6f  relu_sat %zu/%zu  signed_sat %zu/%zu\n", s.tokens,
              s.heads.size(), s.trace_records, s.sparsity(), counts.relu_saturated, counts.relu_total,
              counts.signed_saturated, counts.signed_total);
  return kOk;
}

int cmd_compare(const Flags& f) {
  const auto c = build_config(f);
  const auto r = drv::compare_command(c, out_dir(f));
  std::printf("max step rel error %s  total rel error %s  worst abs %s  quantization budget %s\n",
              drv::format_double(r.max_rel_error).c_str(), drv::format_double(r.total_rel_error).c_str(),
              drv::format_double(r.worst_abs_error).c_str(), drv::format_double(r.quantization_budget).c_str());
  if (r.exceeded) {
    std::printf("threshold %s exceeded\n", drv::format_double(*c.threshold).c_str());
    return kThresholdExceeded;
  }
  return kOk;
}

int cmd_adapt(const Flags& f) {
  const auto c = build_config(f);
  const auto o = drv::adapt_command(c, out_dir(f));
  std::printf("%s after %zu iteration(s)\n", o.report.converged ? "converged" : "not converged", o.report.iterations);
  for (std::size_t i = 0; i < o.after.size(); ++i) {
    std::printf("  %-10s a %s  b %s\n", o.stage_names[i].c_str(), drv::format_double(o.after[i].a).c_str(),
                drv::format_double(o.after[i].b).c_str());
  }
  return kOk;
}

int cmd_cost(const Flags& f) {
  const auto c = build_config(f);
  const auto o = drv::cost_command(c, out_dir(f));
  const auto& r = o.report;
  std::printf("head %.4f nJ  token %.4f nJ  latency %.1f ns  sparsity %.4f\n", r.head_energy_pj * 1e-3,
              r.token_energy_pj * 1e-3, r.latency_per_token_ns, r.sparsity);
  for (const auto& g : o.gpus) {
    std::printf("  %-12s speedup x%.0f%s  energy x%.0f%s\n", g.name.c_str(), g.latency_ratio,
                g.latency_flagged ? " (flagged)" : "", g.energy_ratio, g.energy_flagged ? " (flagged)" : "");
  }
  return kOk;
}

int cmd_dump(const Flags& f) {
  const auto c = build_config(f);
  const std::string text = drv::dump_config(c);
  if (f.out) {
    std::filesystem::create_directories(*f.out);
    std::ofstream(std::filesystem::path(*f.out) / "config.json", std::ios::binary) << text;
  } else {
    std::cout << text;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analog gain-cell attention simulator"};
  app.require_subcommand(1);
  Flags flags;
  int (*handler)(const Flags&) = nullptr;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Flags&);
  };
  const Sub subs[] = {
      {"run", "Simulate the head over a token stream and write traces", cmd_run},
      {"compare", "Compare against the floating-point reference", cmd_compare},
      {"adapt", "Match scaling-stage statistics to a linear-device reference", cmd_adapt},
      {"cost", "Energy, latency and area report", cmd_cost},
      {"dump-config", "Print the resolved configuration", cmd_dump},
  };
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, flags);
    cmd->callback([&handler, fn = s.fn] { handler = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    return handler(flags);
  } catch (const drv::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
