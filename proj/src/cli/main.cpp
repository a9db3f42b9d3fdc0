#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "fexpo/cli.hpp"
#include "fexpo/execution.hpp"

namespace fexpo::cli {
namespace {

struct Flags {
  std::string config;
  std::optional<std::vector<double>> h, delta;
  std::optional<double> a, sigma, t, alpha, quad_tol, tolerance, kappa, ch_scale;
  std::optional<std::uint64_t> n, paths, seed, n_second;
  std::optional<std::string> out, generator, psi;
  bool write_paths = false;
  bool export_weights = false;
};

void add_flags(CLI::App& sub, Flags& f) {
  sub.add_option("--config", f.config, "JSON configuration file");
  sub.add_option("--h", f.h, "Hurst index or comma-separated list")->delimiter(',');
  sub.add_option("--delta", f.delta, "comma-separated H increments (distance-sweep)")->delimiter(',');
  sub.add_option("--a", f.a, "drift rate a");
  sub.add_option("--sigma", f.sigma, "volatility sigma");
  sub.add_option("--t", f.t, "horizon T");
  sub.add_option("--n", f.n, "grid steps");
  sub.add_option("--paths", f.paths, "number of Monte Carlo paths");
  sub.add_option("--seed", f.seed, "master seed");
  sub.add_option("--out", f.out, "output directory");
  sub.add_option("--alpha", f.alpha, "confidence level of the Kolmogorov radius and noise flags");
  sub.add_option("--quad-tol", f.quad_tol, "relative quadrature tolerance");
  sub.add_option("--n-second", f.n_second, "grid steps of the second-derivative check (malliavin-check)");
  sub.add_option("--tolerance", f.tolerance, "relative slack of the pathwise inequalities (malliavin-check)");
  sub.add_option("--generator", f.generator, "cholesky, circulant or volterra");
  sub.add_option("--psi", f.psi, "bounded test function: clip01, cos or sigmoid (distance-sweep)");
  sub.add_option("--kappa", f.kappa, "shift of the clip01 and sigmoid test functions");
  sub.add_option("--ch-scale", f.ch_scale, "multiply the calibrated kernel constant (fault injection)");
  sub.add_flag("--write-paths", f.write_paths, "write simulated paths to <out>/paths.bin (simulate)");
  sub.add_flag("--export-weights", f.export_weights, "write FKW1 weight matrices (kernel-check)");
}

nlohmann::json merged_values(const Flags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("config", "cannot open '" + f.config + "'");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config", "top level must be a JSON object");
  }
  auto set = [&](const char* key, const auto& opt) {
    if (opt) j[key] = *opt;
  };
  set("h", f.h);
  set("delta", f.delta);
  set("a", f.a);
  set("sigma", f.sigma);
  set("t", f.t);
  set("n", f.n);
  set("paths", f.paths);
  set("seed", f.seed);
  set("out", f.out);
  set("alpha", f.alpha);
  set("quad_tol", f.quad_tol);
  set("n_second", f.n_second);
  set("tolerance", f.tolerance);
  set("generator", f.generator);
  set("psi", f.psi);
  set("kappa", f.kappa);
  set("ch_scale", f.ch_scale);
  if (f.write_paths) j["write_paths"] = true;
  if (f.export_weights) j["export_weights"] = true;
  return j;
}

const char* command_help(Command c) {
  switch (c) {
    case Command::kernel_check: return "verify the kernel constant and covariance reproduction";
    case Command::simulate: return "Monte Carlo moments of the exponential functional against quadrature oracles";
    case Command::malliavin_check: return "pathwise bounds on the first and second Malliavin derivatives";
    case Command::distance_sweep: return "distances between coupled functionals as H moves away from H1";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fexpo: fractional Brownian motion exponential functional experiments"};
  // "-h" would clash with the --h (Hurst index) option.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  Flags flags;
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (Command c : {Command::kernel_check, Command::simulate, Command::malliavin_check, Command::distance_sweep}) {
    auto* sub = app.add_subcommand(std::string(command_name(c)), command_help(c));
    add_flags(*sub, flags);
    subs.emplace_back(sub, c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitConfigError;
  }

  try {
    Command command = Command::kernel_check;
    for (const auto& [sub, c] : subs)
      if (sub->parsed()) command = c;
    const ExperimentConfig cfg = resolve_config(command, merged_values(flags));
    configure_threads_from_env();
    const RunResult result = run(cfg);
    std::printf("%s: %s (report in %s)\n", std::string(command_name(command)).c_str(),
                result.all_pass ? "all checks passed" : "CHECKS FAILED", cfg.out.string().c_str());
    return result.all_pass ? kExitPass : kExitCheckFailed;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "fexpo: config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fexpo: error: %s\n", e.what());
    return kExitRuntimeError;
  }
}

}  // namespace fexpo::cli
