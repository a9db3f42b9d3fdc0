#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fexpo/fbm.hpp"
#include "fexpo/functional.hpp"
#include "json.hpp"

namespace fexpo::cli {

enum class Command { kernel_check, simulate, malliavin_check, distance_sweep };

std::string_view command_name(Command c);
Command parse_command(std::string_view name);

// Invalid configuration; names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument("config field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  Command command = Command::kernel_check;
  ModelParams params;
  std::vector<double> hurst;   // H values; distance-sweep uses exactly one base H
  std::vector<double> deltas;  // distance-sweep only
  std::size_t n = 512;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 42;
  double alpha = 0.01;
  double quad_tol = kDefaultQuadTol;
  std::filesystem::path out = "out";

  std::size_t n_second = 64;   // malliavin-check: grid of the second-derivative check
  double tolerance = 0.02;     // malliavin-check: relative slack of the inequalities
  Generator generator = Generator::circulant;
  std::string psi = "cos";     // distance-sweep: bounded test function
  double kappa = 1.0;
  bool write_paths = false;
  bool export_weights = false;
  double ch_scale = 1.0;       // fault injection: multiplies the calibrated constant
};

// Command defaults before any file or flag values are applied.
ExperimentConfig default_config(Command c);

// Applies the keys of `values` on top of the defaults and validates the
// result. Unknown keys and out-of-range values raise ConfigError.
ExperimentConfig resolve_config(Command c, const nlohmann::json& values);

// Canonical JSON of the fields that affect results (out, write_paths and
// export_weights are excluded), and its 64-bit FNV-1a hash in hex.
nlohmann::json config_json(const ExperimentConfig& c);
std::string config_hash(const ExperimentConfig& c);

struct RunResult {
  bool all_pass = false;
  nlohmann::json report;
};

RunResult run_kernel_check(const ExperimentConfig& c);
RunResult run_simulate(const ExperimentConfig& c);
RunResult run_malliavin_check(const ExperimentConfig& c);
RunResult run_distance_sweep(const ExperimentConfig& c);
RunResult run(const ExperimentConfig& c);

// Exit codes.
inline constexpr int kExitPass = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

int main(int argc, char** argv);

}  // namespace fexpo::cli
