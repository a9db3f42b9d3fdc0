#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "fexpo/cli.hpp"
#include "fexpo/stats.hpp"

namespace fexpo::cli {
namespace {

using nlohmann::json;

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(key, "must be finite");
  return d;
}

std::uint64_t get_uint(const json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i < 0) throw ConfigError(key, "must be nonnegative");
    return static_cast<std::uint64_t>(i);
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  throw ConfigError(key, "expected a nonnegative integer");
}

std::vector<double> get_list(const json& v, const std::string& key) {
  std::vector<double> out;
  if (v.is_number()) {
    out.push_back(get_double(v, key));
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(get_double(v[i], key + "[" + std::to_string(i) + "]"));
  } else {
    throw ConfigError(key, "expected a number or a list of numbers");
  }
  if (out.empty()) throw ConfigError(key, "list is empty");
  return out;
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
  return v.get<bool>();
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void validate(const ExperimentConfig& c) {
  for (std::size_t i = 0; i < c.hurst.size(); ++i)
    if (!(c.hurst[i] > 0.0 && c.hurst[i] < 1.0))
      throw ConfigError("h", "value " + fmt(c.hurst[i]) + " is outside (0, 1)");
  if (c.hurst.empty()) throw ConfigError("h", "at least one H is required");
  if (!(c.params.horizon > 0.0)) throw ConfigError("t", "must be positive");
  if (c.n < 2) throw ConfigError("n", "needs at least 2 grid steps");
  if (c.n > (std::size_t{1} << 20)) throw ConfigError("n", "more than 2^20 grid steps");
  if (c.n_paths < 1) throw ConfigError("paths", "must be at least 1");
  if (c.n_paths > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("paths", "exceeds 2^32 - 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha", "must lie in (0, 1)");
  if (!(c.quad_tol >= 1e-14 && c.quad_tol <= 1e-2)) throw ConfigError("quad_tol", "must lie in [1e-14, 1e-2]");
  if (!(c.ch_scale > 0.0)) throw ConfigError("ch_scale", "must be positive");
  if (!(c.tolerance >= 0.0 && c.tolerance < 1.0)) throw ConfigError("tolerance", "must lie in [0, 1)");

  const bool derivatives = c.command == Command::malliavin_check || c.command == Command::distance_sweep;
  if (derivatives && c.params.sigma == 0.0)
    throw ConfigError("sigma", "must be nonzero for " + std::string(command_name(c.command)) +
                                   " (the derivative energy vanishes identically)");
  if (c.command == Command::malliavin_check) {
    if (c.n_second < 2 || c.n_second > SecondDerivativeOperator::kMaxSteps)
      throw ConfigError("n_second", "must lie in [2, " + std::to_string(SecondDerivativeOperator::kMaxSteps) + "]");
    if (c.n % c.n_second != 0) throw ConfigError("n_second", "must divide n = " + std::to_string(c.n));
  }
  if (c.command == Command::distance_sweep) {
    if (c.hurst.size() != 1) throw ConfigError("h", "distance-sweep takes exactly one base H");
    if (c.deltas.empty()) throw ConfigError("delta", "at least one delta is required");
    for (double d : c.deltas) {
      if (!(d >= 0.0)) throw ConfigError("delta", "value " + fmt(d) + " is negative");
      if (!(c.hurst[0] + d < 1.0)) throw ConfigError("delta", "H + " + fmt(d) + " is not below 1");
    }
    if (c.generator != Generator::volterra)
      throw ConfigError("generator", "distance-sweep couples paths through the volterra generator only");
    TestFunction::from_id(c.psi, c.kappa);
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "h",         "delta",      "a",         "sigma",     "t",        "n",          "paths",
      "seed",      "out",        "alpha",     "quad_tol",  "n_second", "tolerance",  "generator",
      "psi",       "kappa",      "write_paths", "export_weights", "ch_scale"};
  return keys;
}

}  // namespace

std::string_view command_name(Command c) {
  switch (c) {
    case Command::kernel_check: return "kernel-check";
    case Command::simulate: return "simulate";
    case Command::malliavin_check: return "malliavin-check";
    case Command::distance_sweep: return "distance-sweep";
  }
  return "unknown";
}

Command parse_command(std::string_view name) {
  for (Command c : {Command::kernel_check, Command::simulate, Command::malliavin_check, Command::distance_sweep})
    if (command_name(c) == name) return c;
  throw ConfigError("command", "unknown command '" + std::string(name) + "'");
}

ExperimentConfig default_config(Command c) {
  ExperimentConfig cfg;
  cfg.command = c;
  switch (c) {
    case Command::kernel_check:
      cfg.hurst = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
      cfg.n = 64;
      break;
    case Command::simulate:
      cfg.hurst = {0.3, 0.5, 0.7};
      break;
    case Command::malliavin_check:
      cfg.hurst = {0.3, 0.5, 0.7};
      cfg.n = 256;
      cfg.n_paths = 10000;
      break;
    case Command::distance_sweep:
      cfg.hurst = {0.4};
      cfg.deltas = {0.05, 0.1, 0.2};
      cfg.generator = Generator::volterra;
      break;
  }
  return cfg;
}

ExperimentConfig resolve_config(Command c, const nlohmann::json& values) {
  if (!values.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  ExperimentConfig cfg = default_config(c);
  for (const auto& [key, v] : values.items()) {
    if (!known_keys().count(key)) throw ConfigError(key, "unknown configuration key");
    if (key == "h") cfg.hurst = get_list(v, key);
    else if (key == "delta") cfg.deltas = get_list(v, key);
    else if (key == "a") cfg.params.a = get_double(v, key);
    else if (key == "sigma") cfg.params.sigma = get_double(v, key);
    else if (key == "t") cfg.params.horizon = get_double(v, key);
    else if (key == "n") cfg.n = get_uint(v, key);
    else if (key == "paths") cfg.n_paths = get_uint(v, key);
    else if (key == "seed") cfg.seed = get_uint(v, key);
    else if (key == "out") cfg.out = get_string(v, key);
    else if (key == "alpha") cfg.alpha = get_double(v, key);
    else if (key == "quad_tol") cfg.quad_tol = get_double(v, key);
    else if (key == "n_second") cfg.n_second = get_uint(v, key);
    else if (key == "tolerance") cfg.tolerance = get_double(v, key);
    else if (key == "psi") cfg.psi = get_string(v, key);
    else if (key == "kappa") cfg.kappa = get_double(v, key);
    else if (key == "write_paths") cfg.write_paths = get_bool(v, key);
    else if (key == "export_weights") cfg.export_weights = get_bool(v, key);
    else if (key == "ch_scale") cfg.ch_scale = get_double(v, key);
    else if (key == "generator") {
      try {
        cfg.generator = parse_generator(get_string(v, key));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(key, e.what());
      }
    }
  }
  try {
    validate(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError("psi", e.what());
  }
  return cfg;
}

nlohmann::json config_json(const ExperimentConfig& c) {
  json j;
  j["command"] = command_name(c.command);
  j["h"] = c.hurst;
  j["a"] = c.params.a;
  j["sigma"] = c.params.sigma;
  j["t"] = c.params.horizon;
  j["n"] = c.n;
  j["paths"] = c.n_paths;
  j["seed"] = c.seed;
  j["alpha"] = c.alpha;
  j["quad_tol"] = c.quad_tol;
  j["ch_scale"] = c.ch_scale;
  switch (c.command) {
    case Command::kernel_check:
      break;
    case Command::simulate:
      j["generator"] = generator_name(c.generator);
      break;
    case Command::malliavin_check:
      j["generator"] = generator_name(c.generator);
      j["n_second"] = c.n_second;
      j["tolerance"] = c.tolerance;
      break;
    case Command::distance_sweep:
      j["delta"] = c.deltas;
      j["psi"] = c.psi;
      j["kappa"] = c.kappa;
      break;
  }
  return j;
}

std::string config_hash(const ExperimentConfig& c) {
  const std::string text = config_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fexpo::cli
