#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fexpo/cli.hpp"

using namespace fexpo;
using namespace fexpo::cli;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fexpo");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::main(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fexpo_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string config_field(Command c, const nlohmann::json& values) {
  try {
    resolve_config(c, values);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("command names") {
  for (Command c : {Command::kernel_check, Command::simulate, Command::malliavin_check, Command::distance_sweep})
    CHECK(parse_command(command_name(c)) == c);
  CHECK_THROWS_AS(parse_command("plot"), ConfigError);
}

TEST_CASE("defaults") {
  const auto mc = default_config(Command::malliavin_check);
  CHECK(mc.n == 256);
  CHECK(mc.n_paths == 10000);
  CHECK(mc.hurst == std::vector<double>{0.3, 0.5, 0.7});
  const auto sweep = default_config(Command::distance_sweep);
  CHECK(sweep.hurst == std::vector<double>{0.4});
  CHECK(sweep.deltas == std::vector<double>{0.05, 0.1, 0.2});
  CHECK(sweep.n == 512);
  CHECK(sweep.n_paths == 100000);
  CHECK(sweep.seed == 42);
  CHECK(sweep.alpha == 0.01);
  CHECK(sweep.quad_tol == 1e-8);
}

TEST_CASE("configuration validation names the field") {
  using nlohmann::json;
  CHECK(config_field(Command::simulate, json{{"h", {0.3, 1.2}}}) == "h");
  CHECK(config_field(Command::simulate, json{{"hurst", 0.3}}) == "hurst");
  CHECK(config_field(Command::simulate, json{{"t", -1.0}}) == "t");
  CHECK(config_field(Command::simulate, json{{"n", 1}}) == "n");
  CHECK(config_field(Command::simulate, json{{"n", "many"}}) == "n");
  CHECK(config_field(Command::simulate, json{{"paths", 0}}) == "paths");
  CHECK(config_field(Command::simulate, json{{"paths", -3}}) == "paths");
  CHECK(resolve_config(Command::simulate, json{{"paths", 5}}).n_paths == 5);
  CHECK(config_field(Command::simulate, json{{"alpha", 1.5}}) == "alpha");
  CHECK(config_field(Command::simulate, json{{"quad_tol", 0.5}}) == "quad_tol");
  CHECK(config_field(Command::simulate, json{{"generator", "wavelet"}}) == "generator");
  CHECK(config_field(Command::malliavin_check, json{{"sigma", 0.0}}) == "sigma");
  CHECK(config_field(Command::malliavin_check, json{{"n_second", 48}}) == "n_second");
  CHECK(config_field(Command::malliavin_check, json{{"n_second", 512}, {"n", 512}}) == "n_second");
  CHECK(config_field(Command::distance_sweep, json{{"h", {0.3, 0.4}}}) == "h");
  CHECK(config_field(Command::distance_sweep, json{{"delta", {0.1, 0.7}}}) == "delta");
  CHECK(config_field(Command::distance_sweep, json{{"delta", {-0.1}}}) == "delta");
  CHECK(config_field(Command::distance_sweep, json{{"generator", "circulant"}}) == "generator");
  CHECK(config_field(Command::distance_sweep, json{{"psi", "step"}}) == "psi");
  CHECK(config_field(Command::kernel_check, json{{"ch_scale", 0.0}}) == "ch_scale");
  CHECK(config_field(Command::simulate, json{{"a", 0.2}, {"h", 0.4}}).empty());
  // A scalar is accepted where a list is expected.
  CHECK(resolve_config(Command::simulate, json{{"h", 0.4}}).hurst == std::vector<double>{0.4});
  CHECK_THROWS_AS(resolve_config(Command::simulate, json::array()), ConfigError);
}

TEST_CASE("config hash") {
  auto a = default_config(Command::simulate);
  auto b = a;
  b.out = "elsewhere";
  b.write_paths = true;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.seed = 43;
  CHECK(config_hash(a) != config_hash(b));
  CHECK_FALSE(config_json(a).contains("out"));
  CHECK(config_json(a).at("seed") == 42);
}

TEST_CASE("kernel-check end to end") {
  const auto out = scratch("kc");
  CHECK(run_cli({"kernel-check", "--h", "0.3,0.5,0.7", "--n", "16", "--export-weights", "--out", out.string()}) ==
        kExitPass);
  const auto report = read_json(out / "report.json");
  CHECK(report.at("all_pass") == true);
  CHECK(report.at("schema_version") == 1);
  CHECK(report.at("command") == "kernel-check");
  CHECK(report.contains("config_hash"));
  CHECK(report.at("master_seed") == 42);
  // H = 1/2 rows are exact.
  for (const auto& row : report.at("checks"))
    if (row.at("H") == 0.5) CHECK(row.at("abs_error").get<double>() < 1e-14);
  CHECK(slurp(out / "report.csv").rfind("# schema_version=1,config_hash=", 0) == 0);
  CHECK(fs::file_size(out / "weights_H0.3.bin") == 16 + 8 * 16 * 16);

  // Fault injection: a 1% error in the kernel constant must fail the run.
  const auto bad = scratch("kc_bad");
  CHECK(run_cli({"kernel-check", "--h", "0.3", "--n", "16", "--ch-scale", "1.01", "--out", bad.string()}) ==
        kExitCheckFailed);
  CHECK(read_json(bad / "report.json").at("all_pass") == false);
}

TEST_CASE("configuration errors exit with status 2") {
  const auto out = scratch("cfg");
  CHECK(run_cli({"malliavin-check", "--sigma", "0", "--out", out.string()}) == kExitConfigError);
  CHECK(run_cli({"simulate", "--h", "1.2", "--out", out.string()}) == kExitConfigError);
  CHECK(run_cli({"simulate", "--bogus"}) == kExitConfigError);
  CHECK(run_cli({}) == kExitConfigError);
  CHECK(run_cli({"simulate", "--config", (out / "missing.json").string()}) == kExitConfigError);
  fs::create_directories(out);
  std::ofstream(out / "bad.json") << R"({"h": [0.3], "colour": "red"})";
  CHECK(run_cli({"simulate", "--config", (out / "bad.json").string()}) == kExitConfigError);
  CHECK_FALSE(fs::exists(out / "report.json"));
}

TEST_CASE("flags override the config file") {
  const auto out = scratch("override");
  fs::create_directories(out);
  std::ofstream(out / "cfg.json") << R"({"h": [0.3], "paths": 5000, "n": 32, "seed": 1})";
  CHECK(run_cli({"simulate", "--config", (out / "cfg.json").string(), "--seed", "7", "--out", out.string()}) ==
        kExitPass);
  const auto report = read_json(out / "report.json");
  CHECK(report.at("master_seed") == 7);
  CHECK(report.at("config").at("paths") == 5000);
  CHECK(report.at("config").at("h") == nlohmann::json::array({0.3}));
}

TEST_CASE("reruns are bitwise identical") {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  for (const auto& dir : {a, b})
    REQUIRE(run_cli({"simulate", "--h", "0.3,0.7", "--paths", "9000", "--n", "32", "--write-paths", "--out",
                     dir.string()}) == kExitPass);
  for (const char* f : {"report.json", "report.csv", "paths_H0.3.bin", "paths_H0.7.bin"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
}

TEST_CASE("small malliavin-check and distance-sweep runs") {
  const auto mc = scratch("mc");
  CHECK(run_cli({"malliavin-check", "--h", "0.4", "--paths", "300", "--n", "32", "--n-second", "16", "--a", "0.5",
                 "--out", mc.string()}) == kExitPass);
  const auto rows = read_json(mc / "report.json").at("results");
  CHECK(rows.at(0).at("energy_lower_bound_violations") == 0);
  CHECK(rows.at(0).at("second_derivative_bound_violations") == 0);
  CHECK(fs::exists(mc / "samples.csv"));

  const auto ds = scratch("ds");
  const int code = run_cli({"distance-sweep", "--h", "0.4", "--delta", "0,0.1,0.2,0.3", "--paths", "4000", "--n",
                            "32", "--out", ds.string()});
  CHECK((code == kExitPass || code == kExitCheckFailed));
  const auto report = read_json(ds / "report.json");
  const auto& zero = report.at("reports").at(0);
  CHECK(zero.at("H2") == 0.4);
  CHECK(zero.at("ks_stat") == 0.0);
  CHECK(zero.at("l2_F").at("estimate") == 0.0);
  CHECK(zero.at("l2_DF").at("estimate") == 0.0);
  CHECK(zero.at("sup_l2_path").at("estimate") == 0.0);
  // L2 scaling is visible even at this size.
  CHECK(report.at("slopes").at("sup_l2_path").at("pass") == true);
  CHECK(report.at("slopes").at("l2_F").at("pass") == true);
  CHECK(report.at("slopes").at("l2_F").at("constant").get<double>() > 0.0);
  CHECK(report.at("diagnostics").at(0).at("ratio_to_delta_power").at("ks").is_null());
  const auto& d2 = report.at("diagnostics").at(2);
  CHECK(d2.at("ratio_to_delta_power").at("l2_F").get<double>() ==
        doctest::Approx(report.at("reports").at(2).at("l2_F").at("estimate").get<double>() / 0.04));
}

TEST_CASE("installed executable reports exit status") {
  const auto out = scratch("exe");
  const std::string base = std::string(FEXPO_EXE) + " kernel-check --h 0.6 --n 8 --out " + out.string();
  CHECK(std::system((base + " > /dev/null").c_str()) == 0);
  CHECK(std::system((base + " --ch-scale 1.01 > /dev/null").c_str()) != 0);
}
