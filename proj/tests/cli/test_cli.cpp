#include "commands.hpp"
#include "config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace retina;
using namespace retina::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c = parse_config_text(R"({
    "grid": {"radius": 5e-4, "n_r": 8, "n_z": 36},
    "estimation": {"noise_rel": 0.01, "cohort_size": 4, "alpha0": {"rpe": 0.8, "ch": 0.1}},
    "mor": {"orders_d": [5, 6], "orders_k": [3], "horizon": 150, "scan_grid_2d": 2},
    "mpc": {"steps": 30, "horizons": [5]}
  })");
  c.out_dir = out.string();
  return c;
}

int invoke(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_command(static_cast<int>(argv.size()), argv.data());
}

const fs::path tmp = fs::temp_directory_path() / "retina_cli_tests";

}  // namespace

TEST_CASE("empty configuration yields documented defaults") {
  const ExperimentConfig c = parse_config_text("");
  CHECK(c == ExperimentConfig{});
  CHECK(parse_config_text("  \n{}\n") == ExperimentConfig{});
  CHECK(c.grid.dt == 1e-3);
  CHECK(c.layers.d_rpe == 6e-6);
  CHECK(c.domain.rpe_lo == 0.3821);
  CHECK(c.domain.ch_hi == 0.1549);
  CHECK(c.mpc.rho_u == 5e4);
  CHECK(c.input.sequence().size() == 720);
}

TEST_CASE("unknown keys and type mismatches name the field") {
  CHECK(error_of(R"({"mor": {"dd": 3}})") == "mor.dd: unknown key");
  CHECK(error_of(R"({"bogus": 1})") == "bogus: unknown key");
  CHECK(error_of(R"({"grid": {"n_r": 2.5}})") == "grid.n_r: expected an integer");
  CHECK(error_of(R"({"estimation": {"alpha0": {"rpe": 1, "x": 2}}})") == "estimation.alpha0.x: unknown key");
  CHECK(error_of(R"({"mpc": {"plant": "other"}})").rfind("mpc.plant", 0) == 0);
  CHECK(error_of(R"({"estimation": {"noise_std": 0.1, "noise_rel": 0.01}})").rfind("estimation.noise_rel", 0) == 0);
  CHECK(error_of("{\n \"grid\": {\n }").rfind("syntax", 0) == 0);
}

TEST_CASE("grids too coarse for the layer stack are rejected") {
  CHECK(error_of(R"({"grid": {"n_z": 5}})").rfind("grid", 0) == 0);
}

TEST_CASE("resolved configuration parses back to an equal configuration") {
  ExperimentConfig c = parse_config_text(R"({
    "grid": {"n_r": 31, "n_z": 51, "dt": 5e-4},
    "input": {"kind": "piecewise", "levels": [0.01, 0.03], "durations": [100, 200]},
    "alpha": {"rpe": 0.9, "ch": 0.12},
    "estimation": {"mode": "rpe-only", "seed": 7, "horizons": [100, 200]},
    "mor": {"method": "taylor", "two_param": false},
    "mpc": {"u_ref": 0.02, "plant_alpha": {"rpe": 0.7, "ch": 0.1}, "plant": "full"},
    "out_dir": "somewhere"
  })");
  CHECK(c.input.sequence().size() == 300);
  CHECK(parse_config_text(dump_config(c)) == c);
  CHECK(parse_config_text(dump_config(ExperimentConfig{})) == ExperimentConfig{});
}

TEST_CASE("rpe-only estimate reports one parameter and one interval") {
  ExperimentConfig c = small_config(tmp / "est");
  RunOptions o;
  o.mode = "rpe-only";
  run_subcommand("estimate", c, o);
  const auto j = nlohmann::json::parse(slurp(tmp / "est" / "estimate.json"));
  CHECK(j["mode"] == "rpe-only");
  CHECK(j["ci_low"].size() == 1);
  CHECK(j["ci_high"].size() == 1);
  CHECK(j["cov"].size() == 1);
  CHECK(j["alpha"]["ch"].get<double>() == c.estimation.alpha_ch_fixed);
  CHECK(parse_config(((tmp / "est") / "resolved_config.json").string()) == c);
}

TEST_CASE("commands are deterministic for fixed seeds") {
  for (const std::string cmd : {"synth-data", "estimate", "cohort", "compare-mor"}) {
    const ExperimentConfig a = small_config(tmp / "det_a");
    const ExperimentConfig b = small_config(tmp / "det_b");
    run_subcommand(cmd, a, {});
    RunOptions serial;
    serial.threads = 1;
    run_subcommand(cmd, b, serial);
    for (const auto& e : fs::directory_iterator(tmp / "det_a")) {
      const auto name = e.path().filename();
      if (name == "resolved_config.json") continue;
      CAPTURE(cmd);
      CAPTURE(name.string());
      CHECK(slurp(e.path()) == slurp(tmp / "det_b" / name));
    }
  }
}

TEST_CASE("compare-mor writes the error tables and singular values") {
  run_subcommand("compare-mor", small_config(tmp / "cmp"), {});
  for (const char* f : {"err_inf.csv", "err_l2.csv", "singular_values.csv", "resolved_config.json"})
    CHECK(fs::exists(tmp / "cmp" / f));
}

TEST_CASE("exit codes") {
  fs::create_directories(tmp);
  const std::string bad = (tmp / "bad.json").string();
  std::ofstream(bad) << R"({"grid": {"n_z": 5}})";
  CHECK(invoke({"retina-pmor", "model-info", "--config", bad}) == 1);
  CHECK(invoke({"retina-pmor", "model-info", "--config", (tmp / "missing.json").string()}) == 1);
  CHECK(invoke({"retina-pmor"}) == 1);
  CHECK(invoke({"retina-pmor", "estimate", "--mode", "bogus", "--out-dir", (tmp / "x").string()}) == 1);
  const std::string num = (tmp / "num.json").string();
  std::ofstream(num) << R"({"grid": {"radius": 5e-4, "n_r": 8, "n_z": 36}, "mor": {"d": 300}})";
  CHECK(invoke({"retina-pmor", "reduce", "--config", num, "--out-dir", (tmp / "num").string()}) == 2);
  const std::string ok = (tmp / "ok.json").string();
  std::ofstream(ok) << R"({"grid": {"radius": 5e-4, "n_r": 8, "n_z": 36}})";
  CHECK(invoke({"retina-pmor", "model-info", "--config", ok, "--out-dir", (tmp / "ok").string(), "--threads",
                "2"}) == 0);
  CHECK(fs::exists(tmp / "ok" / "model_info.json"));
}
