#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "rotor/config.hpp"
#include "rotor/errors.hpp"
#include "rotor/io.hpp"

using namespace rotor;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run rotorctl(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rotorctl_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json result_of(const fs::path& p) { return json::parse(slurp(p)).at("result"); }

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::size_t data_rows(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // column header
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("defaults round trip through JSON") {
    const RunConfig a;
    const RunConfig b = config_from_json(config_to_json(a));
    CHECK(config_to_json(b) == config_to_json(a));
  }
  SUBCASE("unknown keys name their path") {
    try {
      config_from_json(json::parse(R"({"laser": {"powr": 1.0}})"));
      FAIL("accepted a typo");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "laser.powr");
    }
  }
  SUBCASE("wrong types name their path") {
    try {
      config_from_json(json::parse(R"({"map": {"damping": {"count": 2.5}}})"));
      FAIL("accepted a fractional count");
    } catch (const ConfigError& e) {
      CHECK(e.field() == "map.damping.count");
    }
  }
  SUBCASE("pressure in mbar or Pa, not both") {
    CHECK(config_from_json(json::parse(R"({"gas": {"pressure_mbar": 3.5}})")).gas.pressure == doctest::Approx(350.0));
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"gas": {"pressure_mbar": 3.5, "pressure_pa": 350}})")),
                    ConfigError);
    CHECK(config_from_json(json::parse(R"({"sense": {"pressures_mbar": [3, 4, 5]}})")).sense.pressures ==
          std::vector<double>{300.0, 400.0, 500.0});
  }
  SUBCASE("module invariants are checked at load") {
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"drive": {"duty": 1.5}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"integrator": {"steps_per_half_period": 4}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"path": {"waypoints": []}})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse(R"({"seed": -1})")), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::parse("[1, 2]")), ConfigError);
  }
  SUBCASE("the seed reaches the noise spec") {
    CHECK(config_from_json(json::parse(R"({"seed": 42})")).noise.seed == 42);
  }
}

TEST_CASE("binary formats round trip") {
  const auto dir = scratch("io");
  Trajectory t;
  t.states = {{0.1, 2.0, 0.0}, {0.3, -1e300, 1e-9}};
  t.periods = 1;
  t.samples_per_period = 1;
  t.coeffs = {1.0, 2.0, 3.0, 4.0};
  const json cfg = {{"seed", 7}};
  write_trajectory((dir / "t.bin").string(), t, cfg);
  const Trajectory back = read_trajectory((dir / "t.bin").string());
  REQUIRE(back.states.size() == 2);
  CHECK(back.states[1].omega == -1e300);
  CHECK(back.coeffs.potential == 3.0);

  SignalTrace s;
  s.samples = {1.0, 2.0, 3.5};
  s.sample_rate = 10.0;
  s.carrier = 2.0;
  write_trace((dir / "s.bin").string(), s, cfg);
  json echoed;
  const SignalTrace sb = read_trace((dir / "s.bin").string(), &echoed);
  CHECK(sb.samples == s.samples);
  CHECK(echoed == cfg);
  CHECK_THROWS_AS(read_trace((dir / "t.bin").string()), std::runtime_error);

  write(dir / "short.bin", "ROTRSIG1");
  CHECK_THROWS_AS(read_trace((dir / "short.bin").string()), std::runtime_error);
}

TEST_CASE("rotorctl simulate") {
  const auto dir = scratch("simulate");
  SUBCASE("default config locks 1:2") {
    auto r = rotorctl({"--out-dir", dir.string(), "simulate", "--periods", "5000"});
    REQUIRE(r.code == cli::kOk);
    const json res = result_of(dir / "report.json");
    CHECK(res["report"]["label"] == "lock_1_2");
    CHECK(res["report"]["f_r"].get<double>() == doctest::Approx(1.11e6 / 2.0).epsilon(1e-9));
    CHECK(res["recorded_periods"] == 5000);
    CHECK(fs::exists(dir / "trajectory.bin"));
    CHECK(fs::exists(dir / "trace.bin"));
    CHECK(data_rows(dir / "stroboscopic.csv") == 5001);
  }
  SUBCASE("no laser power: the rod stops") {
    auto r = rotorctl({"--out-dir", dir.string(), "--set", "laser.power=0", "simulate", "--periods", "100"});
    REQUIRE(r.code == cli::kOk);
    CHECK(result_of(dir / "report.json")["report"]["f_r"] == 0.0);
  }
  SUBCASE("malformed drive frequency") {
    write(dir / "bad.json", R"({"drive": {"frequency": null}})");
    auto r = rotorctl({"--config", (dir / "bad.json").string(), "simulate"});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("drive.frequency") != std::string::npos);
  }
  SUBCASE("usage errors") {
    CHECK(rotorctl({}).code == cli::kConfigError);
    CHECK(rotorctl({"simulate", "--periods", "x"}).code == cli::kConfigError);
    CHECK(rotorctl({"--set", "novalue", "simulate"}).code == cli::kConfigError);
    CHECK(rotorctl({"--help"}).code == cli::kOk);
  }
}

TEST_CASE("rotorctl reruns from echoed configs are bit-identical") {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  const auto c = scratch("rerun_c");
  REQUIRE(rotorctl({"--out-dir", a.string(), "--seed", "5", "--set", "noise.additive_rms=0.01", "simulate",
                    "--periods", "300"})
              .code == cli::kOk);
  // from the CSV header, from a binary header, with a different worker count
  REQUIRE(rotorctl({"--config", (a / "stroboscopic.csv").string(), "--out-dir", b.string(), "simulate"}).code ==
          cli::kOk);
  REQUIRE(rotorctl({"--config", (a / "trace.bin").string(), "--out-dir", c.string(), "--jobs", "3", "simulate"})
              .code == cli::kOk);
  for (const char* f : {"report.json", "stroboscopic.csv", "trajectory.bin", "trace.bin"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
    CHECK_MESSAGE(slurp(a / f) == slurp(c / f), f);
  }

  REQUIRE(rotorctl({"--out-dir", a.string(), "--jobs", "2", "map", "--grid", "2"}).code == cli::kOk);
  REQUIRE(rotorctl({"--config", (a / "map.json").string(), "--out-dir", b.string(), "--jobs", "1", "map"}).code ==
          cli::kOk);
  for (const char* f : {"map.json", "map_cells.csv", "map_members.csv", "map_coincidence.csv"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
}

TEST_CASE("rotorctl map") {
  const auto dir = scratch("map");
  auto r = rotorctl({"--out-dir", dir.string(), "map", "--grid", "3"});
  REQUIRE(r.code == cli::kOk);
  CHECK(data_rows(dir / "map_cells.csv") == 9);
  CHECK(data_rows(dir / "map_members.csv") == 72);
  CHECK(result_of(dir / "map.json")["lock_1_2_outside_lockable"] == 0);
  CHECK(rotorctl({"--out-dir", dir.string(), "map", "--grid", "0"}).code == cli::kConfigError);
}

TEST_CASE("rotorctl path") {
  const auto dir = scratch("path");
  SUBCASE("single waypoint gives a constant sequence") {
    write(dir / "one.json", R"({"path": {"waypoints": [[0.015, 0.0384]], "dwell_periods": 1000, "points_per_segment": 3}})");
    auto r = rotorctl({"--out-dir", dir.string(), "path", "--path", (dir / "one.json").string()});
    REQUIRE(r.code == cli::kOk);
    const json seq = result_of(dir / "path.json")["sequence"];
    REQUIRE(seq.size() == 1);
    CHECK(seq[0]["label"] == "lock_1_2");
  }
  SUBCASE("non-monotone dwell values are accepted") {
    write(dir / "dw.json",
          R"({"waypoints": [[0.015, 0.0384], [0.016, 0.0384], [0.015, 0.0384]], "dwell_periods": [1500, 300],
              "points_per_segment": 2, "ramp_periods": 50})");
    auto r = rotorctl({"--out-dir", dir.string(), "path", "--path", (dir / "dw.json").string()});
    REQUIRE(r.code == cli::kOk);
    CHECK(data_rows(dir / "path.csv") == 5);
  }
  SUBCASE("a waypoint with the wrong shape") {
    write(dir / "bad.json", R"({"waypoints": [[0.01, 0.02, 0.03]]})");
    auto r = rotorctl({"--out-dir", dir.string(), "path", "--path", (dir / "bad.json").string()});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("path.waypoints[0]") != std::string::npos);
  }
}

TEST_CASE("rotorctl analyze") {
  const auto dir = scratch("analyze");
  SUBCASE("locked trace: peak at the carrier, resolution limited") {
    REQUIRE(rotorctl({"--out-dir", dir.string(), "--set", "noise.power_noise_rms=0", "simulate", "--periods", "4000"})
                .code == cli::kOk);
    auto r = rotorctl({"--out-dir", dir.string(), "analyze", "--trace", (dir / "trace.bin").string()});
    REQUIRE(r.code == cli::kOk);
    const json fit = result_of(dir / "analysis.json")["fit"];
    REQUIRE(fit["status"] == "ok");
    CHECK(fit["center"].get<double>() == doctest::Approx(1.11e6).epsilon(1e-6));
    CHECK(fit["upper_bound"] == true);
    CHECK(data_rows(dir / "phase_noise.csv") > 10);
    // the header line of every CSV carries the config
    CHECK(slurp(dir / "spectrum.csv").rfind(kConfigHeaderTag, 0) == 0);
  }
  SUBCASE("pure noise: no fit, reported cleanly") {
    REQUIRE(rotorctl({"--out-dir", dir.string(), "--set", "noise.amplitude=0", "--set", "noise.additive_rms=1",
                      "simulate", "--periods", "2000"})
                .code == cli::kOk);
    auto r = rotorctl({"--out-dir", dir.string(), "analyze", "--trace", (dir / "trace.bin").string()});
    CHECK(r.code == cli::kOk);
    CHECK(result_of(dir / "analysis.json")["fit"]["status"] == "failed");
    CHECK(r.err.find("no Lorentzian fit") != std::string::npos);
  }
  SUBCASE("trace shorter than one segment") {
    REQUIRE(rotorctl({"--out-dir", dir.string(), "simulate", "--periods", "10"}).code == cli::kOk);
    auto r = rotorctl({"--out-dir", dir.string(), "--set", "analyze.segments=20", "analyze", "--trace",
                       (dir / "trace.bin").string()});
    CHECK(r.code == cli::kConfigError);
    CHECK(r.err.find("shorter than one segment") != std::string::npos);
  }
  SUBCASE("unreadable trace") {
    write(dir / "junk.bin", "not a trace");
    auto r = rotorctl({"analyze", "--trace", (dir / "junk.bin").string()});
    CHECK(r.code == cli::kConfigError);
  }
}

TEST_CASE("rotorctl sense") {
  const auto dir = scratch("sense");
  SUBCASE("torque mode at φ = π/2") {
    const RunConfig defaults;
    const double p = pressure_from_phase(constants::kPi / 2.0, defaults.operating_point());
    auto r = rotorctl({"--out-dir", dir.string(), "--set", "gas.pressure_pa=" + format_double(p), "--set",
                       "sense.delta_phase=0.001", "sense", "--mode", "torque"});
    REQUIRE(r.code == cli::kOk);
    const json res = result_of(dir / "sense_torque.json");
    const double v = res["coefficients"]["potential"].get<double>();
    CHECK(res["phase"].get<double>() == doctest::Approx(constants::kPi / 2.0).epsilon(1e-12));
    CHECK(res["delta_torque"].get<double>() == doctest::Approx(2.0 * v / constants::kPi * 1e-3).epsilon(1e-9));
  }
  SUBCASE("operating point outside the lockable region") {
    auto r = rotorctl({"--out-dir", dir.string(), "--set", "gas.pressure_pa=3000", "sense", "--mode", "torque"});
    CHECK(r.code == cli::kRuntimeError);
    CHECK(r.err.find("not lockable") != std::string::npos);
    r = rotorctl({"--out-dir", dir.string(), "--set", "sense.pressures_pa=[400, 3000]", "--set",
                  "sense.chain_resolution=false", "sense"});
    CHECK(r.code == cli::kRuntimeError);
    CHECK(r.err.find("does not lock") != std::string::npos);
  }
  SUBCASE("5-point pressure set through a short chain") {
    auto r = rotorctl({"--out-dir", dir.string(), "--set", "sense.chain.record_seconds=0.15", "--set",
                       "sense.chain.time_constant=0.02", "--set", "sense.chain.samples_per_period=8", "--set",
                       "sense.chain_resolution=false", "sense"});
    REQUIRE(r.code == cli::kOk);
    const json res = result_of(dir / "sense_pressure.json");
    CHECK(res["max_relative_error"].get<double>() < 0.01);
    CHECK(res["calibration"]["nonlinear"] == false);
    CHECK(data_rows(dir / "sense_pressure.csv") == 5);
  }
}

TEST_CASE("presets load") {
  const fs::path presets = fs::path(ROTOR_SOURCE_DIR) / "presets";
  const RunConfig nominal = load_config((presets / "nominal.json").string());
  CHECK(config_to_json(nominal) == config_to_json(RunConfig{}));
  auto r = rotorctl({"--config", (presets / "nominal.json").string(), "--print-config", "path", "--path",
                     (presets / "hysteresis_path.json").string()});
  REQUIRE(r.code == cli::kOk);
  CHECK(json::parse(r.out)["path"]["waypoints"].size() == 4);
}
