#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curvetomo/cli_runner.hpp"
#include "curvetomo/inversion.hpp"

using namespace curvetomo;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("curvetomo_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small(const std::string& pipeline) {
  ExperimentConfig c;
  c.pipeline = pipeline;
  c.grid = 24;
  c.surface = 24;
  c.direction = 24;
  c.h = 2e-2;
  return c;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config round trip") {
  const ExperimentConfig d;
  CHECK(parse_config(emit_config(d)) == d);

  ExperimentConfig c = d;
  c.pipeline = "perturb";
  c.seed = 99;
  c.output = "runs/x";
  c.deltas = {0.0, 1.0 / 3.0};
  c.channels = {"w"};
  c.tol_solver = 1e-9;
  c.cache = false;
  c.overrides["sigma"] = 0.1 + 0.2;
  CHECK(parse_config(emit_config(c)) == c);
  CHECK(emit_config(parse_config(emit_config(c))) == emit_config(c));
}

TEST_CASE("every scenario round-trips through the config") {
  for (const auto& name : scenario_names()) {
    CAPTURE(name);
    ExperimentConfig c;
    c.scenario = name;
    c.overrides = scenario_defaults(name);
    for (auto& [k, v] : c.overrides) v *= 1.0 + 1e-3 / 3.0;
    const ExperimentConfig back = parse_config(emit_config(c));
    REQUIRE(back == c);

    // Same behaviour: identical transforms of the first phantom.
    const Scenario a = make_scenario(c.scenario, c.overrides);
    const Scenario b = make_scenario(back.scenario, back.overrides);
    FamilyResolution r;
    r.surface = {6};
    r.direction = {6};
    r.h = 1e-2;
    const CurveFamily fa = build_family(a.gen, a.manifold, r);
    const CurveFamily fb = build_family(b.gen, b.manifold, r);
    const Grid g = a.grid(a.gen.dim == 2 ? 16 : 8);
    const Sinogram sa = forward(fa, a.weight, a.phantom(a.phantoms.front(), g));
    const Sinogram sb = forward(fb, b.weight, b.phantom(b.phantoms.front(), g));
    CHECK(sa.values == sb.values);
  }
}

TEST_CASE("strict parsing") {
  CHECK(error_of("[run]\npipeline = forward\n[tolerances]\nsovler = 1\n").find("line 4") !=
        std::string::npos);
  CHECK(error_of("[tolerance]\nsolver = 1\n").find("unknown section") != std::string::npos);
  CHECK(error_of("pipeline = forward\n").find("outside") != std::string::npos);
  CHECK(error_of("[run]\nseed = 1\nseed = 2\n").find("duplicate") != std::string::npos);
  CHECK(error_of("[resolution]\ngrid = 6.5\n").find("integer") != std::string::npos);
  CHECK(error_of("[resolution]\nh = fast\n").find("number") != std::string::npos);
  CHECK(error_of("[resolution]\ncache = yes\n").find("true or false") != std::string::npos);
  CHECK(error_of("[pipeline]\ndeltas = 0.1, 0.2\n").find("list") != std::string::npos);
  CHECK(error_of("[scenario]\nkappa = 1\n").find("kappa") != std::string::npos);
  CHECK(error_of("[run]\nscenario = magnetic\n[scenario]\ncap_radius = 0.1\n") != "");
  CHECK(error_of("[run]\nscenario = antipodal_sphere\n[scenario]\ncap_radius = 0.1\n") == "");
  CHECK(error_of("# comment only\n\n[run] \n  seed = 3   # trailing\n") == "");

  ExperimentConfig c;
  apply_setting(c, "resolution.grid=128");
  apply_setting(c, "pipeline.channels = [w, G]");
  CHECK(c.grid == 128);
  CHECK(c.channels == std::vector<std::string>{"w", "G"});
  CHECK_THROWS_AS(apply_setting(c, "grid=3"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "scenario.nope=3"), ConfigError);
}

TEST_CASE("validation diagnostics") {
  CHECK(validate(ExperimentConfig{}).empty());

  ExperimentConfig c;
  c.tol_solver = -1.0;
  auto d = validate(c);
  REQUIRE(d.size() == 1);
  CHECK(d[0] == "tolerance must be positive: tolerances.solver");

  c = ExperimentConfig{};
  c.pipeline = "probe-symbol";
  c.frequencies = {16.0, 400.0};
  d = validate(c);
  REQUIRE(d.size() == 1);
  CHECK(d[0].rfind("aliasing", 0) == 0);

  c = ExperimentConfig{};
  c.overrides["beta_cut"] = kPi / 2.0;
  c.overrides["beta_flat"] = 1.0;
  d = validate(c);
  REQUIRE(d.size() == 1);
  CHECK(d[0].rfind("transversality margin", 0) == 0);

  c = ExperimentConfig{};
  c.pipeline = "transmogrify";
  c.scenario = "torus";
  c.h = 0.0;
  c.phantom = "smooth";
  CHECK(validate(c).size() >= 3);

  c = ExperimentConfig{};
  c.scenario = "lines_box3d";
  d = validate(c);
  REQUIRE(d.size() == 1);
  CHECK(d[0].find("x0 and xi") != std::string::npos);
}

TEST_CASE("checksums and output directories") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  ExperimentConfig c;
  c.pipeline = "stability";
  CHECK(resolve_output_dir(c, {"explicit", 0}) == "explicit");
  ::setenv("CURVETOMO_OUT", "/tmp/root", 1);
  CHECK(resolve_output_dir(c, {}) == "/tmp/root/stability");
  c.output = "from_config";
  CHECK(resolve_output_dir(c, {}) == "from_config");
  ::unsetenv("CURVETOMO_OUT");
  c.output.clear();
  CHECK(resolve_output_dir(c, {}) == "curvetomo_out/stability");
}

TEST_CASE("forward pipeline is deterministic") {
  const fs::path d1 = scratch_dir("fwd1"), d2 = scratch_dir("fwd2");
  const ExperimentConfig c = small("forward");
  const RunResult r1 = run(c, {d1.string(), 0});
  const RunResult r2 = run(c, {d2.string(), 0});
  REQUIRE(r1.status == 0);
  REQUIRE(r2.status == 0);
  CHECK(r1.files.back() == "manifest.json");
  CHECK(slurp(d1 / "manifest.json") == slurp(d2 / "manifest.json"));
  CHECK(fs::exists(d1 / "run_info.json"));

  const auto manifest = nlohmann::json::parse(slurp(d1 / "manifest.json"));
  CHECK(manifest["status"] == 0);
  CHECK(parse_config(manifest["config"].get<std::string>()) == c);
  for (const auto& o : manifest["outputs"]) {
    const std::string body = slurp(d1 / o["file"].get<std::string>());
    CHECK(o["sha256"] == sha256_hex(body));
    CHECK(o["bytes"] == body.size());
  }

  const auto summary = nlohmann::json::parse(slurp(d1 / "summary.json"));
  std::istringstream csv(slurp(d1 / "sinogram.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == summary["active_curves"].get<std::size_t>());
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("perturb with zero delta gives zero distances") {
  const fs::path d = scratch_dir("perturb");
  ExperimentConfig c = small("perturb");
  c.deltas = {0.0};
  c.probes = 1;
  const RunResult r = run(c, {d.string(), 0});
  REQUIRE(r.status == 0);
  std::istringstream csv(slurp(d / "perturbation.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    CHECK(line.substr(line.rfind(',') + 1) == "0");
  }
  CHECK(rows == 5);
  fs::remove_all(d);
}

TEST_CASE("symbol pipeline on the calibration preset") {
  const fs::path d = scratch_dir("symbol");
  ExperimentConfig c = small("symbol");
  c.scenario = "lines_disk_calibration";
  c.surface = c.direction = 32;
  c.points = 5;
  c.directions = 8;
  const RunResult r = run(c, {d.string(), 0});
  CHECK(r.status == 0);
  const auto j = nlohmann::json::parse(slurp(d / "summary.json"));
  CHECK(j["margin"].get<double>() > 0.0);
  CHECK(j["calibration_max_error"].get<double>() <= 1e-6);
  fs::remove_all(d);
}

TEST_CASE("failures still write the manifest") {
  const fs::path d = scratch_dir("fail");
  ExperimentConfig c = small("reconstruct");
  c.max_iter = 2;
  const RunResult r = run(c, {d.string(), 0});
  CHECK(r.status == 2);
  CHECK(r.message.find("no convergence") != std::string::npos);
  REQUIRE(fs::exists(d / "manifest.json"));
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  CHECK(m["status"] == 2);
  CHECK(fs::exists(d / "residuals.csv"));

  c = small("reconstruct");
  c.phantom = "odd_pair";
  const RunResult bad = run(c, {scratch_dir("bad").string(), 0});
  CHECK(bad.status == 1);
  CHECK_FALSE(fs::exists(scratch_dir("bad")));
  fs::remove_all(d);
}
