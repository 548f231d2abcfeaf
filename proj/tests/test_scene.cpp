#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cloak/scene.hpp"

using namespace cloak;

namespace {

std::map<std::string, std::string> read_summary(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(' ');
      auto e = s.find_last_not_of(' ');
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[strip(key)] = strip(val);
  }
  return kv;
}

}  // namespace

TEST_CASE("presets validate and round-trip through the writer") {
  auto names = preset_names();
  CHECK(names.size() == 10);
  for (const auto& name : names) {
    SceneSpec p = preset(name);
    CHECK(p.name == name);
    SceneSpec r = parse_scene(print_scene(p));
    CHECK(r == p);
  }
  CHECK_THROWS_AS(preset("fig9-unknown"), ValidationError);
}

TEST_CASE("minimal scene text parses with defaults") {
  SceneSpec s = parse_scene(
      "name = demo\n"
      "[transform]\n"
      "kind = kohn\n"
      "r0_m = 0.15\n"
      "r1_m = 0.2\n"
      "r2_m = 0.4\n"
      "layers = 20\n"
      "gauge = reduced\n"
      "[source]\n"
      "wavelength_m = 0.25\n"
      "[solver]\n"
      "kind = mie\n");
  CHECK(s.name == "demo");
  CHECK(s.transform == TransformKind::Kohn);
  CHECK(s.r0 == doctest::Approx(0.15));
  CHECK(s.layers == 20);
  CHECK(s.gauge == Gauge::Reduced);
  CHECK(s.solver == SolverKind::Mie);
  CHECK(s.source.wavelength == doctest::Approx(0.25));
  // defaults survive
  CHECK(s.dim == 3);
  CHECK(s.tol == doctest::Approx(1e-6));
  CHECK(s.write_stack);
}

TEST_CASE("comments and blank lines are ignored") {
  SceneSpec s = parse_scene(
      "# full-line comment\n"
      "\n"
      "[transform]\n"
      "kind = none   # trailing comment\n"
      "[obstacle]\n"
      "kind = rigid-sphere\n"
      "radius_m = 0.5\n"
      "[source]\n"
      "wavelength_m = 0.3\n"
      "[solver]\n"
      "kind = mie\n");
  CHECK(s.transform == TransformKind::None);
  CHECK(s.obstacle_radius == doctest::Approx(0.5));
}

TEST_CASE("parser reports line numbers") {
  auto expect_message = [](const std::string& text, const std::string& needle) {
    try {
      parse_scene(text);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_message("[transform]\nkind = none\nbogus_key = 1\n[source]\nwavelength_m = 0.3\n[solver]\nkind = mie\n",
                 "line 3");
  expect_message("[transform]\nkind = none\nbogus_key = 1\n", "unknown key 'bogus_key'");
  expect_message("[transform]\nkind = flying-carpet\n", "unknown transform kind");
  expect_message("[geometry]\n", "unknown section");
  expect_message("[transform\n", "unterminated section header");
  expect_message("[transform]\nkind = none\nr0_m =\n", "empty value");
  expect_message("[transform]\nkind = none\nr0_m = abc\n", "expected a number");
  expect_message("[transform]\nkind = none\nlayers = 2.5\n", "expected an integer");
  expect_message("[source]\ndirection = 1 0\n", "expected three numbers");
  expect_message("[output]\nvtk = yes\n", "expected true or false");
  expect_message("just some text\n", "expected key = value");
}

TEST_CASE("mandatory keys are enforced") {
  auto expect_message = [](const std::string& text, const std::string& needle) {
    try {
      parse_scene(text);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_message("[source]\nwavelength_m = 0.3\n[solver]\nkind = mie\n", "[transform] requires 'kind'");
  expect_message("[transform]\nkind = none\n[solver]\nkind = fdfd\n", "requires 'wavelength_m'");
  expect_message("[transform]\nkind = none\n[source]\nwavelength_m = 0.3\n", "[solver] requires 'kind'");
}

TEST_CASE("validation catches inconsistent scenes") {
  SceneSpec s = preset("fig4-mimetic-015");

  SceneSpec bad = s;
  bad.transform = TransformKind::Carpet;
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("radially symmetric"), ValidationError);

  bad = s;
  bad.obstacle_radius = 0.3;  // larger than R1 = 0.2
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("obstacle must fit"), ValidationError);

  bad = s;
  bad.layers = 21;
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("layers must be even"), ValidationError);

  bad = s;
  bad.r0 = 0.0;
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("kohn cloak needs"), ValidationError);

  bad = preset("fig1-singular");
  bad.r0 = 0.1;
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("r0_m = 0"), ValidationError);

  bad = preset("fig7-icosahedron");
  bad.edge1 = 0.5;  // inner surface outside the outer one
  CHECK_THROWS_AS(validate_scene(bad), ValidationError);
  bad = preset("fig7-icosahedron");
  bad.dim = 2;
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("3D grid"), ValidationError);

  bad = s;
  bad.cells_per_wavelength = 2.0;
  CHECK_THROWS_AS(validate_scene(bad), ValidationError);

  bad = s;
  bad.obstacle = ObstacleKind::None;
  bad.layers = 0;
  CHECK_THROWS_WITH_AS(validate_scene(bad), doctest::Contains("layers >= 2"), ValidationError);
}

TEST_CASE("scene files parse like in-memory text") {
  std::string path = "test_scene_file.ini";
  {
    std::ofstream out(path);
    out << print_scene(preset("fig2-kohn-020"));
  }
  SceneSpec s = parse_scene_file(path);
  CHECK(s == preset("fig2-kohn-020"));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(parse_scene_file("no_such_file.ini"), ValidationError);
}

TEST_CASE("mie pipeline run: reports, stack and coefficient exports") {
  std::filesystem::path dir = "test_run_fig4";
  run(preset("fig4-mimetic-015"), dir.string());
  auto kv = read_summary(dir / "summary.txt");
  CHECK(kv.at("solver") == "mie");
  // 20-sublayer reduced shell around the rigid core, frozen reference value.
  CHECK(std::stod(kv.at("sigma_sc_m2")) == doctest::Approx(0.0927685126).epsilon(1e-6));
  CHECK(std::stod(kv.at("mimetism_ratio")) == doctest::Approx(1.1306).epsilon(1e-3));
  CHECK(kv.at("ill_conditioned") == "false");
  CHECK(std::filesystem::exists(dir / "stack.csv"));
  CHECK(std::filesystem::exists(dir / "coeffs.csv"));
  SceneSpec echoed = parse_scene_file((dir / "scene.ini").string());
  CHECK(echoed == preset("fig4-mimetic-015"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("fluid-core preset reports the equivalent core") {
  std::filesystem::path dir = "test_run_fig6";
  run(preset("fig6-kohn-core"), dir.string());
  auto kv = read_summary(dir / "summary.txt");
  CHECK(std::stod(kv.at("core_rho")) == doctest::Approx(0.75).epsilon(1e-8));
  CHECK(std::stod(kv.at("core_kappa")) == doctest::Approx(4.0 / 3.0).epsilon(1e-8));
  std::filesystem::remove_all(dir);
}

TEST_CASE("run refuses invalid scenes") {
  SceneSpec bad = preset("fig4-mimetic-015");
  bad.layers = 21;
  CHECK_THROWS_AS(run(bad, "test_run_invalid"), ValidationError);
  CHECK_FALSE(std::filesystem::exists("test_run_invalid/summary.txt"));
  std::filesystem::remove_all("test_run_invalid");
}
