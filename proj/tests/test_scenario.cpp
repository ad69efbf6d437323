#include "doctest.h"
#include "helpers.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "formation/scenario.hpp"

using namespace formation;

namespace {

std::string where_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ParseError& e) {
    return e.where();
  }
  return "<no error>";
}

ScenarioFile busy_scenario() {
  ScenarioFile s;
  s.formation.name.clear();
  s.formation.coords = {{0.1, 0.2, 0.3}, {1.0 / 3.0, -2.0, 0.0}, {0.0, 1e-17, 5.5}, {-7.25, 0.0, 1.0}};
  s.complete_graph = false;
  s.edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 2}};
  s.gains_source = GainsSource::inline_gains;
  const SensingGraph g(4, s.edges);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (const auto& e : g.edges()) {
    s.inline_gains.set(e.i, e.j, Gain{nd(rng), nd(rng), nd(rng)});
    s.inline_gains.set(e.j, e.i, Gain{nd(rng), nd(rng), nd(rng)});
  }
  s.initial.mode = InitialMode::line;
  s.initial.line_start = Vec3(-1.0, 0.1, 0.7);
  s.initial.line_step = Vec3(0.5, 0.0, 0.0);
  s.initial.jitter = 0.01;
  s.initial.random_yaw = false;
  s.initial.yaw = {0.1, -0.2, std::numbers::pi / 3, 0.0};
  s.sim.perturbation.scale_min = 0.1;
  s.sim.perturbation.scale_max = 10.0;
  s.sim.perturbation.rot_max = 80.0 * std::numbers::pi / 180.0;
  s.sim.perturbation.noise_sigma = 0.003;
  s.sim.perturbation.sat = 2.5;
  s.sim.avoidance.enabled = true;
  s.sim.avoidance.radius = 0.12;
  s.sim.avoidance.half_height = 0.07;
  s.sim.scale_control.enabled = true;
  s.sim.scale_control.k = 1.5;
  s.sim.scale_control.shape = ScaleShape::arctan;
  s.sim.dt = 0.005;
  s.sim.t_max = 42.0;
  s.sim.tol = 2e-4;
  s.sim.rel_tol = 1e-3;
  s.sim.gridlock_window = 250;
  s.sim.gridlock_speed = 1e-7;
  s.solver.restarts = 3;
  s.solver.max_iter = 777;
  s.solver.gap = 1e-5;
  s.solver.seed = 18446744073709551557ull;
  s.seed = 12345678901234ull;
  return s;
}

}  // namespace

TEST_CASE("built-in formations") {
  const auto pyr = builtin_formation("square_pyramid", 1.0, 0.7, 0);
  REQUIRE(pyr.size() == 5);
  CHECK(pyr[0] == Vec3(0.5, 0.5, 0.0));
  CHECK(pyr[4] == Vec3(0.0, 0.0, 0.7));
  CHECK(builtin_formation("cube", 2.0, 0, 0).size() == 8);
  const auto tri = builtin_formation("triangle", 1.0, 0, 0);
  CHECK((tri[0] - tri[1]).norm() == doctest::Approx(1.0));
  CHECK((tri[1] - tri[2]).norm() == doctest::Approx(1.0));
  const auto tet = builtin_formation("tetrahedron", 2.0, 0, 0);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) CHECK((tet[i] - tet[j]).norm() == doctest::Approx(2.0));
  const auto line = builtin_formation("line", 0.5, 0, 4);
  CHECK(line.size() == 4);
  CHECK(line[3].x() - line[0].x() == doctest::Approx(1.5));
  CHECK_THROWS(builtin_formation("hexagon", 1.0, 0, 0));
  CHECK_THROWS(builtin_formation("cube", -1.0, 0, 0));
}

TEST_CASE("minimal scenario takes defaults") {
  const ScenarioFile s = parse_scenario(R"({"formation": {"name": "square_pyramid"}})");
  CHECK(s.complete_graph);
  CHECK(s.gains_source == GainsSource::synthesize);
  CHECK(s.initial.mode == InitialMode::random_box);
  CHECK(s.sim == SimConfig{});
  CHECK(s.seed == 1);
  const FormationSpec spec = build_formation(s);
  CHECK(spec.size() == 5);
  CHECK(spec.graph().edge_count() == 10);
}

TEST_CASE("scenario round trip is exact") {
  const ScenarioFile s = busy_scenario();
  const std::string text = dump_scenario(s);
  const ScenarioFile back = parse_scenario(text);
  CHECK(back == s);
  CHECK(dump_scenario(back) == text);

  ScenarioFile named;
  named.formation.name = "cube";
  named.formation.size = 0.3;
  named.gains_source = GainsSource::file;
  named.gains_path = "gains/cube.txt";
  named.initial.mode = InitialMode::explicit_positions;
  named.initial.positions = builtin_formation("cube", 2.0, 0, 0);
  CHECK(parse_scenario(dump_scenario(named)) == named);
}

TEST_CASE("rotation may be given in degrees") {
  const ScenarioFile s =
      parse_scenario(R"({"formation": {"name": "triangle"}, "perturbation": {"rot_max_deg": 80}})");
  CHECK(s.sim.perturbation.rot_max == doctest::Approx(80.0 * std::numbers::pi / 180.0));
  CHECK(where_of(R"({"formation": {"name": "triangle"}, "perturbation": {"rot_max_deg": 90}})") == "perturbation");
  CHECK(where_of(R"({"formation": {"name": "triangle"}, "perturbation": {"rot_max": 1, "rot_max_deg": 3}})") ==
        "perturbation");
}

TEST_CASE("parse errors name the offending field") {
  CHECK(where_of(R"({})") == "formation");
  CHECK(where_of(R"({"formation": {"name": "blob"}})") == "formation.name");
  CHECK(where_of(R"({"formation": {"coords": [[0, 0], [1, 0, 0]]}})") == "formation.coords[0]");
  CHECK(where_of(R"({"formation": {"coords": [[0, 0, 0], [0, 0, 0], [0, 0, 0]]}})") == "formation");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "colour": 3})") == "colour");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "perturbation": {"scale_min": "x"}})") ==
        "perturbation.scale_min");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "graph": {"edges": [[1, 2], [2, 9]]}})") == "graph.edges");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "graph": {"edges": [[0, 1]]}})") == "graph.edges[0][0]");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "avoidance": {"enabled": true, "radius": -1}})") ==
        "avoidance");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "scale_control": {"shape": "sigmoid"}})") ==
        "scale_control.shape");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "integrator": {"dt": 0}})") == "integrator.dt");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "termination": {"t_max": -1}})") == "termination.t_max");
  CHECK(where_of(R"({"formation": {"name": "cube"}, "seed": -4})") == "seed");
  CHECK(where_of(R"({"formation": {"name": "triangle"}, "initial": {"positions": [[0, 0, 0]]}})") ==
        "initial.positions");
  CHECK(where_of(R"({"formation": {"name": "triangle"}, "gains": {"inline": [{"i": 1, "j": 2, "a": 1, "b": 0}]}})") ==
        "gains.inline[0].c");
  CHECK(where_of(R"({"formation": {"name": "triangle"}, "gains": {"inline": []}})") == "gains.inline");
  CHECK(where_of(R"({"formation": {"name": "triangle"}, "gains": "guess"})") == "gains");
}

TEST_CASE("syntax errors carry a line number") {
  CHECK(where_of("{\n  \"formation\": {\"name\": \"cube\"},\n  \"seed\": 1,,\n}") == "line 3, column 13");
  CHECK(where_of("") .rfind("line 1", 0) == 0);
}

TEST_CASE("initial states") {
  ScenarioFile s = parse_scenario(R"({"formation": {"name": "square_pyramid"},
    "initial": {"line": {"start": [-1, 0, 0.7], "step": [0.5, 0, 0]}, "yaw": [0, 0, 0, 0, 1]}})");
  const WorldState w = initial_state(s, 5, 3);
  CHECK(w.agents[2].position == Vec3(0.0, 0.0, 0.7));
  CHECK(w.agents[4].yaw == 1.0);

  s = parse_scenario(R"({"formation": {"name": "square_pyramid"},
    "initial": {"random_box": {"min": [0, 0, 1], "max": [1, 2, 1.5]}}})");
  const WorldState a = initial_state(s, 5, 3);
  const WorldState b = initial_state(s, 5, 3);
  const WorldState c = initial_state(s, 5, 4);
  CHECK(a.positions() == b.positions());
  CHECK_FALSE(a.positions() == c.positions());
  for (const auto& ag : a.agents) {
    CHECK(ag.position.x() >= 0.0);
    CHECK(ag.position.y() <= 2.0);
    CHECK(ag.position.z() >= 1.0);
    CHECK(ag.yaw >= -std::numbers::pi);
    CHECK(ag.yaw < std::numbers::pi);
  }
}

TEST_CASE("derived seeds differ and are stable") {
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("sim config carries desired distances") {
  const ScenarioFile s =
      parse_scenario(R"({"formation": {"name": "triangle", "size": 2}, "scale_control": {"enabled": true}})");
  const FormationSpec spec = build_formation(s);
  const SimConfig cfg = build_sim_config(s, spec);
  CHECK(cfg.scale_control.desired_distance(0, 2) == doctest::Approx(2.0));
  CHECK_NOTHROW(cfg.validate(spec.graph()));
}

TEST_CASE("gains file round trip is exact") {
  const ScenarioFile s = busy_scenario();
  const SensingGraph g(4, s.edges);
  const std::string text = format_gains(g, s.inline_gains);
  CHECK(text.find("n 4\nedges 5\n") != std::string::npos);
  const GainsFile back = parse_gains(text);
  CHECK(back.graph == g);
  CHECK(back.gains == s.inline_gains);
  CHECK(format_gains(back.graph, back.gains) == text);
}

TEST_CASE("gains file errors carry the line") {
  auto where = [](const std::string& text) {
    try {
      parse_gains(text);
    } catch (const ParseError& e) {
      return e.where();
    }
    return std::string("<no error>");
  };
  CHECK(where("n 2\nedges 1\n1 2\ngains 2\n1 2 1 0 1\n2 1 1 0 x\n") == "line 6");
  CHECK(where("n 2\nedges 1\n1 2\ngains 2\n1 2 1 0 1\n") == "line 5");
  CHECK(where("n 2\nedge 1\n") == "line 2");
  CHECK(where("n 2\nedges 1\n1 2\ngains 2\n1 2 1 0 1\n1 2 1 0 1\n") == "line 6");
  CHECK(where("# header\nn 3\nedges 1\n1 2\ngains 2\n1 2 1 0 1\n2 1 1 0 1\n") == "<no error>");
  CHECK(where("n 3\nedges 1\n1 2\ngains 2\n1 2 1 0 1\n2 1 1 0 1\nextra\n") == "line 7");
}

TEST_CASE("trajectory csv layout") {
  SimResult res;
  res.times = {0.0, 0.01};
  res.positions = {{Vec3(0, 0, 0), Vec3(1, 0.5, 0.25)}, {Vec3(0.01, 0, 0), Vec3(1, 0.5, 0.25)}};
  res.controls = {{Vec3(1, 0, 0), Vec3::Zero()}, {Vec3::Zero(), Vec3::Zero()}};
  res.flags = {{AvoidFlag::rotated, AvoidFlag::stopped}, {AvoidFlag::clear, AvoidFlag::clear}};
  std::ostringstream os;
  write_trajectory_csv(os, res);
  CHECK(os.str() ==
        "t,agent_id,x,y,z,ux,uy,uz,avoid_flag\n"
        "0,1,0,0,0,1,0,0,rotated\n"
        "0,2,1,0.5,0.25,0,0,0,stopped\n"
        "0.01,1,0.01,0,0,0,0,0,clear\n"
        "0.01,2,1,0.5,0.25,0,0,0,clear\n");
}
