#include "formation/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace formation {

namespace {

using json = nlohmann::ordered_json;

std::string field(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

std::string item(const std::string& parent, std::size_t k) { return parent + "[" + std::to_string(k) + "]"; }

void require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ParseError(path.empty() ? "scenario" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ParseError(field(path, key), "unknown field");
    }
  }
}

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(path, "must be finite");
  return v;
}

double as_number_or_inf(const json& j, const std::string& path) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  return as_number(j, path);
}

long long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<long long>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ParseError(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

Vec3 as_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ParseError(path, "expected [x, y, z]");
  return Vec3(as_number(j[0], item(path, 0)), as_number(j[1], item(path, 1)), as_number(j[2], item(path, 2)));
}

std::vector<Vec3> as_points(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected a list of [x, y, z]");
  std::vector<Vec3> pts;
  for (std::size_t k = 0; k < j.size(); ++k) pts.push_back(as_vec3(j[k], item(path, k)));
  return pts;
}

int as_agent(const json& j, const std::string& path) {
  const long long v = as_integer(j, path);
  if (v < 1 || v > 1000000) throw ParseError(path, "agent ids are 1-based");
  return static_cast<int>(v - 1);
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json points_json(const std::vector<Vec3>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(vec3_json(p));
  return a;
}

// Rethrow validation failures from the simulator structs against a field.
template <typename F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(path, e.what());
  }
}

FormationChoice parse_formation(const json& j) {
  const std::string path = "formation";
  require_object(j, path, {"name", "size", "height", "count", "coords"});
  FormationChoice f;
  if (const json* c = find(j, "coords")) {
    if (find(j, "name")) throw ParseError(path, "give either name or coords, not both");
    f.name.clear();
    f.coords = as_points(*c, field(path, "coords"));
    return f;
  }
  const json* name = find(j, "name");
  if (!name) throw ParseError(path, "needs a built-in name or explicit coords");
  f.name = as_string(*name, field(path, "name"));
  if (const json* v = find(j, "size")) f.size = as_number(*v, field(path, "size"));
  if (const json* v = find(j, "height")) f.height = as_number(*v, field(path, "height"));
  if (const json* v = find(j, "count")) f.count = static_cast<int>(as_integer(*v, field(path, "count")));
  validated(field(path, "name"), [&] { builtin_formation(f.name, f.size, f.height, f.count); });
  return f;
}

void parse_graph(const json& j, ScenarioFile& s) {
  if (j.is_string()) {
    if (j.get<std::string>() != "complete") throw ParseError("graph", "expected \"complete\" or {\"edges\": [...]}");
    s.complete_graph = true;
    s.edges.clear();
    return;
  }
  require_object(j, "graph", {"edges"});
  const json* e = find(j, "edges");
  if (!e || !e->is_array()) throw ParseError("graph.edges", "expected a list of [i, j]");
  s.complete_graph = false;
  s.edges.clear();
  for (std::size_t k = 0; k < e->size(); ++k) {
    const std::string p = item("graph.edges", k);
    const json& pair = (*e)[k];
    if (!pair.is_array() || pair.size() != 2) throw ParseError(p, "expected [i, j]");
    s.edges.emplace_back(as_agent(pair[0], item(p, 0)), as_agent(pair[1], item(p, 1)));
  }
}

GainSet parse_inline_gains(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected a list of {i, j, a, b, c}");
  GainSet g;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string p = item(path, k);
    require_object(j[k], p, {"i", "j", "a", "b", "c"});
    for (const char* key : {"i", "j", "a", "b", "c"})
      if (!find(j[k], key)) throw ParseError(field(p, key), "missing");
    const int i = as_agent(j[k]["i"], field(p, "i"));
    const int jj = as_agent(j[k]["j"], field(p, "j"));
    if (g.blocks().count({i, jj})) throw ParseError(p, "duplicate gain block");
    g.set(i, jj, Gain{as_number(j[k]["a"], field(p, "a")), as_number(j[k]["b"], field(p, "b")),
                      as_number(j[k]["c"], field(p, "c"))});
  }
  return g;
}

void parse_gains_block(const json& j, ScenarioFile& s) {
  if (j.is_string()) {
    if (j.get<std::string>() != "synthesize") throw ParseError("gains", "expected \"synthesize\", {file} or {inline}");
    s.gains_source = GainsSource::synthesize;
    return;
  }
  require_object(j, "gains", {"file", "inline"});
  if (const json* f = find(j, "file")) {
    if (find(j, "inline")) throw ParseError("gains", "give either file or inline, not both");
    s.gains_source = GainsSource::file;
    s.gains_path = as_string(*f, "gains.file");
    return;
  }
  const json* in = find(j, "inline");
  if (!in) throw ParseError("gains", "expected \"synthesize\", {file} or {inline}");
  s.gains_source = GainsSource::inline_gains;
  s.inline_gains = parse_inline_gains(*in, "gains.inline");
}

InitialConditions parse_initial(const json& j) {
  const std::string path = "initial";
  require_object(j, path, {"positions", "random_box", "line", "yaw"});
  InitialConditions ic;
  int modes = 0;
  if (const json* p = find(j, "positions")) {
    ++modes;
    ic.mode = InitialMode::explicit_positions;
    ic.positions = as_points(*p, field(path, "positions"));
  }
  if (const json* b = find(j, "random_box")) {
    ++modes;
    const std::string bp = field(path, "random_box");
    require_object(*b, bp, {"min", "max"});
    ic.mode = InitialMode::random_box;
    if (const json* v = find(*b, "min")) ic.box_min = as_vec3(*v, field(bp, "min"));
    if (const json* v = find(*b, "max")) ic.box_max = as_vec3(*v, field(bp, "max"));
    if (!(ic.box_min.array() <= ic.box_max.array()).all()) throw ParseError(bp, "min must not exceed max");
  }
  if (const json* l = find(j, "line")) {
    ++modes;
    const std::string lp = field(path, "line");
    require_object(*l, lp, {"start", "step", "jitter"});
    ic.mode = InitialMode::line;
    if (const json* v = find(*l, "start")) ic.line_start = as_vec3(*v, field(lp, "start"));
    if (const json* v = find(*l, "step")) ic.line_step = as_vec3(*v, field(lp, "step"));
    if (const json* v = find(*l, "jitter")) ic.jitter = as_number(*v, field(lp, "jitter"));
    if (ic.jitter < 0.0) throw ParseError(field(lp, "jitter"), "must be non-negative");
  }
  if (modes > 1) throw ParseError(path, "give exactly one of positions, random_box, line");
  if (const json* y = find(j, "yaw")) {
    const std::string yp = field(path, "yaw");
    if (y->is_string()) {
      if (y->get<std::string>() != "random") throw ParseError(yp, "expected \"random\" or a list of radians");
      ic.random_yaw = true;
    } else if (y->is_array()) {
      ic.random_yaw = false;
      for (std::size_t k = 0; k < y->size(); ++k) ic.yaw.push_back(as_number((*y)[k], item(yp, k)));
    } else {
      throw ParseError(yp, "expected \"random\" or a list of radians");
    }
  }
  return ic;
}

PerturbationModel parse_perturbation(const json& j) {
  const std::string path = "perturbation";
  require_object(j, path, {"scale_min", "scale_max", "rot_max", "rot_max_deg", "noise_sigma", "saturation"});
  PerturbationModel p;
  if (const json* v = find(j, "scale_min")) p.scale_min = as_number(*v, field(path, "scale_min"));
  if (const json* v = find(j, "scale_max")) p.scale_max = as_number(*v, field(path, "scale_max"));
  if (find(j, "rot_max") && find(j, "rot_max_deg")) throw ParseError(path, "give either rot_max or rot_max_deg");
  if (const json* v = find(j, "rot_max")) p.rot_max = as_number(*v, field(path, "rot_max"));
  if (const json* v = find(j, "rot_max_deg")) p.rot_max = as_number(*v, field(path, "rot_max_deg")) * std::numbers::pi / 180.0;
  if (const json* v = find(j, "noise_sigma")) p.noise_sigma = as_number(*v, field(path, "noise_sigma"));
  if (const json* v = find(j, "saturation")) p.sat = as_number_or_inf(*v, field(path, "saturation"));
  validated(path, [&] { p.validate(); });
  return p;
}

AvoidanceConfig parse_avoidance(const json& j) {
  const std::string path = "avoidance";
  require_object(j, path, {"enabled", "radius", "half_height"});
  AvoidanceConfig a;
  if (const json* v = find(j, "enabled")) a.enabled = as_bool(*v, field(path, "enabled"));
  if (const json* v = find(j, "radius")) a.radius = as_number(*v, field(path, "radius"));
  if (const json* v = find(j, "half_height")) a.half_height = as_number(*v, field(path, "half_height"));
  validated(path, [&] { a.validate(); });
  return a;
}

ScaleControl parse_scale_control(const json& j) {
  const std::string path = "scale_control";
  require_object(j, path, {"enabled", "k", "shape"});
  ScaleControl sc;
  if (const json* v = find(j, "enabled")) sc.enabled = as_bool(*v, field(path, "enabled"));
  if (const json* v = find(j, "k")) sc.k = as_number(*v, field(path, "k"));
  if (!(sc.k > 0.0)) throw ParseError(field(path, "k"), "must be positive");
  if (const json* v = find(j, "shape")) {
    const std::string shape = as_string(*v, field(path, "shape"));
    if (shape == "tanh") {
      sc.shape = ScaleShape::tanh;
    } else if (shape == "arctan") {
      sc.shape = ScaleShape::arctan;
    } else {
      throw ParseError(field(path, "shape"), "expected \"tanh\" or \"arctan\"");
    }
  }
  return sc;
}

void parse_integrator(const json& j, SimConfig& cfg) {
  require_object(j, "integrator", {"dt"});
  if (const json* v = find(j, "dt")) cfg.dt = as_number(*v, "integrator.dt");
  if (!(cfg.dt > 0.0)) throw ParseError("integrator.dt", "must be positive");
}

void parse_termination(const json& j, SimConfig& cfg) {
  const std::string path = "termination";
  require_object(j, path, {"t_max", "tol", "rel_tol", "gridlock_window", "gridlock_speed"});
  if (const json* v = find(j, "t_max")) cfg.t_max = as_number(*v, field(path, "t_max"));
  if (const json* v = find(j, "tol")) cfg.tol = as_number(*v, field(path, "tol"));
  if (const json* v = find(j, "rel_tol")) cfg.rel_tol = as_number(*v, field(path, "rel_tol"));
  if (const json* v = find(j, "gridlock_window")) {
    cfg.gridlock_window = static_cast<int>(as_integer(*v, field(path, "gridlock_window")));
  }
  if (const json* v = find(j, "gridlock_speed")) cfg.gridlock_speed = as_number(*v, field(path, "gridlock_speed"));
  if (!(cfg.t_max > 0.0)) throw ParseError(field(path, "t_max"), "must be positive");
  if (cfg.tol < 0.0) throw ParseError(field(path, "tol"), "must be non-negative");
  if (cfg.rel_tol < 0.0) throw ParseError(field(path, "rel_tol"), "must be non-negative");
  if (cfg.gridlock_window < 1) throw ParseError(field(path, "gridlock_window"), "must be at least 1");
  if (cfg.gridlock_speed < 0.0) throw ParseError(field(path, "gridlock_speed"), "must be non-negative");
}

SdpOptions parse_solver(const json& j) {
  const std::string path = "solver";
  require_object(j, path, {"restarts", "max_iter", "gap", "seed"});
  SdpOptions o;
  if (const json* v = find(j, "restarts")) o.restarts = static_cast<int>(as_integer(*v, field(path, "restarts")));
  if (const json* v = find(j, "max_iter")) o.max_iter = static_cast<int>(as_integer(*v, field(path, "max_iter")));
  if (const json* v = find(j, "gap")) o.gap = as_number(*v, field(path, "gap"));
  if (const json* v = find(j, "seed")) {
    if (!v->is_number_unsigned()) throw ParseError(field(path, "seed"), "expected a non-negative integer");
    o.seed = v->get<std::uint64_t>();
  }
  if (o.restarts < 1) throw ParseError(field(path, "restarts"), "must be at least 1");
  if (o.max_iter < 1) throw ParseError(field(path, "max_iter"), "must be at least 1");
  if (!(o.gap > 0.0)) throw ParseError(field(path, "gap"), "must be positive");
  return o;
}

std::pair<std::size_t, std::size_t> line_and_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t k = 0; k + 1 < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

const char* mode_name(InitialMode m) {
  switch (m) {
    case InitialMode::explicit_positions: return "positions";
    case InitialMode::random_box: return "random_box";
    case InitialMode::line: return "line";
  }
  return "random_box";
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::vector<Vec3> builtin_formation(const std::string& name, double size, double height, int count) {
  if (!(size > 0.0) || !std::isfinite(size)) throw StructuralError("formation size must be positive");
  const double h = 0.5 * size;
  if (name == "square_pyramid") {
    if (!std::isfinite(height) || height == 0.0) throw StructuralError("pyramid height must be nonzero");
    return {{h, h, 0.0}, {-h, h, 0.0}, {-h, -h, 0.0}, {h, -h, 0.0}, {0.0, 0.0, height}};
  }
  if (name == "cube") {
    std::vector<Vec3> pts;
    for (int k = 0; k < 8; ++k) pts.emplace_back((k & 1) ? h : -h, (k & 2) ? h : -h, (k & 4) ? h : -h);
    return pts;
  }
  if (name == "line") {
    if (count < 2) throw StructuralError("line formation needs at least 2 agents");
    std::vector<Vec3> pts;
    for (int k = 0; k < count; ++k) pts.emplace_back(size * (k - 0.5 * (count - 1)), 0.0, 0.0);
    return pts;
  }
  if (name == "triangle") {
    const double r = size / std::sqrt(3.0);
    std::vector<Vec3> pts;
    for (int k = 0; k < 3; ++k) {
      const double ang = std::numbers::pi / 2.0 + 2.0 * std::numbers::pi * k / 3.0;
      pts.emplace_back(r * std::cos(ang), r * std::sin(ang), 0.0);
    }
    return pts;
  }
  if (name == "tetrahedron") {
    const double s = size / (2.0 * std::sqrt(2.0));
    return {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
  }
  throw StructuralError("unknown built-in formation '" + name + "'");
}

std::vector<Vec3> resolve_formation(const FormationChoice& f) {
  if (f.name.empty()) return f.coords;
  return builtin_formation(f.name, f.size, f.height, f.count);
}

ScenarioFile parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_and_column(text, e.byte);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col), "malformed JSON");
  }
  require_object(root, "", {"formation", "graph", "gains", "initial", "perturbation", "avoidance",
                            "scale_control", "integrator", "termination", "solver", "seed"});
  ScenarioFile s;
  const json* f = find(root, "formation");
  if (!f) throw ParseError("formation", "missing");
  s.formation = parse_formation(*f);
  if (const json* g = find(root, "graph")) parse_graph(*g, s);
  if (const json* g = find(root, "gains")) parse_gains_block(*g, s);
  if (const json* v = find(root, "initial")) s.initial = parse_initial(*v);
  if (const json* v = find(root, "perturbation")) s.sim.perturbation = parse_perturbation(*v);
  if (const json* v = find(root, "avoidance")) s.sim.avoidance = parse_avoidance(*v);
  if (const json* v = find(root, "scale_control")) s.sim.scale_control = parse_scale_control(*v);
  if (const json* v = find(root, "integrator")) parse_integrator(*v, s.sim);
  if (const json* v = find(root, "termination")) parse_termination(*v, s.sim);
  if (const json* v = find(root, "solver")) s.solver = parse_solver(*v);
  if (const json* v = find(root, "seed")) {
    if (!v->is_number_unsigned()) throw ParseError("seed", "expected a non-negative integer");
    s.seed = v->get<std::uint64_t>();
  }

  // Cross-field checks.
  std::vector<Vec3> coords;
  validated("formation", [&] { coords = resolve_formation(s.formation); });
  const int n = static_cast<int>(coords.size());
  validated("formation", [&] { FormationSpec(coords, SensingGraph::complete(std::max(n, 1))); });
  if (!s.complete_graph) validated("graph.edges", [&] { SensingGraph(n, s.edges); });
  if (s.initial.mode == InitialMode::explicit_positions && static_cast<int>(s.initial.positions.size()) != n) {
    throw ParseError("initial.positions", "expected " + std::to_string(n) + " positions");
  }
  if (!s.initial.random_yaw && !s.initial.yaw.empty() && static_cast<int>(s.initial.yaw.size()) != n) {
    throw ParseError("initial.yaw", "expected " + std::to_string(n) + " angles");
  }
  if (s.gains_source == GainsSource::inline_gains) {
    const SensingGraph graph = s.complete_graph ? SensingGraph::complete(n) : SensingGraph(n, s.edges);
    validated("gains.inline", [&] { s.inline_gains.check_matches(graph); });
  }
  return s;
}

ScenarioFile load_scenario(const std::string& path) { return parse_scenario(read_text_file(path)); }

std::string dump_scenario(const ScenarioFile& s) {
  json root;
  json f;
  if (s.formation.name.empty()) {
    f["coords"] = points_json(s.formation.coords);
  } else {
    f["name"] = s.formation.name;
    f["size"] = s.formation.size;
    f["height"] = s.formation.height;
    f["count"] = s.formation.count;
  }
  root["formation"] = f;

  if (s.complete_graph) {
    root["graph"] = "complete";
  } else {
    json edges = json::array();
    for (const auto& [i, j] : s.edges) edges.push_back(json::array({i + 1, j + 1}));
    root["graph"] = json{{"edges", edges}};
  }

  switch (s.gains_source) {
    case GainsSource::synthesize:
      root["gains"] = "synthesize";
      break;
    case GainsSource::file:
      root["gains"] = json{{"file", s.gains_path}};
      break;
    case GainsSource::inline_gains: {
      json blocks = json::array();
      for (const auto& [key, g] : s.inline_gains.blocks()) {
        json b;
        b["i"] = key.first + 1;
        b["j"] = key.second + 1;
        b["a"] = g.a;
        b["b"] = g.b;
        b["c"] = g.c;
        blocks.push_back(b);
      }
      root["gains"] = json{{"inline", blocks}};
      break;
    }
  }

  json init;
  const InitialConditions& ic = s.initial;
  switch (ic.mode) {
    case InitialMode::explicit_positions:
      init[mode_name(ic.mode)] = points_json(ic.positions);
      break;
    case InitialMode::random_box:
      init[mode_name(ic.mode)] = json{{"min", vec3_json(ic.box_min)}, {"max", vec3_json(ic.box_max)}};
      break;
    case InitialMode::line:
      init[mode_name(ic.mode)] =
          json{{"start", vec3_json(ic.line_start)}, {"step", vec3_json(ic.line_step)}, {"jitter", ic.jitter}};
      break;
  }
  if (ic.random_yaw) {
    init["yaw"] = "random";
  } else {
    init["yaw"] = ic.yaw;
  }
  root["initial"] = init;

  const PerturbationModel& p = s.sim.perturbation;
  json pj;
  pj["scale_min"] = p.scale_min;
  pj["scale_max"] = p.scale_max;
  pj["rot_max"] = p.rot_max;
  pj["noise_sigma"] = p.noise_sigma;
  if (std::isinf(p.sat)) {
    pj["saturation"] = "inf";
  } else {
    pj["saturation"] = p.sat;
  }
  root["perturbation"] = pj;

  const AvoidanceConfig& a = s.sim.avoidance;
  root["avoidance"] = json{{"enabled", a.enabled}, {"radius", a.radius}, {"half_height", a.half_height}};

  const ScaleControl& sc = s.sim.scale_control;
  root["scale_control"] =
      json{{"enabled", sc.enabled}, {"k", sc.k}, {"shape", sc.shape == ScaleShape::tanh ? "tanh" : "arctan"}};

  root["integrator"] = json{{"dt", s.sim.dt}};
  root["termination"] = json{{"t_max", s.sim.t_max},
                             {"tol", s.sim.tol},
                             {"rel_tol", s.sim.rel_tol},
                             {"gridlock_window", s.sim.gridlock_window},
                             {"gridlock_speed", s.sim.gridlock_speed}};
  root["solver"] = json{{"restarts", s.solver.restarts},
                        {"max_iter", s.solver.max_iter},
                        {"gap", s.solver.gap},
                        {"seed", s.solver.seed}};
  root["seed"] = s.seed;
  return root.dump(2) + "\n";
}

void save_scenario(const std::string& path, const ScenarioFile& s) { write_text_file(path, dump_scenario(s)); }

FormationSpec build_formation(const ScenarioFile& s) {
  std::vector<Vec3> coords = resolve_formation(s.formation);
  const int n = static_cast<int>(coords.size());
  SensingGraph graph = s.complete_graph ? SensingGraph::complete(n) : SensingGraph(n, s.edges);
  return FormationSpec(std::move(coords), std::move(graph));
}

SimConfig build_sim_config(const ScenarioFile& s, const FormationSpec& spec) {
  SimConfig cfg = s.sim;
  if (cfg.scale_control.enabled) {
    cfg.scale_control = ScaleControl::from_formation(spec, s.sim.scale_control.k, s.sim.scale_control.shape);
  }
  return cfg;
}

WorldState initial_state(const ScenarioFile& s, int n, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1u};
  Rng rng(seq);
  const InitialConditions& ic = s.initial;
  std::vector<Vec3> pos;
  switch (ic.mode) {
    case InitialMode::explicit_positions:
      pos = ic.positions;
      break;
    case InitialMode::random_box:
      for (int i = 0; i < n; ++i) {
        Vec3 p;
        for (int d = 0; d < 3; ++d) p(d) = std::uniform_real_distribution<double>(ic.box_min(d), ic.box_max(d))(rng);
        pos.push_back(p);
      }
      break;
    case InitialMode::line: {
      std::normal_distribution<double> jit(0.0, 1.0);
      for (int i = 0; i < n; ++i) {
        Vec3 p = ic.line_start + static_cast<double>(i) * ic.line_step;
        if (ic.jitter > 0.0)
          for (int d = 0; d < 3; ++d) p(d) += ic.jitter * jit(rng);
        pos.push_back(p);
      }
      break;
    }
  }
  if (static_cast<int>(pos.size()) != n) throw StructuralError("initial positions do not match agent count");
  std::vector<double> yaw(n, 0.0);
  if (ic.random_yaw) {
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    for (auto& y : yaw) y = u(rng);
  } else if (!ic.yaw.empty()) {
    if (static_cast<int>(ic.yaw.size()) != n) throw StructuralError("yaw list does not match agent count");
    yaw = ic.yaw;
  }
  return WorldState::at_rest(pos, yaw);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  Rng rng(seq);
  return rng();
}

std::string format_gains(const SensingGraph& graph, const GainSet& gains) {
  gains.check_matches(graph);
  std::string out = "# formation gains: i j a b c, block (i, j) multiplies agent i's measurement of j\n";
  out += "n " + std::to_string(graph.size()) + "\n";
  out += "edges " + std::to_string(graph.edge_count()) + "\n";
  for (const auto& e : graph.edges()) out += std::to_string(e.i + 1) + " " + std::to_string(e.j + 1) + "\n";
  out += "gains " + std::to_string(gains.size()) + "\n";
  char buf[160];
  for (const auto& [key, g] : gains.blocks()) {
    std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g %.17g\n", key.first + 1, key.second + 1, g.a, g.b, g.c);
    out += buf;
  }
  return out;
}

GainsFile parse_gains(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto where = [&] { return "line " + std::to_string(line_no); };
  // Next non-blank, non-comment line split into tokens.
  auto next = [&](std::vector<std::string>& tokens) {
    while (std::getline(in, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      std::istringstream ls(raw);
      tokens.clear();
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (!tokens.empty()) return true;
    }
    return false;
  };
  auto integer = [&](const std::string& t) {
    long long v = 0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ParseError(where(), "expected an integer, got '" + t + "'");
    return v;
  };
  auto number = [&](const std::string& t) {
    double v = 0.0;
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v)) {
      throw ParseError(where(), "expected a finite number, got '" + t + "'");
    }
    return v;
  };
  auto header = [&](const char* key) {
    std::vector<std::string> t;
    if (!next(t)) throw ParseError("line " + std::to_string(line_no + 1), std::string("missing '") + key + "' header");
    if (t.size() != 2 || t[0] != key) throw ParseError(where(), std::string("expected '") + key + " <count>'");
    const long long v = integer(t[1]);
    if (v < 0) throw ParseError(where(), "count must be non-negative");
    return v;
  };

  const long long n = header("n");
  const long long m = header("edges");
  std::vector<std::pair<int, int>> edges;
  std::vector<std::string> t;
  for (long long k = 0; k < m; ++k) {
    if (!next(t)) throw ParseError(where(), "fewer edge lines than declared");
    if (t.size() != 2) throw ParseError(where(), "expected 'i j'");
    edges.emplace_back(static_cast<int>(integer(t[0]) - 1), static_cast<int>(integer(t[1]) - 1));
  }
  GainsFile out;
  try {
    out.graph = SensingGraph(static_cast<int>(n), edges);
  } catch (const Error& e) {
    throw ParseError("edges", e.what());
  }
  const long long blocks = header("gains");
  GainSet gains;
  for (long long k = 0; k < blocks; ++k) {
    if (!next(t)) throw ParseError(where(), "fewer gain lines than declared");
    if (t.size() != 5) throw ParseError(where(), "expected 'i j a b c'");
    const int i = static_cast<int>(integer(t[0]) - 1);
    const int j = static_cast<int>(integer(t[1]) - 1);
    if (gains.blocks().count({i, j})) throw ParseError(where(), "duplicate gain block");
    gains.set(i, j, Gain{number(t[2]), number(t[3]), number(t[4])});
  }
  if (next(t)) throw ParseError(where(), "unexpected trailing content");
  try {
    gains.check_matches(out.graph);
  } catch (const Error& e) {
    throw ParseError("gains", e.what());
  }
  out.gains = std::move(gains);
  return out;
}

GainsFile read_gains_file(const std::string& path) {
  try {
    return parse_gains(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.where(), std::string(e.what()).substr(e.where().size() + 2));
  }
}

void write_gains_file(const std::string& path, const SensingGraph& graph, const GainSet& gains) {
  write_text_file(path, format_gains(graph, gains));
}

void write_trajectory_csv(std::ostream& os, const SimResult& res) {
  os << "t,agent_id,x,y,z,ux,uy,uz,avoid_flag\n";
  std::string row;
  for (std::size_t k = 0; k < res.times.size(); ++k) {
    const bool last = k + 1 == res.times.size();
    for (std::size_t i = 0; i < res.positions[k].size(); ++i) {
      const Vec3& p = res.positions[k][i];
      const Vec3 u = last ? Vec3::Zero() : res.controls[k][i];
      const AvoidFlag flag = last ? AvoidFlag::clear : res.flags[k][i];
      row = format_double(res.times[k]);
      row += ',' + std::to_string(i + 1);
      for (int d = 0; d < 3; ++d) row += ',' + format_double(p(d));
      for (int d = 0; d < 3; ++d) row += ',' + format_double(u(d));
      row += ',';
      row += to_string(flag);
      row += '\n';
      os << row;
    }
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

}  // namespace formation
