#ifndef FORMATION_SCENARIO_HPP
#define FORMATION_SCENARIO_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "formation/core_model.hpp"
#include "formation/sim.hpp"
#include "formation/spectral_sdp.hpp"

namespace formation {

inline constexpr const char* kVersion = "0.1.0";

/// Built-in target shapes. `size` is the edge length (spacing for `line`),
/// `height` the pyramid apex altitude, `count` the number of agents on a line.
struct FormationChoice {
  std::string name;  // square_pyramid | cube | line | triangle | tetrahedron, empty for explicit
  double size = 1.0;
  double height = 0.7;
  int count = 5;
  std::vector<Vec3> coords;  // explicit coordinates when name is empty

  friend bool operator==(const FormationChoice&, const FormationChoice&) = default;
};

std::vector<Vec3> builtin_formation(const std::string& name, double size, double height, int count);
std::vector<Vec3> resolve_formation(const FormationChoice& f);

enum class GainsSource { synthesize, inline_gains, file };
enum class InitialMode { explicit_positions, random_box, line };

struct InitialConditions {
  InitialMode mode = InitialMode::random_box;
  std::vector<Vec3> positions;  // explicit_positions
  Vec3 box_min = Vec3(-2.0, -2.0, 0.0);
  Vec3 box_max = Vec3(2.0, 2.0, 2.0);
  Vec3 line_start = Vec3(-1.0, 0.0, 0.7);
  Vec3 line_step = Vec3(0.5, 0.0, 0.0);
  double jitter = 0.0;     // N(0, jitter^2) per coordinate, line mode
  bool random_yaw = true;  // U[-pi, pi) per agent
  std::vector<double> yaw;  // used when random_yaw is false; empty means zeros

  friend bool operator==(const InitialConditions&, const InitialConditions&) = default;
};

/// Everything needed to reproduce one run. Agent indices are 0-based in
/// memory and 1-based on disk.
struct ScenarioFile {
  FormationChoice formation;
  bool complete_graph = true;
  std::vector<std::pair<int, int>> edges;
  GainsSource gains_source = GainsSource::synthesize;
  GainSet inline_gains;
  std::string gains_path;  // relative paths resolve against the scenario file
  InitialConditions initial;
  SimConfig sim;  // scale_control.desired stays empty; it comes from the formation
  SdpOptions solver;
  std::uint64_t seed = 1;

  friend bool operator==(const ScenarioFile&, const ScenarioFile&) = default;
};

/// Throws ParseError naming the line (syntax) or the dotted field path.
ScenarioFile parse_scenario(const std::string& text);
ScenarioFile load_scenario(const std::string& path);
std::string dump_scenario(const ScenarioFile& s);
void save_scenario(const std::string& path, const ScenarioFile& s);

FormationSpec build_formation(const ScenarioFile& s);
/// Simulator config with the distance targets of scale control filled in.
SimConfig build_sim_config(const ScenarioFile& s, const FormationSpec& spec);
/// Positions and yaw offsets; random parts draw from a stream derived from `seed`.
WorldState initial_state(const ScenarioFile& s, int n, std::uint64_t seed);

/// Independent seed for run k of a sweep.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k);

struct GainsFile {
  SensingGraph graph;
  GainSet gains;
};

/// Text format: "n <count>", "edges <m>" followed by m lines "i j", then
/// "gains <2m>" followed by lines "i j a b c" (17 significant digits).
std::string format_gains(const SensingGraph& graph, const GainSet& gains);
GainsFile parse_gains(const std::string& text);
GainsFile read_gains_file(const std::string& path);
void write_gains_file(const std::string& path, const SensingGraph& graph, const GainSet& gains);

/// Columns t, agent_id, x, y, z, ux, uy, uz, avoid_flag; one row per agent
/// per logged time. The final sample carries a zero control.
void write_trajectory_csv(std::ostream& os, const SimResult& res);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace formation

#endif  // FORMATION_SCENARIO_HPP
