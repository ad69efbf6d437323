#ifndef FORMATION_SIM_HPP
#define FORMATION_SIM_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "formation/core_model.hpp"
#include "formation/metrics.hpp"

namespace formation {

using Rng = std::mt19937_64;

inline Mat3 rot_z(double theta) { return Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix(); }

/// Disturbances applied to the commanded velocity and the measurements.
struct PerturbationModel {
  double scale_min = 1.0;
  double scale_max = 1.0;
  double rot_max = 0.0;      // radians, about a uniformly random axis
  double noise_sigma = 0.0;  // meters, per relative measurement component
  double sat = std::numeric_limits<double>::infinity();  // m/s

  void validate() const;
  friend bool operator==(const PerturbationModel&, const PerturbationModel&) = default;
};

/// z-aligned safety cylinder carried by every agent.
struct AvoidanceConfig {
  bool enabled = false;
  double radius = 0.1;
  double half_height = 0.1;

  void validate() const;
  CylinderGeometry geometry() const { return {radius, half_height}; }
  friend bool operator==(const AvoidanceConfig&, const AvoidanceConfig&) = default;
};

enum class ScaleShape { arctan, tanh };

/// Distance-keeping term f(d_ij - d*_ij) q_j^i with f(x) = shape(x) / k.
struct ScaleControl {
  bool enabled = false;
  double k = 1.0;
  ScaleShape shape = ScaleShape::tanh;
  std::map<std::pair<int, int>, double> desired;  // keyed by (min, max) 0-based

  static ScaleControl from_formation(const FormationSpec& spec, double k, ScaleShape shape);
  double f(double x) const;
  double desired_distance(int i, int j) const;
  void validate(const SensingGraph& graph) const;
  friend bool operator==(const ScaleControl&, const ScaleControl&) = default;
};

struct SimConfig {
  PerturbationModel perturbation;
  AvoidanceConfig avoidance;
  ScaleControl scale_control;
  double dt = 0.01;
  double t_max = 60.0;
  double tol = 1e-3;      // absolute formation error (m)
  double rel_tol = 0.0;   // relative to the initial error; 0 disables
  int gridlock_window = 100;
  double gridlock_speed = 1e-6;

  void validate(const SensingGraph& graph) const;
  AlignmentMode error_mode() const {
    return scale_control.enabled ? AlignmentMode::fixed_scale : AlignmentMode::full_invariance;
  }
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct AgentState {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;  // world-from-local heading offset, in [-pi, pi)
  bool stopped = false;
};

struct WorldState {
  double time = 0.0;
  std::vector<AgentState> agents;

  std::vector<Vec3> positions() const;
  static WorldState at_rest(const std::vector<Vec3>& positions, const std::vector<double>& yaw = {});
};

enum class AvoidFlag { clear, rotated, stopped };
const char* to_string(AvoidFlag f);

struct Measurement {
  int neighbor;
  Vec3 rel;  // q_j^i in agent i's frame
};

/// R_z(-yaw_i) (p_j - p_i) plus N(0, sigma^2 I) noise. Throws StructuralError
/// when {i, j} is not a sensing edge.
Vec3 local_measurement(const WorldState& world, const SensingGraph& graph, int i, int j,
                       const PerturbationModel& perturb, Rng& rng);

/// sum_j A_ij q_j^i (+ f(|q_j^i| - d*_ij) q_j^i when scale control is on),
/// in agent i's frame. Needs exactly one measurement per neighbor.
Vec3 control_direction(int i, std::span<const Measurement> measurements, const SensingGraph& graph,
                       const GainSet& gains, const ScaleControl& scale_ctl);

/// sat_clip(R_axis(alpha) (s u)), s ~ U[scale_min, scale_max], alpha ~ U[0, rot_max].
Vec3 apply_perturbations(const Vec3& u, const PerturbationModel& perturb, Rng& rng);

struct AvoidanceResult {
  Vec3 u = Vec3::Zero();
  AvoidFlag flag = AvoidFlag::clear;
  double angle = 0.0;      // applied rotation about world z
  bool violation = false;  // agent already inside an inflated cylinder
};

/// Rotate-or-stop steering against every other agent's cylinder inflated
/// to radius 2 r and half-height 2 h. The ray
/// p_i + t u (t > 0) is turned about world z by the smallest angle that
/// clears all cylinders (ties go counterclockwise); more than 90 degrees
/// means stop.
AvoidanceResult avoid_collisions(int i, const Vec3& u_world, const std::vector<Vec3>& positions,
                                 const AvoidanceConfig& cfg);

/// True when the open ray origin + t dir, t > 0, meets the open z-aligned
/// cylinder of the given radius/half-height centered at `center`.
bool ray_enters_cylinder(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius,
                         double half_height);

/// Synchronous-update guard: for i < j both moving, if p_i + dt u_i and
/// p_j + dt u_j would lie inside each other's inflated cylinder, agent j is
/// held (u_j = 0, flag stopped) for this step.
void hold_conflicting_pairs(const std::vector<Vec3>& positions, std::vector<Vec3>& u, std::vector<AvoidFlag>& flags,
                            double dt, const AvoidanceConfig& cfg);

struct StepLog {
  std::vector<Vec3> controls;  // world-frame velocities applied
  std::vector<AvoidFlag> flags;
  bool violation = false;
};

/// One synchronous explicit-Euler step from the snapshot `world`, with
/// hold_conflicting_pairs applied after avoidance.
WorldState step(const WorldState& world, const SensingGraph& graph, const GainSet& gains, const SimConfig& cfg,
                Rng& rng, StepLog* log = nullptr);

enum class Termination { converged, max_time, gridlock };
const char* to_string(Termination t);

struct Scenario {
  FormationSpec spec;
  GainSet gains;
  SimConfig config;
  WorldState initial;
  std::uint64_t seed = 0;
};

struct SimResult {
  std::vector<double> times;
  std::vector<std::vector<Vec3>> positions;
  std::vector<std::vector<Vec3>> controls;  // applied from times[k] to times[k+1]
  std::vector<std::vector<AvoidFlag>> flags;
  std::vector<double> errors;
  Termination termination = Termination::max_time;
  bool safety_violation = false;
  double initial_error = 0.0;
  double final_error = 0.0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

/// Steps until the formation error drops below tol (or rel_tol times the
/// initial error), t reaches t_max, or gridlock persists for the window.
SimResult run(const Scenario& scenario);

}  // namespace formation

#endif  // FORMATION_SIM_HPP
