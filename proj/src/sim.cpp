#include "formation/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace formation {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGrazeTolerance = 1e-12;  // meters along a unit ray
constexpr double kSteerMargin = 1e-9;      // radians past a blocking boundary

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

Vec3 heading_rotated(const Vec3& dir, double psi) {
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  return Vec3(c * dir.x() - s * dir.y(), s * dir.x() + c * dir.y(), dir.z());
}

struct Obstacle {
  Vec3 center;
  double radius;
  double half_height;
};

bool any_blocking(const Vec3& origin, const Vec3& dir, const std::vector<Obstacle>& obstacles) {
  for (const auto& ob : obstacles)
    if (ray_enters_cylinder(origin, dir, ob.center, ob.radius, ob.half_height)) return true;
  return false;
}

bool contains(const Vec3& offset, double radius, double half_height) {
  return offset.head<2>().norm() < radius && std::abs(offset.z()) < half_height;
}

}  // namespace

void PerturbationModel::validate() const {
  if (!(scale_min > 0.0) || !(scale_max >= scale_min) || !std::isfinite(scale_max)) {
    throw StructuralError("perturbation scale range must satisfy 0 < min <= max < inf");
  }
  if (!(rot_max >= 0.0) || !(rot_max < kPi / 2.0)) {
    throw StructuralError("perturbation rot_max must lie in [0, 90) degrees");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw StructuralError("measurement noise sigma must be finite and non-negative");
  }
  if (!(sat > 0.0)) throw StructuralError("speed saturation must be positive");
}

void AvoidanceConfig::validate() const {
  if (!enabled) return;
  if (!(radius > 0.0) || !(half_height > 0.0) || !std::isfinite(radius) || !std::isfinite(half_height)) {
    throw StructuralError("safety cylinder radius and half-height must be positive");
  }
}

ScaleControl ScaleControl::from_formation(const FormationSpec& spec, double k, ScaleShape shape) {
  ScaleControl sc;
  sc.enabled = true;
  sc.k = k;
  sc.shape = shape;
  for (const auto& e : spec.graph().edges()) sc.desired[{e.i, e.j}] = spec.desired_distance(e.i, e.j);
  return sc;
}

double ScaleControl::f(double x) const {
  return (shape == ScaleShape::tanh ? std::tanh(x) : std::atan(x)) / k;
}

double ScaleControl::desired_distance(int i, int j) const {
  const auto it = desired.find(std::minmax(i, j));
  if (it == desired.end()) {
    throw StructuralError("no desired distance for edge {" + std::to_string(i + 1) + ", " +
                          std::to_string(j + 1) + "}");
  }
  return it->second;
}

void ScaleControl::validate(const SensingGraph& graph) const {
  if (!enabled) return;
  if (!(k > 0.0) || !std::isfinite(k)) throw StructuralError("scale control k must be positive");
  if (desired.size() != graph.edge_count()) {
    throw StructuralError("scale control needs one desired distance per sensing edge");
  }
  for (const auto& [key, d] : desired) {
    if (!graph.has_edge(key.first, key.second) || key.first > key.second) {
      throw StructuralError("desired distance given for a non-edge");
    }
    if (!(d > 0.0) || !std::isfinite(d)) throw StructuralError("desired distances must be positive");
  }
}

void SimConfig::validate(const SensingGraph& graph) const {
  perturbation.validate();
  avoidance.validate();
  scale_control.validate(graph);
  if (!(dt > 0.0) || !std::isfinite(dt)) throw StructuralError("dt must be positive");
  if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw StructuralError("t_max must be finite and non-negative");
  if (!(tol >= 0.0) || !(rel_tol >= 0.0)) throw StructuralError("tolerances must be non-negative");
  if (gridlock_window < 1) throw StructuralError("gridlock window must be at least one step");
}

std::vector<Vec3> WorldState::positions() const {
  std::vector<Vec3> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(a.position);
  return out;
}

WorldState WorldState::at_rest(const std::vector<Vec3>& positions, const std::vector<double>& yaw) {
  if (!yaw.empty() && yaw.size() != positions.size()) throw StructuralError("one yaw offset per agent required");
  WorldState w;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    AgentState a;
    a.position = positions[i];
    a.yaw = yaw.empty() ? 0.0 : wrap_angle(yaw[i]);
    if (a.yaw >= kPi) a.yaw -= 2.0 * kPi;
    w.agents.push_back(a);
  }
  return w;
}

const char* to_string(AvoidFlag f) {
  switch (f) {
    case AvoidFlag::clear: return "clear";
    case AvoidFlag::rotated: return "rotated";
    case AvoidFlag::stopped: return "stopped";
  }
  return "?";
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_time: return "max_time";
    case Termination::gridlock: return "gridlock";
  }
  return "?";
}

Vec3 local_measurement(const WorldState& world, const SensingGraph& graph, int i, int j,
                       const PerturbationModel& perturb, Rng& rng) {
  if (!graph.has_edge(i, j)) {
    throw StructuralError("agent " + std::to_string(i + 1) + " does not sense agent " + std::to_string(j + 1));
  }
  const AgentState& self = world.agents[i];
  Vec3 rel = rot_z(-self.yaw) * (world.agents[j].position - self.position);
  if (perturb.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, perturb.noise_sigma);
    for (int k = 0; k < 3; ++k) rel(k) += noise(rng);
  }
  return rel;
}

Vec3 control_direction(int i, std::span<const Measurement> measurements, const SensingGraph& graph,
                       const GainSet& gains, const ScaleControl& scale_ctl) {
  const auto& nbrs = graph.neighbors(i);
  if (measurements.size() != nbrs.size()) {
    throw StructuralError("agent " + std::to_string(i + 1) + " expects " + std::to_string(nbrs.size()) +
                          " measurements, got " + std::to_string(measurements.size()));
  }
  std::vector<bool> seen(graph.size(), false);
  Vec3 u = Vec3::Zero();
  for (const auto& m : measurements) {
    if (m.neighbor < 0 || m.neighbor >= graph.size() || !graph.has_edge(i, m.neighbor) || seen[m.neighbor]) {
      throw StructuralError("agent " + std::to_string(i + 1) + " is missing a neighbor measurement");
    }
    seen[m.neighbor] = true;
    u += materialize_block(gains.at(i, m.neighbor)) * m.rel;
    if (scale_ctl.enabled) {
      const double d = m.rel.norm();
      u += scale_ctl.f(d - scale_ctl.desired_distance(i, m.neighbor)) * m.rel;
    }
  }
  return u;
}

Vec3 apply_perturbations(const Vec3& u, const PerturbationModel& perturb, Rng& rng) {
  double s = perturb.scale_min;
  if (perturb.scale_max > perturb.scale_min) {
    s = std::uniform_real_distribution<double>(perturb.scale_min, perturb.scale_max)(rng);
  }
  Vec3 out = s * u;
  if (perturb.rot_max > 0.0) {
    const double alpha = std::uniform_real_distribution<double>(0.0, perturb.rot_max)(rng);
    std::normal_distribution<double> normal;
    Vec3 axis;
    do {
      axis = Vec3(normal(rng), normal(rng), normal(rng));
    } while (axis.squaredNorm() < 1e-24);
    out = Eigen::AngleAxisd(alpha, axis.normalized()) * out;
  }
  const double speed = out.norm();
  if (speed > perturb.sat) out *= perturb.sat / speed;
  return out;
}

bool ray_enters_cylinder(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius,
                         double half_height) {
  const double len = dir.norm();
  if (len == 0.0) return false;
  const Vec3 d = dir / len;
  const Vec3 c = center - origin;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();

  // vertical slab |c_z - t d_z| < half_height
  if (d.z() == 0.0) {
    if (std::abs(c.z()) >= half_height) return false;
  } else {
    double t0 = (c.z() - half_height) / d.z();
    double t1 = (c.z() + half_height) / d.z();
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }

  // horizontal disc |t d_xy - c_xy| < radius
  const double a = d.head<2>().squaredNorm();
  const double c0 = c.head<2>().squaredNorm() - radius * radius;
  if (a == 0.0) {
    if (c0 >= 0.0) return false;
  } else {
    const double b = d.head<2>().dot(c.head<2>());
    const double disc = b * b - a * c0;
    if (disc <= 0.0) return false;
    const double root = std::sqrt(disc);
    lo = std::max(lo, (b - root) / a);
    hi = std::min(hi, (b + root) / a);
  }
  return hi - lo > kGrazeTolerance;
}

AvoidanceResult avoid_collisions(int i, const Vec3& u_world, const std::vector<Vec3>& positions,
                                 const AvoidanceConfig& cfg) {
  const double radius = 2.0 * cfg.radius;
  const double half_height = 2.0 * cfg.half_height;
  const Vec3& self = positions[i];

  AvoidanceResult res;
  std::vector<Obstacle> obstacles;
  for (std::size_t j = 0; j < positions.size(); ++j) {
    if (static_cast<int>(j) == i) continue;
    const Vec3 c = positions[j] - self;
    if (contains(c, radius, half_height)) {
      res.flag = AvoidFlag::stopped;
      res.violation = true;
      return res;
    }
    obstacles.push_back({positions[j], radius, half_height});
  }

  res.u = u_world;
  if (u_world.squaredNorm() == 0.0 || !any_blocking(self, u_world, obstacles)) return res;

  const double heading = std::atan2(u_world.y(), u_world.x());
  if (u_world.head<2>().squaredNorm() == 0.0) {
    // purely vertical: turning about z changes nothing
    res.u.setZero();
    res.flag = AvoidFlag::stopped;
    return res;
  }

  // Each obstacle blocks an open heading interval (bearing - w, bearing + w);
  // blockage shrinks monotonically away from the bearing, so w follows by
  // bisection.
  std::vector<double> candidates;
  for (const auto& ob : obstacles) {
    const Vec3 c = ob.center - self;
    const double bearing = c.head<2>().squaredNorm() > 0.0 ? std::atan2(c.y(), c.x()) : heading;
    auto blocked_at = [&](double offset) {
      return ray_enters_cylinder(self, heading_rotated(u_world, wrap_angle(bearing + offset - heading)), ob.center,
                                 ob.radius, ob.half_height);
    };
    if (!blocked_at(0.0)) continue;
    if (blocked_at(kPi)) {
      res.u.setZero();
      res.flag = AvoidFlag::stopped;
      return res;
    }
    double lo = 0.0;
    double hi = kPi;
    for (int it = 0; it < 64; ++it) {
      const double mid = 0.5 * (lo + hi);
      (blocked_at(mid) ? lo : hi) = mid;
    }
    const double centre = wrap_angle(bearing - heading);
    candidates.push_back(wrap_angle(centre + hi + kSteerMargin));
    candidates.push_back(wrap_angle(centre - hi - kSteerMargin));
  }

  std::sort(candidates.begin(), candidates.end(), [](double a, double b) {
    const double fa = std::abs(a);
    const double fb = std::abs(b);
    return fa != fb ? fa < fb : a > b;
  });
  for (double psi : candidates) {
    if (std::abs(psi) > kPi / 2.0) break;
    const Vec3 turned = heading_rotated(u_world, psi);
    if (!any_blocking(self, turned, obstacles)) {
      res.u = turned;
      res.angle = psi;
      res.flag = AvoidFlag::rotated;
      return res;
    }
  }
  res.u.setZero();
  res.flag = AvoidFlag::stopped;
  return res;
}

void hold_conflicting_pairs(const std::vector<Vec3>& positions, std::vector<Vec3>& u, std::vector<AvoidFlag>& flags,
                            double dt, const AvoidanceConfig& cfg) {
  const double radius = 2.0 * cfg.radius;
  const double half_height = 2.0 * cfg.half_height;
  const std::size_t n = positions.size();
  if (u.size() != n || flags.size() != n) throw StructuralError("control and flag counts must match positions");
  // Each ray already misses every cylinder around the snapshot, so a pair can
  // only meet when both agents move.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (u[i].squaredNorm() == 0.0 || u[j].squaredNorm() == 0.0) continue;
      if (contains(positions[j] - positions[i], radius, half_height)) continue;
      const Vec3 gap = (positions[j] + dt * u[j]) - (positions[i] + dt * u[i]);
      if (!contains(gap, radius, half_height)) continue;
      u[j].setZero();
      flags[j] = AvoidFlag::stopped;
    }
  }
}

WorldState step(const WorldState& world, const SensingGraph& graph, const GainSet& gains, const SimConfig& cfg,
                Rng& rng, StepLog* log) {
  const int n = static_cast<int>(world.agents.size());
  if (n != graph.size()) throw StructuralError("world and graph disagree on agent count");
  if (!(cfg.dt > 0.0)) throw StructuralError("dt must be positive");
  const std::vector<Vec3> snapshot = world.positions();

  WorldState next = world;
  std::vector<Measurement> meas;
  std::vector<Vec3> applied(n, Vec3::Zero());
  std::vector<AvoidFlag> flags(n, AvoidFlag::clear);
  bool violation = false;
  for (int i = 0; i < n; ++i) {
    meas.clear();
    for (int j : graph.neighbors(i)) meas.push_back({j, local_measurement(world, graph, i, j, cfg.perturbation, rng)});
    const Vec3 u_local = control_direction(i, meas, graph, gains, cfg.scale_control);
    Vec3 u = rot_z(world.agents[i].yaw) * u_local;
    u = apply_perturbations(u, cfg.perturbation, rng);

    AvoidFlag flag = AvoidFlag::clear;
    if (cfg.avoidance.enabled) {
      const AvoidanceResult av = avoid_collisions(i, u, snapshot, cfg.avoidance);
      u = av.u;
      flag = av.flag;
      violation = violation || av.violation;
    }
    applied[i] = u;
    flags[i] = flag;
  }

  if (cfg.avoidance.enabled) hold_conflicting_pairs(snapshot, applied, flags, cfg.dt, cfg.avoidance);

  for (int i = 0; i < n; ++i) {
    next.agents[i].stopped = flags[i] == AvoidFlag::stopped;
    next.agents[i].position = snapshot[i] + cfg.dt * applied[i];
    if (!next.agents[i].position.allFinite()) {
      throw NumericalDivergence("agent " + std::to_string(i + 1) + " state became non-finite at t = " +
                                std::to_string(world.time));
    }
  }
  if (log) {
    log->controls = applied;
    log->flags = flags;
    log->violation = violation;
  }
  next.time = world.time + cfg.dt;
  return next;
}

SimResult run(const Scenario& scenario) {
  const FormationSpec& spec = scenario.spec;
  const SimConfig& cfg = scenario.config;
  const SensingGraph& graph = spec.graph();
  cfg.validate(graph);
  scenario.gains.check_matches(graph);
  if (static_cast<int>(scenario.initial.agents.size()) != spec.size()) {
    throw StructuralError("initial state has the wrong number of agents");
  }
  const int n = spec.size();
  const AlignmentMode mode = cfg.error_mode();
  Rng rng(scenario.seed);

  SimResult res;
  WorldState world = scenario.initial;
  world.time = 0.0;
  auto record = [&](const WorldState& w, double err) {
    res.times.push_back(w.time);
    res.positions.push_back(w.positions());
    res.controls.emplace_back(n, Vec3::Zero());
    res.flags.emplace_back(n, AvoidFlag::clear);
    res.errors.push_back(err);
  };

  res.initial_error = formation_error(world.positions(), spec, mode).error;
  record(world, res.initial_error);
  auto converged = [&](double err) {
    return err <= cfg.tol || (cfg.rel_tol > 0.0 && err <= cfg.rel_tol * res.initial_error);
  };
  if (converged(res.initial_error)) {
    res.termination = Termination::converged;
    res.final_error = res.initial_error;
    return res;
  }

  const long long max_steps = static_cast<long long>(std::ceil(cfg.t_max / cfg.dt - 1e-9));
  int idle_steps = 0;
  res.termination = Termination::max_time;
  StepLog log;
  for (long long k = 1; k <= max_steps; ++k) {
    WorldState next = step(world, graph, scenario.gains, cfg, rng, &log);
    next.time = static_cast<double>(k) * cfg.dt;
    res.controls.back() = log.controls;
    res.flags.back() = log.flags;
    res.safety_violation = res.safety_violation || log.violation;

    bool idle = true;
    for (int i = 0; i < n; ++i) {
      if (log.flags[i] != AvoidFlag::stopped && log.controls[i].norm() >= cfg.gridlock_speed) {
        idle = false;
        break;
      }
    }
    idle_steps = idle ? idle_steps + 1 : 0;

    world = std::move(next);
    const double err = formation_error(world.positions(), spec, mode).error;
    record(world, err);
    if (converged(err)) {
      res.termination = Termination::converged;
      break;
    }
    if (idle_steps >= cfg.gridlock_window) {
      res.termination = Termination::gridlock;
      break;
    }
  }
  res.final_error = res.errors.back();
  return res;
}

}  // namespace formation
