#include "formation/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include "formation/basis.hpp"
#include "formation/metrics.hpp"
#include "formation/scenario.hpp"
#include "formation/sim.hpp"
#include "formation/spectral_sdp.hpp"
#include "json.hpp"

namespace formation {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::ordered_json;

struct Synthesis {
  SdpSolution solution;
  VerificationReport report;
};

Synthesis synthesize(const FormationSpec& spec, const SdpOptions& opts) {
  const InvarianceBasis basis = build_basis(spec);
  const SdpProblem problem(spec, basis);
  Synthesis s;
  s.solution = solve(problem, opts);
  s.report = verify_gains(spec, basis, s.solution.gains);
  return s;
}

std::string synthesis_report(const FormationSpec& spec, const Synthesis& s) {
  std::ostringstream os;
  os.precision(10);
  os << "agents = " << spec.size() << ", edges = " << spec.graph().edge_count() << "\n";
  os << "objective = " << s.solution.objective << " (upper bound " << s.solution.upper_bound << ")\n";
  os << "newton steps = " << s.solution.iterations << ", restarts agree = " << (s.solution.restarts_agree ? "yes" : "no")
     << "\n";
  os << s.report.summary();
  return os.str();
}

fs::path scenario_dir(const std::string& scenario_path) {
  const fs::path parent = fs::path(scenario_path).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

GainSet resolve_gains(const ScenarioFile& s, const std::string& scenario_path, const FormationSpec& spec) {
  switch (s.gains_source) {
    case GainsSource::inline_gains:
      s.inline_gains.check_matches(spec.graph());
      return s.inline_gains;
    case GainsSource::file: {
      fs::path p(s.gains_path);
      if (p.is_relative()) p = scenario_dir(scenario_path) / p;
      GainsFile g = read_gains_file(p.string());
      if (!(g.graph == spec.graph())) throw ParseError("gains.file", "graph in gains file does not match the scenario");
      return g.gains;
    }
    case GainsSource::synthesize: {
      const Synthesis syn = synthesize(spec, s.solver);
      if (!syn.report.passed()) throw Error("synthesized gains failed verification\n" + syn.report.summary());
      return syn.solution.gains;
    }
  }
  throw Error("unknown gains source");
}

struct RunOutcome {
  std::uint64_t seed = 0;
  Termination termination = Termination::max_time;
  double final_error = 0.0;
  bool safety_violation = false;
  std::string error;  // non-empty when the run threw
};

json metrics_json(const ScenarioFile& s, const FormationSpec& spec, const SimConfig& cfg, const SimResult& res,
                  std::uint64_t seed, double wall) {
  json m;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["termination"] = to_string(res.termination);
  m["converged"] = res.termination == Termination::converged;
  m["error_mode"] = cfg.error_mode() == AlignmentMode::fixed_scale ? "fixed_scale" : "full_invariance";
  m["initial_error"] = res.initial_error;
  m["final_error"] = res.final_error;
  m["scale_error"] = scale_error(res.positions.back(), spec);
  if (s.sim.avoidance.enabled) {
    m["min_separation"] = min_separation(res.positions, cfg.avoidance.geometry());
  } else {
    m["min_separation"] = nullptr;
  }
  m["safety_violation"] = res.safety_violation;
  std::size_t rotated = 0;
  std::size_t stopped = 0;
  for (std::size_t k = 0; k < res.steps(); ++k)
    for (AvoidFlag f : res.flags[k]) {
      rotated += f == AvoidFlag::rotated;
      stopped += f == AvoidFlag::stopped;
    }
  m["rotated_events"] = rotated;
  m["stopped_events"] = stopped;
  m["steps"] = res.steps();
  m["sim_time"] = res.times.back();
  m["wall_time_s"] = wall;
  return m;
}

// One run into `dir`. The scenario written alongside carries the gains and
// seed actually used so the run can be repeated exactly.
RunOutcome run_into(const ScenarioFile& s, const FormationSpec& spec, const GainSet& gains, std::uint64_t seed,
                    const fs::path& dir) {
  RunOutcome o;
  o.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const SimConfig cfg = build_sim_config(s, spec);
  Scenario sc{spec, gains, cfg, initial_state(s, spec.size(), seed), seed};
  const SimResult res = run(sc);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "trajectory.csv", std::ios::binary);
    if (!csv) throw Error("cannot write " + (dir / "trajectory.csv").string());
    write_trajectory_csv(csv, res);
  }
  ScenarioFile copy = s;
  copy.gains_source = GainsSource::inline_gains;
  copy.inline_gains = gains;
  copy.gains_path.clear();
  copy.seed = seed;
  save_scenario((dir / "scenario.json").string(), copy);
  write_text_file((dir / "metrics.json").string(), metrics_json(s, spec, cfg, res, seed, wall).dump(2) + "\n");

  o.termination = res.termination;
  o.final_error = res.final_error;
  o.safety_violation = res.safety_violation;
  return o;
}

int exit_for(Termination t) {
  switch (t) {
    case Termination::converged: return kExitOk;
    case Termination::gridlock: return kExitGridlock;
    case Termination::max_time: return kExitFailed;
  }
  return kExitError;
}

}  // namespace

int cmd_synth(const std::string& scenario_path, const SynthOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    const ScenarioFile s = load_scenario(scenario_path);
    const FormationSpec spec = build_formation(s);
    const Synthesis syn = synthesize(spec, s.solver);
    const std::string report = synthesis_report(spec, syn);
    write_gains_file(opts.out, spec.graph(), syn.solution.gains);
    write_text_file(opts.out + ".report.txt", report);
    out << report;
    return syn.report.passed() ? kExitOk : kExitFailed;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NotStabilizableError& e) {
    err << "not stabilizable: " << e.what() << "\n";
    out << "lambda_1 margin = " << (e.objective() > 0.0 ? e.objective() : 0.0) << " <= 0 (FAIL)\n"
        << "verification FAILED\n";
    return kExitFailed;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int cmd_sim(const std::string& scenario_path, const SimOptions& opts, std::ostream& out, std::ostream& err) {
  ScenarioFile s;
  try {
    s = load_scenario(scenario_path);
    if (opts.seed) s.seed = *opts.seed;
    if (opts.dt) {
      if (!(*opts.dt > 0.0)) throw ParseError("--dt", "must be positive");
      s.sim.dt = *opts.dt;
    }
    if (opts.t_max) {
      if (!(*opts.t_max > 0.0)) throw ParseError("--tmax", "must be positive");
      s.sim.t_max = *opts.t_max;
    }
    if (opts.sweep < 0) throw ParseError("--sweep", "must be non-negative");
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    const FormationSpec spec = build_formation(s);
    const GainSet gains = resolve_gains(s, scenario_path, spec);
    const fs::path root(opts.out);

    if (opts.sweep == 0) {
      const RunOutcome o = run_into(s, spec, gains, s.seed, root);
      out << "termination = " << to_string(o.termination) << ", final error = " << o.final_error
          << (o.safety_violation ? ", SAFETY VIOLATION" : "") << "\n";
      return exit_for(o.termination);
    }

    const int count = opts.sweep;
    std::vector<RunOutcome> outcomes(count);
    std::atomic<int> cursor{0};
    auto worker = [&] {
      for (int k = cursor++; k < count; k = cursor++) {
        const std::uint64_t seed = derive_seed(s.seed, static_cast<std::uint64_t>(k));
        char name[32];
        std::snprintf(name, sizeof name, "run_%04d", k);
        try {
          outcomes[k] = run_into(s, spec, gains, seed, root / name);
        } catch (const std::exception& e) {
          outcomes[k].seed = seed;
          outcomes[k].error = e.what();
        }
      }
    };
    const int threads = std::max(1, std::min<int>(count, static_cast<int>(std::thread::hardware_concurrency())));
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    json summary = json::array();
    int converged = 0;
    int status = kExitOk;
    for (int k = 0; k < count; ++k) {
      const RunOutcome& o = outcomes[k];
      json row;
      row["run"] = k;
      row["seed"] = o.seed;
      if (!o.error.empty()) {
        row["error"] = o.error;
        status = kExitError;
      } else {
        row["termination"] = to_string(o.termination);
        row["final_error"] = o.final_error;
        row["safety_violation"] = o.safety_violation;
        converged += o.termination == Termination::converged;
        if (status != kExitError && o.termination == Termination::gridlock) status = kExitGridlock;
        if (status == kExitOk && o.termination == Termination::max_time) status = kExitFailed;
      }
      summary.push_back(row);
    }
    fs::create_directories(root);
    write_text_file((root / "sweep.json").string(), summary.dump(2) + "\n");
    out << "converged " << converged << "/" << count << "\n";
    return status;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int cmd_verify(const std::string& gains_path, const std::string& scenario_path, std::ostream& out,
               std::ostream& err) {
  try {
    const ScenarioFile s = load_scenario(scenario_path);
    const FormationSpec spec = build_formation(s);
    const GainsFile g = read_gains_file(gains_path);
    if (!(g.graph == spec.graph())) throw ParseError(gains_path, "graph does not match the scenario");
    const InvarianceBasis basis = build_basis(spec);
    const VerificationReport rep = verify_gains(spec, basis, g.gains);
    out << rep.summary();
    return rep.passed() ? kExitOk : kExitFailed;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace formation
