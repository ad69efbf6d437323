#ifndef FORMATION_COMMANDS_HPP
#define FORMATION_COMMANDS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace formation {

// Process exit statuses shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;    // verification failed, or simulation hit t_max
inline constexpr int kExitInput = 2;     // unreadable or malformed input
inline constexpr int kExitGridlock = 3;  // simulation ended in gridlock
inline constexpr int kExitError = 4;     // infeasible structure, divergence, other runtime errors

struct SynthOptions {
  std::string out = "gains.txt";
};

struct SimOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> t_max;
  std::string out = "run";
  int sweep = 0;  // > 0: that many runs with derived seeds under out/run_XXXX
};

/// build_basis -> solve -> verify_gains. Writes the gains file to opts.out
/// and the report to stdout and to "<out>.report.txt".
int cmd_synth(const std::string& scenario_path, const SynthOptions& opts, std::ostream& out, std::ostream& err);

/// Writes trajectory.csv, metrics.json and scenario.json (gains inlined,
/// overrides applied) into the output directory.
int cmd_sim(const std::string& scenario_path, const SimOptions& opts, std::ostream& out, std::ostream& err);

int cmd_verify(const std::string& gains_path, const std::string& scenario_path, std::ostream& out,
               std::ostream& err);

}  // namespace formation

#endif  // FORMATION_COMMANDS_HPP
