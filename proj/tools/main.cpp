#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "formation/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Formation gain synthesis and multi-agent simulation"};
  app.require_subcommand(1);

  std::string scenario;
  std::string gains;

  formation::SynthOptions synth_opts;
  auto* synth = app.add_subcommand("synth", "Synthesize and verify gains for a scenario");
  synth->add_option("scenario", scenario, "Scenario JSON file")->required();
  synth->add_option("--out", synth_opts.out, "Gains file to write")->capture_default_str();

  formation::SimOptions sim_opts;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double tmax = 0.0;
  auto* sim = app.add_subcommand("sim", "Simulate a scenario and write trajectory.csv and metrics.json");
  sim->add_option("scenario", scenario, "Scenario JSON file")->required();
  auto* seed_opt = sim->add_option("--seed", seed, "Override the scenario seed");
  auto* dt_opt = sim->add_option("--dt", dt, "Integrator step (s)");
  auto* tmax_opt = sim->add_option("--tmax", tmax, "Simulated time limit (s)");
  sim->add_option("--out", sim_opts.out, "Output directory")->capture_default_str();
  sim->add_option("--sweep", sim_opts.sweep, "Number of runs with derived seeds")->check(CLI::NonNegativeNumber);

  auto* verify = app.add_subcommand("verify", "Check a gains file against a scenario");
  verify->add_option("gains", gains, "Gains file")->required();
  verify->add_option("scenario", scenario, "Scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : formation::kExitInput;
  }

  if (*synth) return formation::cmd_synth(scenario, synth_opts, std::cout, std::cerr);
  if (*sim) {
    if (*seed_opt) sim_opts.seed = seed;
    if (*dt_opt) sim_opts.dt = dt;
    if (*tmax_opt) sim_opts.t_max = tmax;
    return formation::cmd_sim(scenario, sim_opts, std::cout, std::cerr);
  }
  return formation::cmd_verify(gains, scenario, std::cout, std::cerr);
}
