#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "nsdg/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Two-player nonzero-sum game solver and verifier"};
  app.require_subcommand(1);
  nsdg::Invocation inv;

  auto* solve = app.add_subcommand("solve", "Validate the game and solve the coupled Isaacs systems");
  solve->add_option("--config", inv.config, "Run config or game spec document")->required();
  solve->add_option("--orientation", inv.orientation, "Favoured player: p1, p2 or both")
      ->check(CLI::IsMember({"p1", "p2", "both"}));
  solve->add_flag("--upper", inv.upper, "Also solve the upper value systems");

  auto* verify = app.add_subcommand("verify", "Run one named verification check");
  verify->add_option("check", inv.check, "Check name")->required();
  verify->add_option("--config", inv.config, "Run config or game spec document")->required();
  int seeds = 0;
  auto* seeds_opt = verify->add_option("--seeds", seeds, "Instances or control tables to draw");

  auto* nash = app.add_subcommand("nash", "Find or check a Nash equilibrium payoff");
  nash->add_option("mode", inv.mode, "find or check")->required()->check(CLI::IsMember({"find", "check"}));
  nash->add_option("--config", inv.config, "Run config or game spec document")->required();
  nash->add_option("--pair", inv.pair, "Candidate pair file for check");
  std::string schedule;
  auto* sched_opt = nash->add_option("--eps-schedule", schedule, "Comma-separated epsilon values");

  auto* report = app.add_subcommand("report", "Summarize the reports in a directory");
  report->add_option("--dir", inv.dir, "Output directory to summarize")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nsdg::kExitUsage;
  }

  inv.command = app.get_subcommands().front()->get_name();
  if (*seeds_opt) inv.seeds = seeds;
  if (*sched_opt) {
    try {
      inv.eps_schedule = nsdg::parse_schedule(schedule);
    } catch (const nsdg::ConfigError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return nsdg::kExitUsage;
    }
  }

  const nsdg::RunReport rep = nsdg::run_command(inv);
  for (const auto& [name, secs] : rep.timings) std::fprintf(stderr, "timing %s %.3f s\n", name.c_str(), secs);
  if (!rep.message.empty()) std::fprintf(stderr, "error: %s\n", rep.message.c_str());
  std::cout << rep.to_json().dump(2) << '\n';
  return rep.exit_code;
}
