#include <CLI11.hpp>

#include <iostream>

#include "polymetro/cli.hpp"

int main(int argc, char** argv) {
  using namespace polymetro;
  CLI::App app{"Local Metropolis chain on convex polytopes"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  RunOptions opt;
  std::uint64_t seed = 0;
  std::string out;
  double tol = 0.0;
  app.add_option("--config", opt.config_path, "experiment document (JSON)");
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  auto* out_opt = app.add_option("--out", out, "output directory");
  app.add_flag("--assert", opt.assert_mode, "exit 2 when an acceptance threshold is violated");
  auto* tol_opt = app.add_option("--tol", tol, "overrides the primary tolerance of the command")
                      ->check(CLI::PositiveNumber);
  app.add_option("--threads", opt.threads, "worker threads, 0 = all cores");

  const char* commands[][2] = {
      {"check", "decide the weakly-incoming condition; exit 0 true, 3 false"},
      {"sample", "run chains and write trajectories"},
      {"spectrum", "eigenvalues of the discretized kernel and the limit operator"},
      {"tv", "exact and empirical total-variation curves"},
      {"sweep", "spectral gap along a list of step sizes"},
  };
  for (auto& c : commands) app.add_subcommand(c[0], c[1]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }
  if (*seed_opt) opt.seed = seed;
  if (*out_opt) opt.out = out;
  if (*tol_opt) opt.tol = tol;
  return run_command(app.get_subcommands().front()->get_name(), opt, std::cout, std::cerr);
}
