#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "protx/io.hpp"
#include "protx/run_commands.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = -1;
};

void add_common(CLI::App* cmd, CliOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Configuration file (JSON)")
      ->required();
  cmd->add_option("--set", opts.overrides,
                  "Override a config value, e.g. --set sim.n_particles=1000");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--seed", opts.seed, "Override sim.seed")
      ->each([&opts](const std::string&) { opts.seed_given = true; });
  cmd->add_option("--threads", opts.threads,
                  "Worker threads (must not change results)");
}

protx::RunConfig load(const CliOptions& opts) {
  std::vector<std::string> overrides = opts.overrides;
  if (opts.seed_given)
    overrides.push_back("sim.seed=" + std::to_string(opts.seed));
  if (opts.threads >= 0)
    overrides.push_back("sim.threads=" + std::to_string(opts.threads));
  protx::RunConfig cfg = protx::load_config(opts.config_path, overrides);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proton transport simulation and treatment-plan optimization"};
  app.require_subcommand(1);

  CliOptions opts;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Monte Carlo forward transport");
  CLI::App* solve_pde =
      app.add_subcommand("solve-pde", "Deterministic 1d forward solve");
  CLI::App* optimize =
      app.add_subcommand("optimize", "Treatment-plan optimization");
  CLI::App* verify = app.add_subcommand(
      "verify-duality", "Compare Monte Carlo and PDE fluence/dose");
  for (CLI::App* cmd : {simulate, solve_pde, optimize, verify})
    add_common(cmd, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const protx::RunConfig cfg = load(opts);
    const std::string out = opts.out_dir.empty() ? cfg.out_dir : opts.out_dir;
    if (simulate->parsed()) return protx::cmd_simulate(cfg, out);
    if (solve_pde->parsed()) return protx::cmd_solve_pde(cfg, out);
    if (optimize->parsed()) return protx::cmd_optimize(cfg, out);
    if (verify->parsed()) return protx::cmd_verify_duality(cfg, out);
  } catch (const protx::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
