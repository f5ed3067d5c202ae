#pragma once
#include <string>

#include "protx/config.hpp"

namespace protx {

// Subcommand bodies shared by the CLI and the test suite. Each writes
// its output files plus a manifest into `out_dir` and returns the
// process exit code (0 ok, 3 verification failure). Configuration
// problems throw ConfigError (exit 1 in the CLI); anything else is a
// runtime error (exit 2).
int cmd_simulate(const RunConfig& cfg, const std::string& out_dir);
int cmd_solve_pde(const RunConfig& cfg, const std::string& out_dir);
int cmd_optimize(const RunConfig& cfg, const std::string& out_dir);
int cmd_verify_duality(const RunConfig& cfg, const std::string& out_dir);

// Relative L2 distance ||a - b|| / ||b|| (0 when both are empty).
double relative_l2(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace protx
