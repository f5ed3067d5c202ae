#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "protx/errors.hpp"
#include "protx/optimizer.hpp"

namespace protx {

// Fully validated run configuration. Loading merges the user file over
// the documented defaults, applies --set overrides, then validates every
// constraint and collects all violations (not just the first).
struct RunConfig {
  std::map<std::string, Medium> media;
  MediumStack stack;
  SpatialDomain domain;
  EnergyWindow window;
  BeamSource source;
  BeamBank bank;
  CrossSections xs;
  KernelParams kernel;
  SimConfig sim;
  Grid grid;
  Mesh1D mesh;
  double cfl_safety = 1.0;
  double target_level = 1.0;
  double target_z_lo = 3.0, target_z_hi = 6.0;
  double weight_in = 1.0, weight_out = 0.1;
  OptConfig opt;
  double q_factor = 1.0;
  double duality_tolerance = 0.05;
  std::string out_dir = "out";

  nlohmann::json raw;  // merged document, hashed into the manifest

  TransportProblem transport() const;
  PlanProblem plan() const;
};

nlohmann::json default_config_json();

// Parse + merge + validate. `overrides` are "dotted.path=value" pairs
// (values parsed as JSON, falling back to strings). Throws ConfigError
// with one item per violation.
RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides = {});

// Same, starting from an in-memory document (already merged over
// defaults by the caller or not merged at all).
RunConfig config_from_json(nlohmann::json user,
                           const std::vector<std::string>& overrides = {});

// FNV-1a over the canonical dump; stable across runs and platforms.
std::uint64_t config_hash(const nlohmann::json& j);

}  // namespace protx
