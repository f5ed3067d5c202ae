#include "protx/run_commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "protx/io.hpp"
#include "protx/pde1d.hpp"

namespace protx {

namespace {

namespace fs = std::filesystem;

double now_seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << "0x" << std::hex << v;
  return ss.str();
}

void write_run_manifest(const RunConfig& cfg, const std::string& out_dir,
                        const std::string& command, double wall_s,
                        std::vector<ManifestEntry> extra = {}) {
  std::vector<ManifestEntry> entries = {
      {"tool", kToolVersion},
      {"command", command},
      {"config_hash", hex64(config_hash(cfg.raw))},
      {"seed", std::to_string(cfg.sim.seed)},
      {"n_particles", std::to_string(cfg.sim.n_particles)},
      {"threads", std::to_string(cfg.sim.threads)},
  };
  for (auto& e : extra) entries.push_back(std::move(e));
  entries.push_back({"wall_time_s", format_double(wall_s)});
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), entries);
}

// Inflow spectrum of a mixture source on the mesh energy nodes,
// normalised to unit mass (the MC tallies are per history).
Eigen::VectorXd source_spectrum(const BeamSource& source, const Mesh1D& mesh) {
  BeamBank bank;
  for (const auto& c : source.components) bank.beams.push_back(c);
  const Eigen::MatrixXd phi = bank.spectra(mesh);
  Eigen::VectorXd w(bank.n());
  for (int k = 0; k < bank.n(); ++k) w[k] = bank.beams[k].weight;
  return phi * (w / w.sum());
}

}  // namespace

double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const BatchResult batch =
      run_batch(cfg.source, cfg.transport(), cfg.sim, cfg.grid);
  write_fluence_csv((fs::path(out_dir) / "fluence.csv").string(), batch.fluence);
  write_dose_csv((fs::path(out_dir) / "dose.csv").string(),
                 curve_of(batch.dose));

  const EnergyLedger& led = batch.ledger;
  write_run_manifest(
      cfg, out_dir, "simulate", now_seconds_since(t0),
      {{"energy_injected_MeV", format_double(led.injected)},
       {"energy_dose_MeV", format_double(led.continuous_deposit)},
       {"energy_jumps_MeV", format_double(led.jump_deposit)},
       {"energy_outflux_MeV", format_double(led.outflux_spatial)},
       {"energy_rangeout_MeV", format_double(led.rangeout_residual)},
       {"energy_censored_MeV", format_double(led.censored_residual)},
       {"overflow_segments",
        std::to_string(batch.fluence.overflow_segments())}});
  return 0;
}

int cmd_solve_pde(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const Medium& medium = cfg.stack.layers.front().medium;
  const Eigen::VectorXd g = source_spectrum(cfg.source, cfg.mesh);
  const Field2D psi = solve_forward(g, cfg.mesh, medium);
  const Eigen::VectorXd dose = dose_of(psi, medium);

  write_field_csv((fs::path(out_dir) / "psi.csv").string(), cfg.grid,
                  restrict_to_grid(psi, cfg.grid));
  DoseCurve curve;
  curve.grid = cfg.grid;
  curve.dose = restrict_depth_curve(dose, cfg.mesh, cfg.grid);
  curve.stderr_.assign(cfg.grid.n_z, 0.0);
  write_dose_csv((fs::path(out_dir) / "dose.csv").string(), curve);
  write_run_manifest(cfg, out_dir, "solve-pde", now_seconds_since(t0));
  return 0;
}

int cmd_optimize(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const OptResult res = optimize(cfg.plan(), cfg.opt);

  write_weights_csv((fs::path(out_dir) / "weights.csv").string(), cfg.bank,
                    res.weights);
  write_trace_csv((fs::path(out_dir) / "trace.csv").string(), res);
  write_dose_samples_csv((fs::path(out_dir) / "dose.csv").string(),
                         res.dose_axis, res.final_dose);
  write_run_manifest(
      cfg, out_dir, "optimize", now_seconds_since(t0),
      {{"iterations", std::to_string(res.iterations)},
       {"converged", res.converged ? "true" : "false"},
       {"start_projected", res.start_projected ? "true" : "false"},
       {"g_max", format_double(res.g_max_used)},
       {"final_cost",
        format_double(res.cost_trace.empty() ? 0.0 : res.cost_trace.back())},
       {"final_vi_residual",
        format_double(res.vi_trace.empty() ? 0.0 : res.vi_trace.back())}});
  return 0;
}

int cmd_verify_duality(const RunConfig& cfg, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  // Monte Carlo side.
  const BatchResult batch =
      run_batch(cfg.source, cfg.transport(), cfg.sim, cfg.grid);
  const Grid& g = cfg.grid;
  const int nb = g.n_z * g.n_e;
  std::vector<double> mc_fluence(nb), mc_fluence_err(nb);
  for (int b = 0; b < nb; ++b) {
    mc_fluence[b] = batch.fluence.mean(b);
    mc_fluence_err[b] = batch.fluence.stderr_of(b);
  }
  const DoseCurve mc_direct = curve_of(batch.dose);           // stochastic identity
  const DoseCurve mc_via_fluence =
      dose_from_fluence(batch.fluence, cfg.stack);            // deterministic identity

  // Deterministic side.
  const Medium& medium = cfg.stack.layers.front().medium;
  const Eigen::VectorXd spectrum = source_spectrum(cfg.source, cfg.mesh);
  const Field2D psi = solve_forward(spectrum, cfg.mesh, medium);
  const std::vector<double> pde_fluence = restrict_to_grid(psi, cfg.grid);
  const std::vector<double> pde_dose =
      restrict_depth_curve(dose_of(psi, medium), cfg.mesh, cfg.grid);

  const double fluence_dist = relative_l2(mc_fluence, pde_fluence);
  const double dose_dist = relative_l2(mc_direct.dose, pde_dose);
  const double identity_dist = relative_l2(mc_via_fluence.dose, mc_direct.dose);

  // Statistical gate: when the MC error itself exceeds the tolerance the
  // comparison cannot conclude either way.
  double noise_num = 0.0, noise_den = 0.0;
  for (int b = 0; b < nb; ++b) {
    noise_num += mc_fluence_err[b] * mc_fluence_err[b];
    noise_den += mc_fluence[b] * mc_fluence[b];
  }
  const double mc_noise =
      noise_den > 0.0 ? std::sqrt(noise_num / noise_den) : 1.0;

  // Combined bar for the two dose identities: statistical (3 sigma) plus
  // the integrator tolerance.
  double stat_num = 0.0, stat_den = 0.0;
  for (int i = 0; i < g.n_z; ++i) {
    const double s = mc_direct.stderr_[i] + mc_via_fluence.stderr_[i];
    stat_num += s * s;
    stat_den += mc_direct.dose[i] * mc_direct.dose[i];
  }
  const double identity_bar =
      0.02 + (stat_den > 0.0 ? 3.0 * std::sqrt(stat_num / stat_den) : 0.0);

  const double tol = cfg.duality_tolerance;
  std::string status;
  if (mc_noise > tol) {
    status = "inconclusive: MC error exceeds bar";
  } else if (fluence_dist <= tol && dose_dist <= tol &&
             identity_dist <= identity_bar) {
    status = "pass";
  } else {
    status = "fail";
  }

  {
    std::ofstream report((fs::path(out_dir) / "duality_report.txt").string());
    report << "tolerance: " << format_double(tol) << '\n'
           << "fluence_rel_l2: " << format_double(fluence_dist) << '\n'
           << "dose_rel_l2: " << format_double(dose_dist) << '\n'
           << "dose_identity_rel_l2: " << format_double(identity_dist) << '\n'
           << "dose_identity_bar: " << format_double(identity_bar) << '\n'
           << "mc_relative_noise: " << format_double(mc_noise) << '\n'
           << "n_particles: " << cfg.sim.n_particles << '\n'
           << "status: " << status << '\n';
  }
  write_run_manifest(cfg, out_dir, "verify-duality", now_seconds_since(t0),
                     {{"status", status}});
  return status == "fail" ? 3 : 0;
}

}  // namespace protx
