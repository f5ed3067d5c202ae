#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "protx/materials.hpp"
#include "protx/phase_space.hpp"
#include "protx/rng.hpp"
#include "protx/scattering.hpp"
#include "protx/tally.hpp"
#include "protx/track.hpp"

namespace protx {

enum class SimMode { OneD, ThreeD };

struct SimConfig {
  double step_len = 0.01;      // track-length step [cm]
  double mu = 0.0;             // angular diffusion coefficient; 0 = CSDA
  double max_track_len = 100.0;
  std::uint64_t seed = 1;
  std::int64_t n_particles = 1;
  SimMode mode = SimMode::OneD;
  int threads = 0;             // 0 = hardware concurrency

  std::vector<std::string> check(const std::string& path = "sim") const;
  void validate() const;
};

// Gaussian pencil beam: energy ~ N(mean, sigma^2) truncated to the
// window (sigma = 0 gives a monoenergetic beam). weight is a relative
// particle count used when several components form one source.
struct BeamComponent {
  double energy_mean = 105.0;
  double energy_sigma = 1.0;
  double weight = 1.0;
};

struct BeamSource {
  std::vector<BeamComponent> components;
  Vec3 position{0, 0, 0};   // on the spatial inflow face
  Vec3 direction{0, 0, 1};

  PhaseState sample(const EnergyWindow& window, rng::Stream& rs) const;
  double total_weight() const;
  std::vector<std::string> check(const EnergyWindow& window,
                                 const std::string& path = "source") const;
  void validate(const EnergyWindow& window) const;
};

// Immutable model data shared by every history of a batch.
struct TransportProblem {
  MediumStack stack;
  CrossSections xs;
  KernelParams kernel;
  SpatialDomain domain;
  EnergyWindow window;
};

// Euler-Maruyama update over track length dt: energy loses S(x,E) dt,
// position advances along the current direction, and in 3d mode the
// direction receives the sphere drift -mu^2 w dt plus mu (w ^ dB)
// followed by renormalisation. 1d mode leaves the direction unchanged.
PhaseState drift_diffuse_step(const PhaseState& state, double dt,
                              const MediumStack& stack,
                              const SimConfig& config, rng::Stream& rs);

// Candidate distance to the next scattering event for an exponential
// clock with the given rate bound (thinning supplies the state-dependent
// acceptance). Infinite when the bound is zero; negative bounds are a
// domain error.
double next_jump(double rate_bound, rng::Stream& rs);

// Full life cycle of one proton from `start` (Interior or GammaMinus)
// until absorption or the track-length cap. Throws std::invalid_argument
// if start classifies as GammaPlus.
std::vector<TrackEvent> simulate_track(const PhaseState& start,
                                       const TransportProblem& problem,
                                       const SimConfig& config,
                                       rng::Stream& rs);

// Where the injected energy went, per batch. Exact bookkeeping: injected
// equals the sum of the other fields up to rounding.
struct EnergyLedger {
  double injected = 0.0;
  double continuous_deposit = 0.0;  // CSDA losses (the dose channel)
  double jump_deposit = 0.0;        // non-elastic discrete losses
  double outflux_spatial = 0.0;     // carried out through the boundary
  double rangeout_residual = 0.0;   // left below the energy floor
  double censored_residual = 0.0;   // tracks cut by max_track_len

  EnergyLedger& operator+=(const EnergyLedger& o);
};

struct BatchResult {
  FluenceMap fluence;
  DoseMap dose;  // direct estimator
  EnergyLedger ledger;
  std::int64_t n_particles = 0;
};

// Runs n independent histories with per-particle streams derived from
// (seed, particle index) and merges per-lane tallies in a fixed order,
// so the result is a pure function of (seed, config, problem, grid)
// independent of the thread count.
BatchResult run_batch(const BeamSource& source, const TransportProblem& problem,
                      const SimConfig& config, const Grid& grid);

}  // namespace protx
