#pragma once
#include <string>
#include <vector>

#include "protx/phase_space.hpp"
#include "protx/rng.hpp"

namespace protx {

// Scalar cross-section law sigma(E) = sigma_ref * (E / e_ref)^q_exp,
// constant when q_exp == 0. Units: events per cm.
struct XsLaw {
  double sigma_ref = 0.0;
  double e_ref = 100.0;  // MeV
  double q_exp = 0.0;

  double eval(double e) const;
  std::vector<std::string> check(const std::string& path) const;
};

struct MediumXs {
  XsLaw elastic;
  XsLaw nonelastic;
};

// Piecewise-constant-in-medium cross sections along depth: region i
// applies below z_breaks[i]; the last region extends to infinity.
struct CrossSections {
  std::vector<double> z_breaks;   // size = regions.size() - 1, ascending
  std::vector<MediumXs> regions;  // at least one

  static CrossSections uniform(MediumXs xs);

  int region_at(double z) const;
  double sigma_e(double z, double e) const;
  double sigma_ne(double z, double e) const;
  double total(double z, double e) const;  // sigma_n = sigma_e + sigma_ne

  // Upper bound of the total rate over the energy window, for thinning.
  double max_total(double e_min, double e_max) const;

  std::vector<std::string> check(const std::string& path = "scattering") const;
  void validate() const;
};

double total_rate(const PhaseState& state, const CrossSections& xs);

// Sampling parameters of the mixture transition kernel: rotationally
// symmetric exponential-concentration (von Mises-Fisher) angular laws for
// both branches, and a uniform retained-energy fraction for non-elastic
// events.
struct KernelParams {
  double kappa_e = 1.0e4;   // elastic angular concentration
  double kappa_ne = 20.0;   // non-elastic angular concentration
  double ne_frac_min = 0.5; // retained-energy fraction bounds, in (0, 1]
  double ne_frac_max = 0.9;

  std::vector<std::string> check(const std::string& path = "kernel") const;
  void validate() const;
};

// von Mises-Fisher draw on S^2 about `mean` with concentration kappa.
Vec3 sample_vmf(const Vec3& mean, double kappa, rng::Stream& rs);

// Density and CDF of c = cos(angle to the mean) on [-1, 1].
double vmf_cos_density(double c, double kappa);
double vmf_cos_cdf(double c, double kappa);

struct Transition {
  Vec3 direction;
  double energy;
  bool elastic;
};

// One draw from the mixture kernel at the given state: elastic with
// probability sigma_e/sigma_n (energy conserved exactly), otherwise
// non-elastic (energy scaled by U(ne_frac_min, ne_frac_max)). Throws
// std::logic_error when the total rate vanishes at the state.
Transition sample_transition(const PhaseState& state, const CrossSections& xs,
                             const KernelParams& params, rng::Stream& rs);

// Numerical mass of the implemented kernel density over (direction',
// energy'); equals 1 up to quadrature error. `resolution` is the number
// of composite-Simpson intervals per coordinate.
double kernel_mass(const PhaseState& state, const CrossSections& xs,
                   const KernelParams& params, int resolution);

}  // namespace protx
