#pragma once
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "protx/rng.hpp"

namespace protx {

// Homogeneous medium under the Bragg-Kleeman range-energy law
//
//   R(E) = alpha * E^p,   S(E) = E^(1-p) / (alpha * p).
//
// S is clamped at e_screen so it stays bounded as E -> 0 (screened
// stopping power); below e_screen the loss rate is constant.
struct Medium {
  std::string name = "water";
  double alpha = 0.00246;  // range coefficient [cm / MeV^p]
  double p = 1.75;         // range exponent, dimensionless
  double rho = 1.0;        // mass density [g/cm^3]
  double e_screen = 1.0;   // screening threshold [MeV]

  // Returns constraint violations as "path: message" strings; empty if valid.
  std::vector<std::string> check(const std::string& path = "medium") const;
  void validate() const;  // throws std::invalid_argument on first violation
};

// Built-in media. alpha and p follow the usual range-energy fits for
// water / muscle / bone / lung; rho and e_screen are not part of those
// fits and carry the documented defaults (see README).
const std::vector<Medium>& builtin_media();
const Medium& builtin_medium(const std::string& name);

// CSDA range R = alpha * e0^p. Throws std::domain_error for e0 < 0.
inline double range_cm(const Medium& m, double e0) {
  if (e0 < 0.0) throw std::domain_error("range_cm: negative energy");
  return m.alpha * std::pow(e0, m.p);
}

// Residual energy after depth z: E(z) = alpha^(-1/p) (R0 - z)^(1/p),
// zero at and beyond the range.
inline double energy_at_depth(const Medium& m, double e0, double z) {
  if (z < 0.0) throw std::domain_error("energy_at_depth: negative depth");
  const double residual = range_cm(m, e0) - z;
  if (residual <= 0.0) return 0.0;
  return std::pow(residual / m.alpha, 1.0 / m.p);
}

// Screened Bragg-Kleeman stopping power [MeV/cm].
inline double stopping_power(const Medium& m, double e) {
  const double ec = e > m.e_screen ? e : m.e_screen;
  return std::pow(ec, 1.0 - m.p) / (m.alpha * m.p);
}

// Scenario distribution for anatomy/physics uncertainty: independent
// truncated-Gaussian multiplicative perturbations of rho and alpha.
struct ScenarioParams {
  double density_rel_sigma = 0.03;
  double alpha_rel_sigma = 0.03;
  double truncation = 0.2;  // max |relative perturbation|, in (0,1)

  std::vector<std::string> check(const std::string& path = "scenario") const;
  void validate() const;
};

// N(0, sigma^2) conditioned on |x| <= truncation, sampled by rejection.
double truncated_normal(double sigma, double truncation, rng::Stream& rs);

// Copy of m with rho and alpha scaled by independent (1 + eps) factors.
Medium perturb_medium(const Medium& m, const ScenarioParams& sp,
                      rng::Stream& rs);

// Slab partitioned into contiguous depth intervals, one medium each.
// Layer i occupies [z_hi of layer i-1, z_hi of layer i); depths beyond
// the last break use the last layer.
struct MediumStack {
  struct Layer {
    double z_hi;
    Medium medium;
  };
  std::vector<Layer> layers;

  static MediumStack uniform(Medium m);

  int index_at(double z) const;
  const Medium& at(double z) const { return layers[index_at(z)].medium; }

  std::vector<std::string> check(const std::string& path = "layers") const;
  void validate() const;
};

}  // namespace protx
