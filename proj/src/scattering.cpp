#include "protx/scattering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace protx {

double XsLaw::eval(double e) const {
  if (sigma_ref <= 0.0) return 0.0;
  if (q_exp == 0.0) return sigma_ref;
  return sigma_ref * std::pow(e / e_ref, q_exp);
}

std::vector<std::string> XsLaw::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (sigma_ref < 0.0) errs.push_back(path + ".sigma_ref: must be >= 0");
  if (!(e_ref > 0.0)) errs.push_back(path + ".e_ref: must be > 0");
  return errs;
}

CrossSections CrossSections::uniform(MediumXs xs) {
  CrossSections c;
  c.regions.push_back(xs);
  return c;
}

int CrossSections::region_at(double z) const {
  const int n = static_cast<int>(regions.size());
  for (int i = 0; i < n - 1; ++i)
    if (z < z_breaks[i]) return i;
  return n - 1;
}

double CrossSections::sigma_e(double z, double e) const {
  return regions[region_at(z)].elastic.eval(e);
}

double CrossSections::sigma_ne(double z, double e) const {
  return regions[region_at(z)].nonelastic.eval(e);
}

double CrossSections::total(double z, double e) const {
  const MediumXs& r = regions[region_at(z)];
  return r.elastic.eval(e) + r.nonelastic.eval(e);
}

double CrossSections::max_total(double e_min, double e_max) const {
  // Power laws are monotone in E, so the max over the window sits at an
  // endpoint of each region.
  double bound = 0.0;
  for (const MediumXs& r : regions) {
    const double lo = r.elastic.eval(e_min) + r.nonelastic.eval(e_min);
    const double hi = r.elastic.eval(e_max) + r.nonelastic.eval(e_max);
    bound = std::max({bound, lo, hi});
  }
  return bound;
}

std::vector<std::string> CrossSections::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (regions.empty()) {
    errs.push_back(path + ": at least one region required");
    return errs;
  }
  if (z_breaks.size() + 1 != regions.size())
    errs.push_back(path + ".z_breaks: need exactly regions-1 break depths");
  for (std::size_t i = 0; i + 1 < z_breaks.size(); ++i)
    if (!(z_breaks[i] < z_breaks[i + 1]))
      errs.push_back(path + ".z_breaks: must be strictly increasing");
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    auto a = regions[i].elastic.check(p + ".sigma_e");
    auto b = regions[i].nonelastic.check(p + ".sigma_ne");
    errs.insert(errs.end(), a.begin(), a.end());
    errs.insert(errs.end(), b.begin(), b.end());
  }
  return errs;
}

void CrossSections::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

double total_rate(const PhaseState& state, const CrossSections& xs) {
  if (!state.alive)
    throw std::invalid_argument("total_rate: cemetery state");
  return xs.total(state.position.z, state.energy);
}

std::vector<std::string> KernelParams::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(kappa_e > 0.0)) errs.push_back(path + ".kappa_e: must be > 0");
  if (!(kappa_ne > 0.0)) errs.push_back(path + ".kappa_ne: must be > 0");
  if (!(ne_frac_min > 0.0 && ne_frac_min <= ne_frac_max && ne_frac_max <= 1.0))
    errs.push_back(path + ".ne_frac: need 0 < ne_frac_min <= ne_frac_max <= 1");
  return errs;
}

void KernelParams::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

namespace {

// Orthonormal pair perpendicular to a unit vector.
void tangent_frame(const Vec3& w, Vec3& u, Vec3& v) {
  const Vec3 pick = std::abs(w.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  u = w.cross(pick).normalized();
  v = w.cross(u);
}

}  // namespace

Vec3 sample_vmf(const Vec3& mean, double kappa, rng::Stream& rs) {
  // Exact inversion for the cosine: c = 1 + log(u + (1-u) e^{-2k}) / k.
  const double u = rs.uniform_open();
  double c;
  if (kappa < 1e-12) {
    c = 2.0 * u - 1.0;
  } else {
    c = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
  }
  c = std::clamp(c, -1.0, 1.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double phi = 2.0 * M_PI * rs.uniform();
  Vec3 t1, t2;
  tangent_frame(mean, t1, t2);
  const Vec3 out = mean * c + t1 * (s * std::cos(phi)) + t2 * (s * std::sin(phi));
  return out.normalized();
}

double vmf_cos_density(double c, double kappa) {
  if (c < -1.0 || c > 1.0) return 0.0;
  if (kappa < 1e-12) return 0.5;
  // kappa e^{kappa c} / (2 sinh kappa), written overflow-safe.
  return kappa * std::exp(kappa * (c - 1.0)) / (1.0 - std::exp(-2.0 * kappa));
}

double vmf_cos_cdf(double c, double kappa) {
  if (c <= -1.0) return 0.0;
  if (c >= 1.0) return 1.0;
  if (kappa < 1e-12) return 0.5 * (c + 1.0);
  if (kappa > 350.0) return std::exp(kappa * (c - 1.0));
  return std::expm1(kappa * (c + 1.0)) / std::expm1(2.0 * kappa);
}

Transition sample_transition(const PhaseState& state, const CrossSections& xs,
                             const KernelParams& params, rng::Stream& rs) {
  const double z = state.position.z;
  const double se = xs.sigma_e(z, state.energy);
  const double sn = xs.sigma_ne(z, state.energy);
  const double sigma_total = se + sn;
  if (!(sigma_total > 0.0))
    throw std::logic_error("sample_transition: total rate is zero");

  Transition tr;
  if (rs.uniform() * sigma_total < se) {
    tr.elastic = true;
    tr.energy = state.energy;  // Dirac branch: conserved bit-exactly
    tr.direction = sample_vmf(state.direction, params.kappa_e, rs);
  } else {
    tr.elastic = false;
    tr.energy = state.energy *
                rs.uniform(params.ne_frac_min, params.ne_frac_max);
    tr.direction = sample_vmf(state.direction, params.kappa_ne, rs);
  }
  return tr;
}

namespace {

// Composite Simpson over [a, b] with n intervals (n rounded up to even).
template <typename F>
double simpson(F f, double a, double b, int n) {
  if (n < 2) n = 2;
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

double kernel_mass(const PhaseState& state, const CrossSections& xs,
                   const KernelParams& params, int resolution) {
  const double z = state.position.z;
  const double se = xs.sigma_e(z, state.energy);
  const double sn = xs.sigma_ne(z, state.energy);
  const double sigma_total = se + sn;
  if (!(sigma_total > 0.0))
    throw std::logic_error("kernel_mass: total rate is zero");

  // Angular mass: azimuthal symmetry reduces the sphere integral to the
  // cosine marginal on [-1, 1].
  auto angular = [&](double kappa) {
    return simpson([kappa](double c) { return vmf_cos_density(c, kappa); },
                   -1.0, 1.0, resolution);
  };

  const double w_e = se / sigma_total;
  const double w_ne = sn / sigma_total;

  double mass = 0.0;
  if (w_e > 0.0) {
    // Elastic branch: Dirac in energy integrates analytically to 1.
    mass += w_e * angular(params.kappa_e);
  }
  if (w_ne > 0.0) {
    double energy_mass = 1.0;
    const double lo = params.ne_frac_min * state.energy;
    const double hi = params.ne_frac_max * state.energy;
    if (hi > lo) {
      const double density = 1.0 / (hi - lo);
      energy_mass = simpson([density](double) { return density; }, lo, hi,
                            resolution);
    }
    mass += w_ne * angular(params.kappa_ne) * energy_mass;
  }
  return mass;
}

}  // namespace protx
