#include "protx/phase_space.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace protx {

std::vector<std::string> EnergyWindow::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(e_min > 0.0)) errs.push_back(path + ".e_min: must be > 0");
  if (!(e_min < e_max)) errs.push_back(path + ".e_max: must exceed e_min");
  return errs;
}

void EnergyWindow::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

SpatialDomain::FaceProbe SpatialDomain::nearest_face(const Vec3& p) const {
  // Candidate faces as (exterior distance, outward normal); the largest
  // exterior distance identifies the binding face.
  FaceProbe best{-std::numeric_limits<double>::infinity(), {0, 0, 1}};
  auto consider = [&best](double d, Vec3 n) {
    if (d > best.exterior_distance) best = {d, n};
  };
  consider(p.z - extent.z, {0, 0, 1});
  consider(-p.z, {0, 0, -1});
  if (kind == DomainKind::Box3D) {
    consider(p.x - 0.5 * extent.x, {1, 0, 0});
    consider(-0.5 * extent.x - p.x, {-1, 0, 0});
    consider(p.y - 0.5 * extent.y, {0, 1, 0});
    consider(-0.5 * extent.y - p.y, {0, -1, 0});
  }
  return best;
}

std::vector<std::string> SpatialDomain::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(extent.z > 0.0)) errs.push_back(path + ".extent.z: must be > 0");
  if (kind == DomainKind::Box3D) {
    if (!(extent.x > 0.0)) errs.push_back(path + ".extent.x: must be > 0");
    if (!(extent.y > 0.0)) errs.push_back(path + ".extent.y: must be > 0");
  }
  return errs;
}

void SpatialDomain::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

BoundaryClass classify(const PhaseState& state, const SpatialDomain& domain,
                       const EnergyWindow& window) {
  if (!state.alive)
    throw std::invalid_argument("classify: cemetery state has no class");
  if (state.energy <= window.e_min) return BoundaryClass::GammaPlus;
  if (state.energy >= window.e_max) return BoundaryClass::GammaMinus;
  const auto face = domain.nearest_face(state.position);
  constexpr double eps = 1e-9;  // cm
  if (face.exterior_distance < -eps) return BoundaryClass::Interior;
  return state.direction.dot(face.normal) >= 0.0 ? BoundaryClass::GammaPlus
                                                 : BoundaryClass::GammaMinus;
}

const char* to_string(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::Interior: return "Interior";
    case BoundaryClass::GammaMinus: return "GammaMinus";
    case BoundaryClass::GammaPlus: return "GammaPlus";
  }
  return "?";
}

namespace {

// Fraction t in (0, 1] at which coordinate a + t*(b-a) reaches `face`,
// or +inf if the segment never reaches it going toward the outside.
double crossing_fraction(double a, double b, double face) {
  const double d = b - a;
  if (d == 0.0) return std::numeric_limits<double>::infinity();
  const double t = (face - a) / d;
  if (t <= 0.0 || t > 1.0) return std::numeric_limits<double>::infinity();
  return t;
}

}  // namespace

std::optional<ExitCrossing> exit_test(const PhaseState& previous,
                                      const PhaseState& next,
                                      const SpatialDomain& domain,
                                      const EnergyWindow& window) {
  const double inf = std::numeric_limits<double>::infinity();

  double t_energy = inf;
  if (next.energy <= window.e_min)
    t_energy = crossing_fraction(previous.energy, next.energy, window.e_min);

  double t_space = inf;
  int axis = -1;        // 0:x 1:y 2:z
  double face = 0.0;
  auto consider = [&](double a, double b, double f, int ax) {
    const bool beyond = (f >= a) ? (b >= f) : (b <= f);
    if (!beyond) return;
    const double t = crossing_fraction(a, b, f);
    if (t < t_space) {
      t_space = t;
      axis = ax;
      face = f;
    }
  };
  consider(previous.position.z, next.position.z, domain.extent.z, 2);
  consider(previous.position.z, next.position.z, 0.0, 2);
  if (domain.kind == DomainKind::Box3D) {
    consider(previous.position.x, next.position.x, 0.5 * domain.extent.x, 0);
    consider(previous.position.x, next.position.x, -0.5 * domain.extent.x, 0);
    consider(previous.position.y, next.position.y, 0.5 * domain.extent.y, 1);
    consider(previous.position.y, next.position.y, -0.5 * domain.extent.y, 1);
  }

  if (t_energy == inf && t_space == inf) return std::nullopt;

  ExitCrossing out;
  out.energy_exhausted = t_energy <= t_space;  // ties count as range-out
  const double t = out.energy_exhausted ? t_energy : t_space;
  out.frac = t;

  PhaseState s = previous;
  s.position = previous.position + (next.position - previous.position) * t;
  s.energy = previous.energy + (next.energy - previous.energy) * t;
  s.direction = previous.direction;  // direction of travel on the segment
  if (out.energy_exhausted) {
    s.energy = window.e_min;  // land exactly on the floor
  } else {
    // Snap the crossed coordinate onto the face to avoid rounding outside.
    if (axis == 0) s.position.x = face;
    if (axis == 1) s.position.y = face;
    if (axis == 2) s.position.z = face;
  }
  out.state = s;
  return out;
}

}  // namespace protx
