#pragma once
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace protx {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

// A proton's point in phase space, or the absorbing cemetery marker
// (alive == false). Dead states contribute nothing to any tally.
struct PhaseState {
  Vec3 position;             // cm
  Vec3 direction{0, 0, 1};   // unit vector
  double energy = 0.0;       // MeV
  bool alive = true;

  static PhaseState cemetery() {
    PhaseState s;
    s.alive = false;
    return s;
  }
};

struct EnergyWindow {
  double e_min = 1.0;
  double e_max = 150.0;

  bool contains(double e) const { return e > e_min && e < e_max; }
  std::vector<std::string> check(const std::string& path = "window") const;
  void validate() const;
};

enum class DomainKind { Slab1D, Box3D };

// Slab1D: depth interval [0, extent.z]; x and y are ignored.
// Box3D:  [-extent.x/2, extent.x/2] x [-extent.y/2, extent.y/2] x [0, extent.z];
//         the beam axis is +z with entry at the z = 0 face.
struct SpatialDomain {
  DomainKind kind = DomainKind::Slab1D;
  Vec3 extent{10.0, 10.0, 8.5};

  // Signed exterior distance to the nearest face (negative inside) and
  // the outward normal of that face.
  struct FaceProbe {
    double exterior_distance;
    Vec3 normal;
  };
  FaceProbe nearest_face(const Vec3& p) const;

  bool strictly_inside(const Vec3& p, double eps = 1e-9) const {
    return nearest_face(p).exterior_distance < -eps;
  }

  std::vector<std::string> check(const std::string& path = "geometry") const;
  void validate() const;
};

enum class BoundaryClass { Interior, GammaMinus, GammaPlus };

// Classification against the inflow/outflow decomposition:
//   Gamma+ : omega.n >= 0 on the spatial boundary, or E <= e_min,
//   Gamma- : omega.n <  0 on the spatial boundary, or E >= e_max.
// Precedence when branches overlap: energy exhaustion first, then the
// E_max branch, then the spatial test (the omega.n = 0 tie goes to
// Gamma+ as written). Throws std::invalid_argument for cemetery input.
BoundaryClass classify(const PhaseState& state, const SpatialDomain& domain,
                       const EnergyWindow& window);

const char* to_string(BoundaryClass c);

// Crossing found by exit_test: the interpolated boundary state, the
// fraction of the step at which it occurs, and which constraint fired.
struct ExitCrossing {
  PhaseState state;
  double frac;             // in (0, 1]
  bool energy_exhausted;   // true: E reached e_min; false: left the domain
};

// Locates the first boundary crossing on the segment previous -> next by
// linear interpolation of position and energy; the crossing keeps the
// segment's travel direction. Returns nullopt if next is still interior
// with E above the floor.
std::optional<ExitCrossing> exit_test(const PhaseState& previous,
                                      const PhaseState& next,
                                      const SpatialDomain& domain,
                                      const EnergyWindow& window);

}  // namespace protx
