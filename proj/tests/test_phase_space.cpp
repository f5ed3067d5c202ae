#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protx/phase_space.hpp"

using namespace protx;

namespace {

PhaseState make_state(Vec3 pos, Vec3 dir, double e) {
  PhaseState s;
  s.position = pos;
  s.direction = dir.normalized();
  s.energy = e;
  return s;
}

const SpatialDomain slab{DomainKind::Slab1D, {10.0, 10.0, 8.5}};
const EnergyWindow window{1.0, 150.0};

}  // namespace

TEST_CASE("classify: boundary decomposition") {
  // Exit face, outgoing component: Gamma+.
  CHECK(classify(make_state({0, 0, 8.5}, {std::sqrt(0.75), 0, 0.5}, 80.0), slab,
                 window) == BoundaryClass::GammaPlus);
  // Interior point at the energy floor: Gamma+ (energy exhaustion).
  CHECK(classify(make_state({0, 0, 4.0}, {0, 0, 1}, window.e_min), slab,
                 window) == BoundaryClass::GammaPlus);
  // Entry face, incoming: Gamma-.
  CHECK(classify(make_state({0, 0, 0.0}, {0, 0, 1}, 80.0), slab, window) ==
        BoundaryClass::GammaMinus);
  // Interior point at the energy ceiling: Gamma- (energy branch).
  CHECK(classify(make_state({0, 0, 4.0}, {0, 0, 1}, window.e_max), slab,
                 window) == BoundaryClass::GammaMinus);
  // Strictly interior: Interior.
  CHECK(classify(make_state({0, 0, 4.0}, {0, 0, 1}, 80.0), slab, window) ==
        BoundaryClass::Interior);
  // The omega.n = 0 tie belongs to Gamma+.
  CHECK(classify(make_state({0, 0, 8.5}, {1, 0, 0}, 80.0), slab, window) ==
        BoundaryClass::GammaPlus);
  // Cemetery input is a contract violation.
  CHECK_THROWS_AS(classify(PhaseState::cemetery(), slab, window),
                  std::invalid_argument);
}

TEST_CASE("classify is total over sampled states") {
  for (double z : {0.0, 1e-12, 0.3, 4.0, 8.4999, 8.5}) {
    for (double e : {1.0, 1.0001, 75.0, 149.999, 150.0}) {
      for (double dz : {-1.0, -0.5, 0.5, 1.0}) {
        const auto c =
            classify(make_state({0, 0, z}, {0, 0, dz}, e), slab, window);
        CHECK((c == BoundaryClass::Interior || c == BoundaryClass::GammaMinus ||
               c == BoundaryClass::GammaPlus));
      }
    }
  }
}

TEST_CASE("box domain faces") {
  const SpatialDomain box{DomainKind::Box3D, {4.0, 4.0, 8.5}};
  CHECK(classify(make_state({1.9, 0, 4.0}, {0, 0, 1}, 80.0), box, window) ==
        BoundaryClass::Interior);
  CHECK(classify(make_state({2.0, 0, 4.0}, {1, 0, 0}, 80.0), box, window) ==
        BoundaryClass::GammaPlus);
  CHECK(classify(make_state({-2.0, 0, 4.0}, {1, 0, 0}, 80.0), box, window) ==
        BoundaryClass::GammaMinus);
  CHECK(classify(make_state({0, 2.0, 4.0}, {0, 1, 0}, 80.0), box, window) ==
        BoundaryClass::GammaPlus);
}

TEST_CASE("exit_test: interior step yields none") {
  const auto prev = make_state({0, 0, 4.0}, {0, 0, 1}, 80.0);
  const auto next = make_state({0, 0, 4.01}, {0, 0, 1}, 79.9);
  CHECK(!exit_test(prev, next, slab, window).has_value());
}

TEST_CASE("exit_test: spatial crossing is interpolated") {
  const auto prev = make_state({0, 0, 8.4}, {0, 0, 1}, 50.0);
  const auto next = make_state({0, 0, 8.6}, {0, 0, 1}, 49.0);
  const auto cross = exit_test(prev, next, slab, window);
  REQUIRE(cross.has_value());
  CHECK(!cross->energy_exhausted);
  CHECK(cross->frac == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cross->state.position.z == doctest::Approx(8.5).epsilon(1e-14));
  CHECK(cross->state.energy == doctest::Approx(49.5).epsilon(1e-12));
  CHECK(classify(cross->state, slab, window) == BoundaryClass::GammaPlus);
}

TEST_CASE("exit_test: energy floor crossing") {
  // Linear-in-length energy decrement; solve for the crossing fraction.
  const auto prev = make_state({0, 0, 4.0}, {0, 0, 1}, 1.4);
  const auto next = make_state({0, 0, 4.01}, {0, 0, 1}, 0.6);
  const auto cross = exit_test(prev, next, slab, window);
  REQUIRE(cross.has_value());
  CHECK(cross->energy_exhausted);
  const double expected_frac = (1.4 - 1.0) / (1.4 - 0.6);
  CHECK(cross->frac == doctest::Approx(expected_frac).epsilon(1e-12));
  CHECK(cross->state.energy == window.e_min);
  CHECK(cross->state.position.z ==
        doctest::Approx(4.0 + 0.01 * expected_frac).epsilon(1e-12));
  CHECK(classify(cross->state, slab, window) == BoundaryClass::GammaPlus);
}

TEST_CASE("exit_test: earliest crossing wins") {
  // Spatial face at frac 0.1, energy floor at frac 0.5: spatial first.
  const auto prev = make_state({0, 0, 8.49}, {0, 0, 1}, 1.4);
  const auto next = make_state({0, 0, 8.59}, {0, 0, 1}, 0.6);
  const auto cross = exit_test(prev, next, slab, window);
  REQUIRE(cross.has_value());
  CHECK(!cross->energy_exhausted);
  CHECK(cross->frac == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(cross->state.position.z == doctest::Approx(8.5).epsilon(1e-12));
}

TEST_CASE("direction renormalization is idempotent") {
  const Vec3 v = Vec3{0.3, -0.4, 0.87}.normalized();
  const Vec3 w = v.normalized();
  CHECK(std::abs(w.x - v.x) < 1e-15);
  CHECK(std::abs(w.y - v.y) < 1e-15);
  CHECK(std::abs(w.z - v.z) < 1e-15);
  CHECK(std::abs(v.norm() - 1.0) < 1e-15);
}
