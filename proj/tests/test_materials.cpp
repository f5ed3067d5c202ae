#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protx/materials.hpp"

using namespace protx;

namespace {

// Independent scalar oracle for the power law, kept separate from the
// library path on purpose.
double oracle_range(double alpha, double p, double e0) {
  return alpha * std::exp(p * std::log(e0));
}

}  // namespace

TEST_CASE("range follows the power law") {
  const Medium water = builtin_medium("water");
  CHECK(range_cm(water, 150.0) ==
        doctest::Approx(oracle_range(0.00246, 1.75, 150.0)).epsilon(1e-12));
  CHECK(range_cm(water, 150.0) == doctest::Approx(15.8).epsilon(0.01));

  Medium identity{"id", 1.0, 1.0, 1.0, 1.0};
  CHECK(range_cm(identity, 5.0) == doctest::Approx(5.0).epsilon(1e-14));

  const Medium muscle = builtin_medium("muscle");
  CHECK(range_cm(muscle, 100.0) ==
        doctest::Approx(oracle_range(0.0021, 1.75, 100.0)).epsilon(1e-12));
  CHECK(range_cm(muscle, 100.0) == doctest::Approx(6.65).epsilon(0.01));

  CHECK_THROWS_AS(range_cm(water, -1.0), std::domain_error);

  // Strictly increasing in energy.
  double prev = 0.0;
  for (double e = 1.0; e <= 250.0; e += 1.0) {
    const double r = range_cm(water, e);
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("energy at depth inverts the residual range") {
  const Medium water = builtin_medium("water");
  const double r0 = range_cm(water, 150.0);
  CHECK(energy_at_depth(water, 150.0, 0.0) == doctest::Approx(150.0).epsilon(1e-12));
  CHECK(energy_at_depth(water, 150.0, r0) == 0.0);
  CHECK(energy_at_depth(water, 150.0, r0 + 1.0) == 0.0);
  CHECK(energy_at_depth(water, 150.0, 0.5 * r0) ==
        doctest::Approx(100.9).epsilon(0.001));

  // Residual-range identity: R(E(z)) = R(e0) - z.
  for (double frac : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    const double z = frac * r0;
    const double e = energy_at_depth(water, 150.0, z);
    CHECK(range_cm(water, e) == doctest::Approx(r0 - z).epsilon(1e-10));
  }
}

TEST_CASE("stopping power: Bragg-Kleeman with screening clamp") {
  const Medium water = builtin_medium("water");
  // 1/(alpha p) * E^(1-p) evaluated independently.
  const double expected =
      std::exp((1.0 - 1.75) * std::log(150.0)) / (0.00246 * 1.75);
  CHECK(stopping_power(water, 150.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(stopping_power(water, 150.0) == doctest::Approx(5.42).epsilon(0.01));

  Medium flat{"flat", 0.37, 1.0, 1.0, 1.0};
  CHECK(stopping_power(flat, 3.0) == doctest::Approx(1.0 / 0.37).epsilon(1e-14));
  CHECK(stopping_power(flat, 87.0) == doctest::Approx(1.0 / 0.37).epsilon(1e-14));

  // Clamp below e_screen.
  CHECK(stopping_power(water, 0.5 * water.e_screen) ==
        stopping_power(water, water.e_screen));
  CHECK(std::isfinite(stopping_power(water, 0.0)));
  CHECK(stopping_power(water, 0.0) > 0.0);

  // Monotone non-increasing for p > 1, sampled over a grid.
  double prev = stopping_power(water, 0.1);
  for (double e = 0.2; e <= 250.0; e += 0.1) {
    const double s = stopping_power(water, e);
    CHECK(s <= prev + 1e-15);
    prev = s;
  }
}

TEST_CASE("dE/dz integration recovers the range") {
  // Integrate dE/dz = -S(E) from e0 down to e_screen with a fine RK4 and
  // compare the accumulated depth with the closed-form range.
  const Medium water = builtin_medium("water");
  const double e0 = 150.0;
  double e = e0;
  double z = 0.0;
  const double dz = 1e-4;
  while (e > water.e_screen) {
    auto f = [&](double energy) { return -stopping_power(water, energy); };
    const double k1 = f(e);
    const double k2 = f(std::max(e + 0.5 * dz * k1, 1e-12));
    const double k3 = f(std::max(e + 0.5 * dz * k2, 1e-12));
    const double k4 = f(std::max(e + dz * k3, 1e-12));
    e += dz / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    z += dz;
  }
  CHECK(z == doctest::Approx(range_cm(water, e0)).epsilon(0.005));
}

TEST_CASE("medium validation") {
  Medium bad = builtin_medium("water");
  bad.p = 2.5;
  const auto errs = bad.check("media.water");
  REQUIRE(errs.size() == 1);
  CHECK(errs.front().find("media.water.p") != std::string::npos);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("perturb_medium: zero sigmas reproduce the input") {
  const Medium water = builtin_medium("water");
  ScenarioParams sp{0.0, 0.0, 0.2};
  rng::Stream rs(7, 0);
  const Medium out = perturb_medium(water, sp, rs);
  CHECK(out.rho == water.rho);
  CHECK(out.alpha == water.alpha);
}

TEST_CASE("perturb_medium: truncated-Gaussian statistics") {
  const Medium water = builtin_medium("water");
  ScenarioParams sp{0.03, 0.03, 0.2};
  const int n = 10000;
  double acc = 0.0, acc_sq = 0.0;
  double min_rho = 1e30;
  for (int i = 0; i < n; ++i) {
    rng::Stream rs(42, static_cast<std::uint64_t>(i));
    const Medium m = perturb_medium(water, sp, rs);
    acc += m.rho;
    acc_sq += m.rho * m.rho;
    min_rho = std::min(min_rho, m.rho);
    CHECK(m.rho > 0.0);
    CHECK(std::abs(m.rho / water.rho - 1.0) <= sp.truncation + 1e-15);
  }
  const double mean = acc / n;
  const double sd = std::sqrt(std::max(0.0, acc_sq / n - mean * mean));
  // Truncation at 6.7 sigma is immaterial: mean within 3 standard errors.
  CHECK(std::abs(mean - water.rho) <= 3.0 * sd / std::sqrt(double(n)));
  CHECK(min_rho > 0.0);
}

TEST_CASE("medium stack lookup") {
  MediumStack stack;
  stack.layers.push_back({2.0, builtin_medium("water")});
  stack.layers.push_back({5.0, builtin_medium("bone")});
  stack.layers.push_back({std::numeric_limits<double>::infinity(),
                          builtin_medium("lung")});
  CHECK(stack.check().empty());
  CHECK(stack.at(0.0).name == "water");
  CHECK(stack.at(1.999).name == "water");
  CHECK(stack.at(2.0).name == "bone");
  CHECK(stack.at(4.999).name == "bone");
  CHECK(stack.at(5.0).name == "lung");
  CHECK(stack.at(100.0).name == "lung");
}
