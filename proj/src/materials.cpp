#include "protx/materials.hpp"

#include <limits>
#include <stdexcept>

namespace protx {

std::vector<std::string> Medium::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(alpha > 0.0)) errs.push_back(path + ".alpha: must be > 0");
  if (!(p >= 1.0 && p <= 2.0)) errs.push_back(path + ".p: must be in [1, 2]");
  if (!(rho > 0.0)) errs.push_back(path + ".rho: must be > 0");
  if (!(e_screen > 0.0)) errs.push_back(path + ".e_screen: must be > 0");
  return errs;
}

void Medium::validate() const {
  const auto errs = check(name.empty() ? "medium" : "media." + name);
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

const std::vector<Medium>& builtin_media() {
  static const std::vector<Medium> media = {
      {"water", 0.00246, 1.75, 1.00, 1.0},
      {"muscle", 0.0021, 1.75, 1.05, 1.0},
      {"bone", 0.0011, 1.77, 1.85, 1.0},
      {"lung", 0.0033, 1.74, 0.26, 1.0},
  };
  return media;
}

const Medium& builtin_medium(const std::string& name) {
  for (const auto& m : builtin_media())
    if (m.name == name) return m;
  throw std::invalid_argument("unknown built-in medium: " + name);
}

std::vector<std::string> ScenarioParams::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (density_rel_sigma < 0.0)
    errs.push_back(path + ".density_rel_sigma: must be >= 0");
  if (alpha_rel_sigma < 0.0)
    errs.push_back(path + ".alpha_rel_sigma: must be >= 0");
  if (!(truncation > 0.0 && truncation < 1.0))
    errs.push_back(path + ".truncation: must be in (0, 1)");
  return errs;
}

void ScenarioParams::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

double truncated_normal(double sigma, double truncation, rng::Stream& rs) {
  if (sigma == 0.0) return 0.0;
  double x;
  do {
    x = sigma * rs.normal();
  } while (std::abs(x) > truncation);
  return x;
}

Medium perturb_medium(const Medium& m, const ScenarioParams& sp,
                      rng::Stream& rs) {
  Medium out = m;
  out.rho = m.rho * (1.0 + truncated_normal(sp.density_rel_sigma,
                                            sp.truncation, rs));
  out.alpha = m.alpha * (1.0 + truncated_normal(sp.alpha_rel_sigma,
                                                sp.truncation, rs));
  return out;
}

MediumStack MediumStack::uniform(Medium m) {
  MediumStack s;
  s.layers.push_back({std::numeric_limits<double>::infinity(), std::move(m)});
  return s;
}

int MediumStack::index_at(double z) const {
  const int n = static_cast<int>(layers.size());
  for (int i = 0; i < n - 1; ++i)
    if (z < layers[i].z_hi) return i;
  return n - 1;
}

std::vector<std::string> MediumStack::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (layers.empty()) {
    errs.push_back(path + ": at least one layer required");
    return errs;
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (!(layers[i].z_hi < layers[i + 1].z_hi))
      errs.push_back(path + "[" + std::to_string(i + 1) +
                     "].z_hi: breaks must be strictly increasing");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto sub = layers[i].medium.check(path + "[" + std::to_string(i) + "]");
    errs.insert(errs.end(), sub.begin(), sub.end());
  }
  return errs;
}

void MediumStack::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

}  // namespace protx
