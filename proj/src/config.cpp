#include "protx/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace protx {

using nlohmann::json;

json default_config_json() {
  json j;
  j["media"] = json::object();
  for (const Medium& m : builtin_media()) {
    j["media"][m.name] = {{"alpha", m.alpha},
                          {"p", m.p},
                          {"rho", m.rho},
                          {"e_screen", m.e_screen}};
  }
  j["geometry"] = {{"kind", "slab-1d"},
                   {"extent", {10.0, 10.0, 8.5}},
                   {"layers", {{{"medium", "water"}}}}};
  j["window"] = {{"e_min", 1.0}, {"e_max", 150.0}};
  j["source"] = {{"position", {0.0, 0.0, 0.0}},
                 {"direction", {0.0, 0.0, 1.0}},
                 {"beams",
                  {{{"energy_mean", 105.0},
                    {"energy_sigma", 1.0},
                    {"weight", 1.0}}}}};
  // Per-medium cross sections; zero by default (pure CSDA).
  j["scattering"] = {
      {"per_medium", json::object()},
      {"kernel",
       {{"kappa_e", 1.0e4},
        {"kappa_ne", 20.0},
        {"ne_frac_min", 0.5},
        {"ne_frac_max", 0.9}}}};
  j["sim"] = {{"step_len", 0.01}, {"mu", 0.0},      {"max_track_len", 100.0},
              {"seed", 12345},    {"n_particles", 100000},
              {"mode", "1d"},     {"threads", 0}};
  j["grid"] = {{"n_z", 85}, {"n_e", 149}, {"n_angle", 0}};
  j["mesh"] = {{"n_z", 2501}, {"n_e", 150}, {"cfl_safety", 1.0}};
  j["prescription"] = {{"level", 1.0}, {"z_lo", 3.0},   {"z_hi", 6.0},
                       {"w_in", 1.0},  {"w_out", 0.1}};
  j["bank"] = {{"linspace",
                {{"n", 20},
                 {"e_lo", 58.0},
                 {"e_hi", 88.0},
                 {"sigma", 1.5},
                 {"weight", 1.0}}}};
  j["optimizer"] = {{"alpha_reg", 1e-4},
                    {"step_rule", "backtracking"},
                    {"tau0", 1.0},
                    {"decay_k0", 20.0},
                    {"armijo_c", 1e-4},
                    {"shrink", 0.5},
                    {"tol_eps", 1e-8},
                    {"max_iters", 20000},
                    {"n_mc", 20000},
                    {"n_scenarios", 1},
                    {"gradient_mode", "influence"},
                    {"forward_model", "pde"},
                    {"g_max", 0.0}};
  j["scenario"] = {{"density_rel_sigma", 0.0},
                   {"alpha_rel_sigma", 0.0},
                   {"truncation", 0.2}};
  j["q_factor"] = 1.0;
  j["duality"] = {{"tolerance", 0.05}};
  j["output"] = {{"dir", "out"}};
  return j;
}

namespace {

// Collects "path: message" items; get<T> records a type error and
// returns the fallback so validation can keep going.
struct Reader {
  std::vector<std::string> errors;

  template <typename T>
  T get(const json& j, const std::string& path, T fallback) {
    const json* node = resolve(j, path);
    if (!node) return fallback;
    try {
      return node->get<T>();
    } catch (const json::exception&) {
      errors.push_back(path + ": wrong type (" + node->dump() + ")");
      return fallback;
    }
  }

  const json* resolve(const json& j, const std::string& path) {
    const json* cur = &j;
    std::istringstream ss(path);
    std::string key;
    while (std::getline(ss, key, '.')) {
      if (!cur->is_object() || !cur->contains(key)) return nullptr;
      cur = &(*cur)[key];
    }
    return cur;
  }

  Vec3 get_vec3(const json& j, const std::string& path, Vec3 fallback) {
    const json* node = resolve(j, path);
    if (!node) return fallback;
    if (!node->is_array() || node->size() != 3) {
      errors.push_back(path + ": expected an array of 3 numbers");
      return fallback;
    }
    try {
      return {(*node)[0].get<double>(), (*node)[1].get<double>(),
              (*node)[2].get<double>()};
    } catch (const json::exception&) {
      errors.push_back(path + ": expected an array of 3 numbers");
      return fallback;
    }
  }
};

void apply_override(json& j, const std::string& spec,
                    std::vector<std::string>& errors) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) {
    errors.push_back("--set " + spec + ": expected path=value");
    return;
  }
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // keep as string
  }
  json* cur = &j;
  std::istringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  if (keys.empty()) {
    errors.push_back("--set " + spec + ": empty path");
    return;
  }
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) cur = &(*cur)[keys[i]];
  (*cur)[keys.back()] = parsed;
}

XsLaw read_xs_law(Reader& r, const json& node, const std::string& path) {
  XsLaw law;
  law.sigma_ref = r.get<double>(node, "sigma_ref", law.sigma_ref);
  law.e_ref = r.get<double>(node, "e_ref", law.e_ref);
  law.q_exp = r.get<double>(node, "q_exp", law.q_exp);
  auto errs = law.check(path);
  r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  return law;
}

}  // namespace

RunConfig config_from_json(json user, const std::vector<std::string>& overrides) {
  json merged = default_config_json();
  merged.merge_patch(user);

  std::vector<std::string> errors;
  for (const auto& o : overrides) apply_override(merged, o, errors);

  Reader r;
  r.errors = std::move(errors);
  RunConfig cfg;
  cfg.raw = merged;

  // --- media ---
  if (merged.contains("media") && merged["media"].is_object()) {
    for (auto it = merged["media"].begin(); it != merged["media"].end(); ++it) {
      Medium m;
      m.name = it.key();
      const std::string base = "media." + it.key();
      m.alpha = r.get<double>(it.value(), "alpha", m.alpha);
      m.p = r.get<double>(it.value(), "p", m.p);
      m.rho = r.get<double>(it.value(), "rho", m.rho);
      m.e_screen = r.get<double>(it.value(), "e_screen", m.e_screen);
      auto errs = m.check(base);
      r.errors.insert(r.errors.end(), errs.begin(), errs.end());
      cfg.media[m.name] = m;
    }
  } else {
    r.errors.push_back("media: must be an object");
  }

  // --- geometry ---
  const std::string kind = r.get<std::string>(merged, "geometry.kind", "slab-1d");
  if (kind == "slab-1d") {
    cfg.domain.kind = DomainKind::Slab1D;
  } else if (kind == "box-3d") {
    cfg.domain.kind = DomainKind::Box3D;
  } else {
    r.errors.push_back("geometry.kind: must be slab-1d or box-3d");
  }
  cfg.domain.extent = r.get_vec3(merged, "geometry.extent", cfg.domain.extent);
  {
    auto errs = cfg.domain.check("geometry");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }
  const json* layers = r.resolve(merged, "geometry.layers");
  if (layers && layers->is_array() && !layers->empty()) {
    double prev_hi = 0.0;
    for (std::size_t i = 0; i < layers->size(); ++i) {
      const json& L = (*layers)[i];
      const std::string base = "geometry.layers[" + std::to_string(i) + "]";
      const std::string med = r.get<std::string>(L, "medium", "water");
      MediumStack::Layer layer;
      layer.z_hi = r.get<double>(
          L, "z_hi",
          i + 1 == layers->size() ? std::numeric_limits<double>::infinity()
                                  : prev_hi);
      if (cfg.media.count(med)) {
        layer.medium = cfg.media[med];
      } else {
        r.errors.push_back(base + ".medium: unknown medium '" + med + "'");
      }
      prev_hi = layer.z_hi;
      cfg.stack.layers.push_back(layer);
    }
    auto errs = cfg.stack.check("geometry.layers");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  } else {
    r.errors.push_back("geometry.layers: must be a non-empty array");
  }

  // --- window ---
  cfg.window.e_min = r.get<double>(merged, "window.e_min", cfg.window.e_min);
  cfg.window.e_max = r.get<double>(merged, "window.e_max", cfg.window.e_max);
  {
    auto errs = cfg.window.check("window");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  // --- source ---
  cfg.source.position = r.get_vec3(merged, "source.position", {0, 0, 0});
  cfg.source.direction = r.get_vec3(merged, "source.direction", {0, 0, 1});
  const json* beams = r.resolve(merged, "source.beams");
  if (beams && beams->is_array()) {
    for (std::size_t i = 0; i < beams->size(); ++i) {
      BeamComponent c;
      c.energy_mean = r.get<double>((*beams)[i], "energy_mean", c.energy_mean);
      c.energy_sigma = r.get<double>((*beams)[i], "energy_sigma", c.energy_sigma);
      c.weight = r.get<double>((*beams)[i], "weight", c.weight);
      cfg.source.components.push_back(c);
    }
  }
  {
    auto errs = cfg.source.check(cfg.window, "source");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  // --- scattering ---
  {
    const json* per_medium = r.resolve(merged, "scattering.per_medium");
    for (std::size_t i = 0; i < cfg.stack.layers.size(); ++i) {
      MediumXs xs;  // zero cross sections unless configured
      const std::string med = cfg.stack.layers[i].medium.name;
      if (per_medium && per_medium->is_object() && per_medium->contains(med)) {
        const json& node = (*per_medium)[med];
        const std::string base = "scattering.per_medium." + med;
        if (node.contains("sigma_e"))
          xs.elastic = read_xs_law(r, node["sigma_e"], base + ".sigma_e");
        if (node.contains("sigma_ne"))
          xs.nonelastic = read_xs_law(r, node["sigma_ne"], base + ".sigma_ne");
      }
      cfg.xs.regions.push_back(xs);
      if (i + 1 < cfg.stack.layers.size())
        cfg.xs.z_breaks.push_back(cfg.stack.layers[i].z_hi);
    }
    if (per_medium && per_medium->is_object()) {
      for (auto it = per_medium->begin(); it != per_medium->end(); ++it) {
        if (!cfg.media.count(it.key()))
          r.errors.push_back("scattering.per_medium." + it.key() +
                             ": unknown medium");
      }
    }
    cfg.kernel.kappa_e =
        r.get<double>(merged, "scattering.kernel.kappa_e", cfg.kernel.kappa_e);
    cfg.kernel.kappa_ne = r.get<double>(merged, "scattering.kernel.kappa_ne",
                                        cfg.kernel.kappa_ne);
    cfg.kernel.ne_frac_min = r.get<double>(
        merged, "scattering.kernel.ne_frac_min", cfg.kernel.ne_frac_min);
    cfg.kernel.ne_frac_max = r.get<double>(
        merged, "scattering.kernel.ne_frac_max", cfg.kernel.ne_frac_max);
    auto errs = cfg.kernel.check("scattering.kernel");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  // --- sim ---
  cfg.sim.step_len = r.get<double>(merged, "sim.step_len", cfg.sim.step_len);
  cfg.sim.mu = r.get<double>(merged, "sim.mu", cfg.sim.mu);
  cfg.sim.max_track_len =
      r.get<double>(merged, "sim.max_track_len", cfg.sim.max_track_len);
  cfg.sim.seed = r.get<std::uint64_t>(merged, "sim.seed", cfg.sim.seed);
  cfg.sim.n_particles =
      r.get<std::int64_t>(merged, "sim.n_particles", cfg.sim.n_particles);
  cfg.sim.threads = r.get<int>(merged, "sim.threads", cfg.sim.threads);
  {
    const std::string mode = r.get<std::string>(merged, "sim.mode", "1d");
    if (mode == "1d") {
      cfg.sim.mode = SimMode::OneD;
    } else if (mode == "3d") {
      cfg.sim.mode = SimMode::ThreeD;
    } else {
      r.errors.push_back("sim.mode: must be 1d or 3d");
    }
    if (mode == "3d" && cfg.domain.kind == DomainKind::Slab1D)
      r.errors.push_back("sim.mode: 3d requires geometry.kind box-3d");
    auto errs = cfg.sim.check("sim");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  // --- grid (depth from geometry, energy from window) ---
  cfg.grid.z_lo = 0.0;
  cfg.grid.z_hi = cfg.domain.extent.z;
  cfg.grid.e_lo = cfg.window.e_min;
  cfg.grid.e_hi = cfg.window.e_max;
  cfg.grid.n_z = r.get<int>(merged, "grid.n_z", cfg.grid.n_z);
  cfg.grid.n_e = r.get<int>(merged, "grid.n_e", cfg.grid.n_e);
  cfg.grid.n_angle = r.get<int>(merged, "grid.n_angle", cfg.grid.n_angle);
  {
    auto errs = cfg.grid.check("grid");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  // --- mesh ---
  cfg.mesh.n_z = r.get<int>(merged, "mesh.n_z", cfg.mesh.n_z);
  cfg.mesh.n_e = r.get<int>(merged, "mesh.n_e", cfg.mesh.n_e);
  cfg.mesh.z_len = cfg.domain.extent.z;
  cfg.mesh.e_min = cfg.window.e_min;
  cfg.mesh.e_max = cfg.window.e_max;
  cfg.cfl_safety = r.get<double>(merged, "mesh.cfl_safety", cfg.cfl_safety);
  {
    auto errs = cfg.mesh.check("mesh");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
    if (errs.empty() && !(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0))
      r.errors.push_back("mesh.cfl_safety: must be in (0, 1]");
    if (errs.empty() && cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0) {
      for (const auto& layer : cfg.stack.layers) {
        if (layer.medium.check("x").empty()) {
          try {
            check_cfl(cfg.mesh, layer.medium, cfg.cfl_safety);
          } catch (const ConfigError& e) {
            r.errors.push_back(e.what());
          }
        }
      }
    }
  }

  // --- prescription ---
  cfg.target_level = r.get<double>(merged, "prescription.level", 1.0);
  cfg.target_z_lo = r.get<double>(merged, "prescription.z_lo", 3.0);
  cfg.target_z_hi = r.get<double>(merged, "prescription.z_hi", 6.0);
  cfg.weight_in = r.get<double>(merged, "prescription.w_in", 1.0);
  cfg.weight_out = r.get<double>(merged, "prescription.w_out", 0.1);
  if (!(cfg.target_level > 0.0))
    r.errors.push_back("prescription.level: must be > 0");
  if (!(cfg.target_z_lo < cfg.target_z_hi))
    r.errors.push_back("prescription: need z_lo < z_hi");
  if (cfg.weight_in < 0.0 || cfg.weight_out < 0.0)
    r.errors.push_back("prescription: weights must be >= 0");

  // --- bank ---
  {
    const json* explicit_beams = r.resolve(merged, "bank.beams");
    if (explicit_beams && explicit_beams->is_array() &&
        !explicit_beams->empty()) {
      for (std::size_t i = 0; i < explicit_beams->size(); ++i) {
        BeamComponent b;
        b.energy_mean =
            r.get<double>((*explicit_beams)[i], "energy_mean", b.energy_mean);
        b.energy_sigma =
            r.get<double>((*explicit_beams)[i], "energy_sigma", b.energy_sigma);
        b.weight = r.get<double>((*explicit_beams)[i], "weight", 1.0);
        cfg.bank.beams.push_back(b);
      }
    } else {
      const int n = r.get<int>(merged, "bank.linspace.n", 20);
      const double lo = r.get<double>(merged, "bank.linspace.e_lo", 58.0);
      const double hi = r.get<double>(merged, "bank.linspace.e_hi", 88.0);
      const double sigma = r.get<double>(merged, "bank.linspace.sigma", 1.5);
      const double w0 = r.get<double>(merged, "bank.linspace.weight", 1.0);
      if (n < 1) {
        r.errors.push_back("bank.linspace.n: must be >= 1");
      } else {
        for (int k = 0; k < n; ++k) {
          const double e =
              n == 1 ? lo : lo + (hi - lo) * k / static_cast<double>(n - 1);
          cfg.bank.beams.push_back({e, sigma, w0});
        }
      }
    }
    auto errs = cfg.bank.check(cfg.window, "bank");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  // --- optimizer ---
  cfg.opt.alpha_reg =
      r.get<double>(merged, "optimizer.alpha_reg", cfg.opt.alpha_reg);
  cfg.opt.tau0 = r.get<double>(merged, "optimizer.tau0", cfg.opt.tau0);
  cfg.opt.decay_k0 = r.get<double>(merged, "optimizer.decay_k0", cfg.opt.decay_k0);
  cfg.opt.armijo_c = r.get<double>(merged, "optimizer.armijo_c", cfg.opt.armijo_c);
  cfg.opt.shrink = r.get<double>(merged, "optimizer.shrink", cfg.opt.shrink);
  cfg.opt.tol_eps = r.get<double>(merged, "optimizer.tol_eps", cfg.opt.tol_eps);
  cfg.opt.max_iters = r.get<int>(merged, "optimizer.max_iters", cfg.opt.max_iters);
  cfg.opt.n_mc = r.get<int>(merged, "optimizer.n_mc", cfg.opt.n_mc);
  cfg.opt.n_scenarios =
      r.get<int>(merged, "optimizer.n_scenarios", cfg.opt.n_scenarios);
  cfg.opt.g_max = r.get<double>(merged, "optimizer.g_max", cfg.opt.g_max);
  cfg.opt.seed = cfg.sim.seed;
  {
    const std::string rule =
        r.get<std::string>(merged, "optimizer.step_rule", "backtracking");
    if (rule == "backtracking") cfg.opt.step_rule = StepRule::Backtracking;
    else if (rule == "fixed") cfg.opt.step_rule = StepRule::Fixed;
    else if (rule == "exact") cfg.opt.step_rule = StepRule::Exact;
    else r.errors.push_back("optimizer.step_rule: must be backtracking, fixed or exact");
    const std::string gm =
        r.get<std::string>(merged, "optimizer.gradient_mode", "influence");
    if (gm == "influence") cfg.opt.gradient_mode = GradientMode::Influence;
    else if (gm == "adjoint") cfg.opt.gradient_mode = GradientMode::Adjoint;
    else r.errors.push_back("optimizer.gradient_mode: must be influence or adjoint");
    const std::string fm =
        r.get<std::string>(merged, "optimizer.forward_model", "pde");
    if (fm == "pde") cfg.opt.forward_model = ForwardModel::Pde;
    else if (fm == "mc") cfg.opt.forward_model = ForwardModel::MonteCarlo;
    else r.errors.push_back("optimizer.forward_model: must be pde or mc");
  }

  // --- scenario ---
  cfg.opt.scenario.density_rel_sigma = r.get<double>(
      merged, "scenario.density_rel_sigma", cfg.opt.scenario.density_rel_sigma);
  cfg.opt.scenario.alpha_rel_sigma = r.get<double>(
      merged, "scenario.alpha_rel_sigma", cfg.opt.scenario.alpha_rel_sigma);
  cfg.opt.scenario.truncation =
      r.get<double>(merged, "scenario.truncation", cfg.opt.scenario.truncation);
  {
    auto errs = cfg.opt.check("optimizer");
    r.errors.insert(r.errors.end(), errs.begin(), errs.end());
  }

  cfg.q_factor = r.get<double>(merged, "q_factor", 1.0);
  cfg.duality_tolerance = r.get<double>(merged, "duality.tolerance", 0.05);
  cfg.out_dir = r.get<std::string>(merged, "output.dir", "out");

  if (!r.errors.empty()) throw ConfigError(r.errors);
  return cfg;
}

RunConfig load_config(const std::string& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  json user;
  try {
    user = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error in ") + path + ": " +
                      e.what());
  }
  return config_from_json(std::move(user), overrides);
}

TransportProblem RunConfig::transport() const {
  return TransportProblem{stack, xs, kernel, domain, window};
}

PlanProblem RunConfig::plan() const {
  PlanProblem p;
  p.bank = bank;
  p.target_level = target_level;
  p.target_z_lo = target_z_lo;
  p.target_z_hi = target_z_hi;
  p.weight_in = weight_in;
  p.weight_out = weight_out;
  p.medium = stack.layers.front().medium;
  p.mesh = mesh;
  p.transport = transport();
  p.sim = sim;
  p.sim.n_particles = opt.n_mc;
  p.grid = grid;
  p.q_factor = q_factor;
  return p;
}

std::uint64_t config_hash(const nlohmann::json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace protx
