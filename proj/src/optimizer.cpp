#include "protx/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace protx {

Eigen::VectorXd BeamBank::initial_weights() const {
  Eigen::VectorXd w(n());
  for (int k = 0; k < n(); ++k) w[k] = beams[k].weight;
  return w;
}

Eigen::MatrixXd BeamBank::spectra(const Mesh1D& mesh) const {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(mesh.n_e, n());
  const double de = mesh.de();
  for (int k = 0; k < n(); ++k) {
    const auto& b = beams[k];
    if (b.energy_sigma > 0.0) {
      double mass = 0.0;
      for (int j = 0; j < mesh.n_e; ++j) {
        const double x = (mesh.e(j) - b.energy_mean) / b.energy_sigma;
        phi(j, k) = std::exp(-0.5 * x * x);
        mass += phi(j, k) * de;
      }
      phi.col(k) /= mass;
    } else {
      int j_star = 0;
      double best = std::abs(mesh.e(0) - b.energy_mean);
      for (int j = 1; j < mesh.n_e; ++j) {
        const double dist = std::abs(mesh.e(j) - b.energy_mean);
        if (dist < best) {
          best = dist;
          j_star = j;
        }
      }
      phi(j_star, k) = 1.0 / de;
    }
  }
  return phi;
}

BeamSource BeamBank::source_for(int k, const Vec3& position,
                                const Vec3& direction) const {
  BeamSource src;
  src.position = position;
  src.direction = direction;
  src.components.push_back({beams[k].energy_mean, beams[k].energy_sigma, 1.0});
  return src;
}

std::vector<std::string> BeamBank::check(const EnergyWindow& window,
                                         const std::string& path) const {
  std::vector<std::string> errs;
  if (beams.empty()) {
    errs.push_back(path + ": at least one beam required");
    return errs;
  }
  for (std::size_t k = 0; k < beams.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    if (!window.contains(beams[k].energy_mean))
      errs.push_back(p + ".energy_mean: outside the energy window");
    if (!(beams[k].energy_sigma >= 0.0))
      errs.push_back(p + ".energy_sigma: must be >= 0");
    if (!(beams[k].weight >= 0.0))
      errs.push_back(p + ".weight: must be >= 0");
  }
  return errs;
}

Prescription Prescription::uniform_target(const std::vector<double>& z_samples,
                                          double dz, double level, double z_lo,
                                          double z_hi, double w_in,
                                          double w_out) {
  Prescription pr;
  const int n = static_cast<int>(z_samples.size());
  pr.d.setZero(n);
  pr.w.setZero(n);
  for (int i = 0; i < n; ++i) {
    const bool in = z_samples[i] >= z_lo && z_samples[i] <= z_hi;
    pr.d[i] = in ? level : 0.0;
    pr.w[i] = in ? w_in : w_out;
  }
  pr.dz = dz;
  pr.z_lo_target = z_lo;
  pr.z_hi_target = z_hi;
  pr.level = level;
  return pr;
}

std::vector<std::string> Prescription::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (d.size() != w.size()) errs.push_back(path + ": d and w sizes differ");
  if ((d.array() < 0.0).any()) errs.push_back(path + ".d: must be >= 0");
  if ((w.array() < 0.0).any()) errs.push_back(path + ".w: must be >= 0");
  if (!(dz > 0.0)) errs.push_back(path + ".dz: must be > 0");
  return errs;
}

std::vector<std::string> OptConfig::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(alpha_reg >= 0.0)) errs.push_back(path + ".alpha_reg: must be >= 0");
  if (step_rule == StepRule::Exact && !(alpha_reg > 0.0))
    errs.push_back(path + ".alpha_reg: exact step rule needs alpha_reg > 0");
  if (!(tau0 > 0.0)) errs.push_back(path + ".tau0: must be > 0");
  if (!(decay_k0 > 0.0)) errs.push_back(path + ".decay_k0: must be > 0");
  if (!(armijo_c > 0.0 && armijo_c < 1.0))
    errs.push_back(path + ".armijo_c: must be in (0, 1)");
  if (!(shrink > 0.0 && shrink < 1.0))
    errs.push_back(path + ".shrink: must be in (0, 1)");
  if (!(tol_eps > 0.0)) errs.push_back(path + ".tol_eps: must be > 0");
  if (max_iters < 1) errs.push_back(path + ".max_iters: must be >= 1");
  if (n_mc < 1) errs.push_back(path + ".n_mc: must be >= 1");
  if (n_scenarios < 1) errs.push_back(path + ".n_scenarios: must be >= 1");
  auto sub = scenario.check(path + ".scenario");
  errs.insert(errs.end(), sub.begin(), sub.end());
  return errs;
}

void OptConfig::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

Prescription PlanProblem::realize_on_mesh() const {
  std::vector<double> zs(mesh.n_z);
  for (int i = 0; i < mesh.n_z; ++i) zs[i] = mesh.z(i);
  return Prescription::uniform_target(zs, mesh.dz(), target_level, target_z_lo,
                                      target_z_hi, weight_in, weight_out);
}

Prescription PlanProblem::realize_on_grid() const {
  std::vector<double> zs(grid.n_z);
  for (int i = 0; i < grid.n_z; ++i) zs[i] = grid.z_lo + (i + 0.5) * grid.dz();
  return Prescription::uniform_target(zs, grid.dz(), target_level, target_z_lo,
                                      target_z_hi, weight_in, weight_out);
}

Eigen::MatrixXd influence_matrix(const BeamBank& bank, const PlanProblem& prob,
                                 ForwardModel model, const Medium& medium,
                                 std::uint64_t seed) {
  if (bank.n() == 0) return Eigen::MatrixXd(0, 0);
  if (model == ForwardModel::Pde) {
    const Eigen::MatrixXd phi = bank.spectra(prob.mesh);
    Eigen::MatrixXd m(prob.mesh.n_z, bank.n());
    for (int k = 0; k < bank.n(); ++k) {
      const Field2D psi = solve_forward(phi.col(k), prob.mesh, medium);
      m.col(k) = dose_of(psi, medium);
    }
    return m;
  }
  Eigen::MatrixXd m(prob.grid.n_z, bank.n());
  TransportProblem tp = prob.transport;
  tp.stack = MediumStack::uniform(medium);
  for (int k = 0; k < bank.n(); ++k) {
    SimConfig sc = prob.sim;
    sc.seed = rng::substream_seed(seed, static_cast<std::uint64_t>(k));
    const BeamSource src = bank.source_for(k, Vec3{0, 0, 0}, Vec3{0, 0, 1});
    const BatchResult batch = run_batch(src, tp, sc, prob.grid);
    for (int i = 0; i < prob.grid.n_z; ++i) m(i, k) = batch.dose.dose(i);
  }
  return m;
}

double cost(const Eigen::VectorXd& weights, const Eigen::MatrixXd& influence,
            const Prescription& pr, double alpha_reg) {
  const Eigen::VectorXd r = influence * weights - pr.d;
  const double fid = (pr.w.array() * r.array().square()).sum() * pr.dz;
  return fid + 0.5 * alpha_reg * weights.squaredNorm();
}

Eigen::VectorXd gradient_influence(const Eigen::VectorXd& weights,
                                   const Eigen::MatrixXd& influence,
                                   const Prescription& pr, double alpha_reg) {
  const Eigen::VectorXd r = influence * weights - pr.d;
  return 2.0 * pr.dz *
             (influence.transpose() * (pr.w.array() * r.array()).matrix()) +
         alpha_reg * weights;
}

Eigen::VectorXd gradient_adjoint_pde(const Eigen::VectorXd& weights,
                                     const BeamBank& bank, const Mesh1D& mesh,
                                     const Medium& medium,
                                     const Prescription& pr, double alpha_reg,
                                     double q_factor) {
  const Eigen::MatrixXd phi = bank.spectra(mesh);
  const Eigen::VectorXd g = phi * weights;
  const Field2D psi = solve_forward(g, mesh, medium);
  const Eigen::VectorXd residual = dose_of(psi, medium) - pr.d;
  const Field2D zf = solve_adjoint(residual, pr.w, q_factor, mesh, medium);
  return phi.transpose() * inflow_trace(zf) + alpha_reg * weights;
}

Eigen::VectorXd project(const Eigen::VectorXd& weights, double g_max) {
  return weights.cwiseMax(0.0).cwiseMin(g_max);
}

double vi_residual(const Eigen::VectorXd& weights, const Eigen::VectorXd& grad,
                   double g_max) {
  return (weights - project(weights - grad, g_max)).norm();
}

ExpectedCostEstimate expected_cost(const Eigen::VectorXd& weights,
                                   const PlanProblem& prob,
                                   const OptConfig& opt) {
  const Prescription pr = prob.realize_on_mesh();
  const Eigen::MatrixXd phi = prob.bank.spectra(prob.mesh);
  const Eigen::VectorXd g = phi * weights;
  const std::uint64_t scen_seed = rng::substream_seed(opt.seed, 0x5ce0);

  double acc = 0.0, acc_sq = 0.0;
  Eigen::VectorXd mean_dose = Eigen::VectorXd::Zero(prob.mesh.n_z);
  for (int s = 0; s < opt.n_scenarios; ++s) {
    rng::Stream rs(scen_seed, static_cast<std::uint64_t>(s));
    const Medium med = perturb_medium(prob.medium, opt.scenario, rs);
    const Field2D psi = solve_forward(g, prob.mesh, med);
    const Eigen::VectorXd dose = dose_of(psi, med);
    const Eigen::VectorXd r = dose - pr.d;
    const double fid = (pr.w.array() * r.array().square()).sum() * pr.dz;
    acc += fid;
    acc_sq += fid * fid;
    mean_dose += dose;
  }
  const double n = opt.n_scenarios;
  ExpectedCostEstimate est;
  est.fidelity_mean = acc / n;
  est.value = est.fidelity_mean + 0.5 * opt.alpha_reg * weights.squaredNorm();
  est.mean_dose = mean_dose / n;
  if (opt.n_scenarios > 1) {
    const double var =
        std::max(0.0, acc_sq / n - est.fidelity_mean * est.fidelity_mean);
    est.stderr_ = std::sqrt(var / n);
  }
  return est;
}

namespace {

// Map tally-grid bin-center values onto mesh nodes by clamped linear
// interpolation.
Eigen::VectorXd bins_to_nodes(const std::vector<double>& bins, const Grid& grid,
                              const Mesh1D& mesh) {
  Eigen::VectorXd out(mesh.n_z);
  const double dz = grid.dz();
  for (int i = 0; i < mesh.n_z; ++i) {
    const double t = (mesh.z(i) - grid.z_lo) / dz - 0.5;
    const int b0 = static_cast<int>(std::floor(t));
    const double f = t - b0;
    const int lo = std::clamp(b0, 0, grid.n_z - 1);
    const int hi = std::clamp(b0 + 1, 0, grid.n_z - 1);
    out[i] = (1.0 - f) * bins[lo] + f * bins[hi];
  }
  return out;
}

// One iteration's frozen view of the stochastic problem. Scenario media
// and Monte Carlo seeds are pure functions of (seed, iteration), so a
// line search compares costs under common random numbers. When neither
// scenarios nor a stochastic forward refresh is active, the influence
// matrix is sampled once and reused (the optimisation then runs on the
// frozen sampled matrix, as in the 1d demo).
class PlanEvaluator {
 public:
  PlanEvaluator(const PlanProblem& prob, const OptConfig& opt)
      : prob_(prob), opt_(opt) {
    const bool grid_axis = opt.forward_model == ForwardModel::MonteCarlo &&
                           opt.gradient_mode == GradientMode::Influence;
    pr_ = grid_axis ? prob.realize_on_grid() : prob.realize_on_mesh();
    phi_ = prob.bank.spectra(prob.mesh);
    if (opt.gradient_mode == GradientMode::Influence && !scenarios_active()) {
      influence_.push_back(influence_matrix(prob.bank, prob, opt.forward_model,
                                            prob.medium, opt.seed));
    }
  }

  bool scenarios_active() const {
    return opt_.scenario.density_rel_sigma > 0.0 ||
           opt_.scenario.alpha_rel_sigma > 0.0;
  }

  const Prescription& prescription() const { return pr_; }

  std::vector<double> dose_axis() const {
    std::vector<double> zs;
    if (static_cast<int>(pr_.d.size()) == prob_.grid.n_z &&
        opt_.forward_model == ForwardModel::MonteCarlo &&
        opt_.gradient_mode == GradientMode::Influence) {
      for (int i = 0; i < prob_.grid.n_z; ++i)
        zs.push_back(prob_.grid.z_lo + (i + 0.5) * prob_.grid.dz());
    } else {
      for (int i = 0; i < prob_.mesh.n_z; ++i) zs.push_back(prob_.mesh.z(i));
    }
    return zs;
  }

  void begin_iteration(int k) {
    iteration_ = k;
    if (!scenarios_active()) return;
    media_.clear();
    const std::uint64_t scen_seed =
        rng::substream_seed(opt_.seed, 0x5ce0 + static_cast<std::uint64_t>(k));
    for (int s = 0; s < opt_.n_scenarios; ++s) {
      rng::Stream rs(scen_seed, static_cast<std::uint64_t>(s));
      media_.push_back(perturb_medium(prob_.medium, opt_.scenario, rs));
    }
    if (opt_.gradient_mode == GradientMode::Influence) {
      influence_.clear();
      for (int s = 0; s < opt_.n_scenarios; ++s) {
        influence_.push_back(influence_matrix(
            prob_.bank, prob_, opt_.forward_model, media_[s],
            rng::substream_seed(opt_.seed, 0xbeef + static_cast<std::uint64_t>(
                                                        k * 131 + s))));
      }
    }
  }

  double eval_cost(const Eigen::VectorXd& c) {
    if (opt_.gradient_mode == GradientMode::Influence)
      return influence_cost(c);
    return adjoint_cost_grad(c, nullptr);
  }

  double eval_cost_grad(const Eigen::VectorXd& c, Eigen::VectorXd& grad) {
    if (opt_.gradient_mode == GradientMode::Influence) {
      grad = Eigen::VectorXd::Zero(c.size());
      for (const auto& m : influence_)
        grad += gradient_influence(c, m, pr_, 0.0) /
                static_cast<double>(influence_.size());
      grad += opt_.alpha_reg * c;
      return influence_cost(c);
    }
    return adjoint_cost_grad(c, &grad);
  }

  // Nominal-medium dose of the given weights, on the cost axis.
  Eigen::VectorXd nominal_dose(const Eigen::VectorXd& c) {
    if (opt_.gradient_mode == GradientMode::Influence) {
      if (!scenarios_active()) return influence_.front() * c;
      const Eigen::MatrixXd m = influence_matrix(
          prob_.bank, prob_, opt_.forward_model, prob_.medium, opt_.seed);
      return m * c;
    }
    if (opt_.forward_model == ForwardModel::Pde) {
      const Field2D psi = solve_forward(phi_ * c, prob_.mesh, prob_.medium);
      return dose_of(psi, prob_.medium);
    }
    return mc_dose_on_mesh(c, prob_.medium, rng::substream_seed(opt_.seed, 0));
  }

 private:
  double influence_cost(const Eigen::VectorXd& c) const {
    double acc = 0.0;
    for (const auto& m : influence_) acc += cost(c, m, pr_, 0.0);
    return acc / static_cast<double>(influence_.size()) +
           0.5 * opt_.alpha_reg * c.squaredNorm();
  }

  Eigen::VectorXd mc_dose_on_mesh(const Eigen::VectorXd& c, const Medium& med,
                                  std::uint64_t seed) const {
    const double total = c.sum();
    if (!(total > 0.0)) return Eigen::VectorXd::Zero(prob_.mesh.n_z);
    BeamSource src;
    src.position = {0, 0, 0};
    src.direction = {0, 0, 1};
    for (int k = 0; k < prob_.bank.n(); ++k) {
      const auto& b = prob_.bank.beams[k];
      if (c[k] > 0.0)
        src.components.push_back({b.energy_mean, b.energy_sigma, c[k]});
    }
    TransportProblem tp = prob_.transport;
    tp.stack = MediumStack::uniform(med);
    SimConfig sc = prob_.sim;
    sc.seed = seed;
    sc.n_particles = opt_.n_mc;
    const BatchResult batch = run_batch(src, tp, sc, prob_.grid);
    std::vector<double> bins(prob_.grid.n_z);
    for (int i = 0; i < prob_.grid.n_z; ++i)
      bins[i] = batch.dose.dose(i) * total;  // per-history dose x plan weight
    return bins_to_nodes(bins, prob_.grid, prob_.mesh);
  }

  // Adjoint route: cost and (optionally) gradient averaged over the
  // iteration's frozen scenarios.
  double adjoint_cost_grad(const Eigen::VectorXd& c, Eigen::VectorXd* grad) {
    const std::vector<Medium> media =
        scenarios_active() ? media_ : std::vector<Medium>{prob_.medium};
    if (grad) *grad = Eigen::VectorXd::Zero(c.size());
    double acc = 0.0;
    for (std::size_t s = 0; s < media.size(); ++s) {
      Eigen::VectorXd dose;
      if (opt_.forward_model == ForwardModel::Pde) {
        const Field2D psi = solve_forward(phi_ * c, prob_.mesh, media[s]);
        dose = dose_of(psi, media[s]);
      } else {
        dose = mc_dose_on_mesh(
            c, media[s],
            rng::substream_seed(
                opt_.seed, 0xf00d + static_cast<std::uint64_t>(
                                        iteration_ * 131 + static_cast<int>(s))));
      }
      const Eigen::VectorXd r = dose - pr_.d;
      acc += (pr_.w.array() * r.array().square()).sum() * pr_.dz;
      if (grad) {
        const Field2D zf =
            solve_adjoint(r, pr_.w, prob_.q_factor, prob_.mesh, media[s]);
        *grad += phi_.transpose() * inflow_trace(zf) /
                 static_cast<double>(media.size());
      }
    }
    if (grad) *grad += opt_.alpha_reg * c;
    return acc / static_cast<double>(media.size()) +
           0.5 * opt_.alpha_reg * c.squaredNorm();
  }

  const PlanProblem& prob_;
  const OptConfig& opt_;
  Prescription pr_;
  Eigen::MatrixXd phi_;
  std::vector<Eigen::MatrixXd> influence_;
  std::vector<Medium> media_;
  int iteration_ = 0;
};

}  // namespace

GradientEval evaluate_plan_gradient(const PlanProblem& prob,
                                    const OptConfig& opt,
                                    const Eigen::VectorXd& weights,
                                    int iteration) {
  opt.validate();
  PlanEvaluator eval(prob, opt);
  eval.begin_iteration(iteration);
  GradientEval out;
  out.cost = eval.eval_cost_grad(weights, out.grad);
  return out;
}

OptResult optimize(const PlanProblem& prob, const OptConfig& opt) {
  opt.validate();
  {
    std::vector<std::string> errs = prob.bank.check(prob.transport.window);
    auto m = prob.medium.check("plan.medium");
    errs.insert(errs.end(), m.begin(), m.end());
    if (!errs.empty()) throw ConfigError(errs);
  }

  PlanEvaluator eval(prob, opt);

  OptResult res;
  Eigen::VectorXd c = prob.bank.initial_weights();

  // Auto bound: 10x the uniform weight that hits the target level.
  double g_max = opt.g_max;
  if (!(g_max > 0.0)) {
    eval.begin_iteration(0);
    const Eigen::VectorXd d_unit =
        eval.nominal_dose(Eigen::VectorXd::Ones(c.size()));
    const Prescription& pr = eval.prescription();
    double mean_target = 0.0;
    int count = 0;
    for (int i = 0; i < d_unit.size(); ++i) {
      if (pr.d[i] > 0.0) {
        mean_target += d_unit[i];
        ++count;
      }
    }
    mean_target = count > 0 ? mean_target / count : 0.0;
    g_max = mean_target > 0.0
                ? 10.0 * prob.target_level / mean_target
                : 10.0 * std::max(1.0, c.lpNorm<Eigen::Infinity>());
  }
  res.g_max_used = g_max;

  const Eigen::VectorXd c_proj = project(c, g_max);
  res.start_projected = (c_proj - c).norm() > 0.0;
  c = c_proj;

  double tau_memory = opt.tau0;
  bool stalled = false;
  int k = 0;
  for (; k < opt.max_iters && !stalled; ++k) {
    eval.begin_iteration(k);
    Eigen::VectorXd grad;
    const double fk = eval.eval_cost_grad(c, grad);
    const double vi = vi_residual(c, grad, g_max);
    res.cost_trace.push_back(fk);
    res.vi_trace.push_back(vi);
    res.grad_norm_trace.push_back(grad.norm());
    if (vi <= opt.tol_eps) {
      res.converged = true;
      break;
    }

    switch (opt.step_rule) {
      case StepRule::Exact: {
        const Eigen::VectorXd fid_grad = grad - opt.alpha_reg * c;
        c = project(-fid_grad / opt.alpha_reg, g_max);
        break;
      }
      case StepRule::Fixed: {
        const double tau = opt.tau0 / (1.0 + k / opt.decay_k0);
        c = project(c - tau * grad, g_max);
        break;
      }
      case StepRule::Backtracking: {
        double tau = tau_memory * 2.0;
        bool accepted = false;
        Eigen::VectorXd c_next;
        // Sufficient-decrease test with a machine-noise allowance so the
        // search keeps moving once cost differences fall below rounding.
        const double noise = 1e-14 * std::abs(fk);
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
          c_next = project(c - tau * grad, g_max);
          const double decrease = grad.dot(c - c_next);
          if (eval.eval_cost(c_next) <= fk - opt.armijo_c * decrease + noise)
            accepted = true;
          else
            tau *= opt.shrink;
        }
        tau_memory = tau;
        if (!accepted) {
          stalled = true;  // no acceptable step at this resolution
          break;
        }
        c = c_next;
        break;
      }
    }
  }
  res.weights = c;
  res.iterations = k;
  res.final_dose = eval.nominal_dose(c);
  res.dose_axis = eval.dose_axis();
  return res;
}

}  // namespace protx
