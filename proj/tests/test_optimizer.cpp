#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "protx/optimizer.hpp"

using namespace protx;

namespace {

const Medium kWater = builtin_medium("water");

// Small plan instance: 2 cm water slab, window [20, 150] MeV, beams with
// ranges inside the slab, mesh CFL-safe.
PlanProblem small_plan(int n_beams = 3) {
  PlanProblem p;
  for (int k = 0; k < n_beams; ++k)
    p.bank.beams.push_back({35.0 + 5.0 * k, 1.0, 1.0});
  p.target_level = 1.0;
  p.target_z_lo = 0.8;
  p.target_z_hi = 1.6;
  p.weight_in = 1.0;
  p.weight_out = 0.1;
  p.medium = kWater;
  p.mesh = Mesh1D{101, 66, 2.0, 20.0, 150.0};
  p.transport.stack = MediumStack::uniform(kWater);
  p.transport.xs = CrossSections::uniform(MediumXs{});
  p.transport.kernel = KernelParams{};
  p.transport.domain = SpatialDomain{DomainKind::Slab1D, {10.0, 10.0, 2.0}};
  p.transport.window = EnergyWindow{20.0, 150.0};
  p.sim.step_len = 0.002;
  p.sim.max_track_len = 50.0;
  p.sim.mode = SimMode::OneD;
  p.grid = Grid{0.0, 2.0, 100, 20.0, 150.0, 130, 0};
  p.q_factor = 1.0;
  return p;
}

OptConfig quiet_opt() {
  OptConfig o;
  o.alpha_reg = 1e-3;
  o.tol_eps = 1e-9;
  o.max_iters = 50000;
  o.seed = 5;
  return o;
}

// Independent convex-QP oracle: minimize x^T H x / 2 + q^T x over
// [0, gmax]^n by enumerating all 3^n active-set patterns and checking
// KKT. Exact for the small instances used here.
double qp_oracle(const Eigen::MatrixXd& H, const Eigen::VectorXd& q,
                 double gmax, Eigen::VectorXd* argmin = nullptr) {
  const int n = static_cast<int>(q.size());
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  std::vector<int> pattern(n, 0);  // 0 lower, 1 free, 2 upper
  const int total = static_cast<int>(std::pow(3, n));
  for (int code = 0; code < total; ++code) {
    int c = code;
    for (int i = 0; i < n; ++i) {
      pattern[i] = c % 3;
      c /= 3;
    }
    std::vector<int> free_idx;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (pattern[i] == 1) free_idx.push_back(i);
      if (pattern[i] == 2) x[i] = gmax;
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      Eigen::MatrixXd Hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        rhs[a] = -q[free_idx[a]];
        for (int i = 0; i < n; ++i)
          if (pattern[i] == 2) rhs[a] -= H(free_idx[a], i) * gmax;
        for (int b = 0; b < nf; ++b) Hff(a, b) = H(free_idx[a], free_idx[b]);
      }
      const Eigen::VectorXd xf = Hff.ldlt().solve(rhs);
      for (int a = 0; a < nf; ++a) x[free_idx[a]] = xf[a];
    }
    // Feasibility of free variables.
    bool ok = true;
    for (int i = 0; i < n && ok; ++i)
      if (pattern[i] == 1 && (x[i] < -1e-12 || x[i] > gmax + 1e-12)) ok = false;
    if (!ok) continue;
    // KKT signs on the active bounds.
    const Eigen::VectorXd grad = H * x + q;
    for (int i = 0; i < n && ok; ++i) {
      if (pattern[i] == 0 && grad[i] < -1e-9) ok = false;
      if (pattern[i] == 2 && grad[i] > 1e-9) ok = false;
    }
    if (!ok) continue;
    const double val = 0.5 * x.dot(H * x) + q.dot(x);
    if (val < best) {
      best = val;
      best_x = x;
    }
  }
  if (argmin) *argmin = best_x;
  return best;
}

}  // namespace

TEST_CASE("cost: trivial identities") {
  Eigen::MatrixXd m(5, 3);
  m.setRandom();
  m = m.cwiseAbs();
  Prescription pr;
  pr.d.setZero(5);
  pr.w.setOnes(5);
  pr.dz = 0.1;
  Eigen::VectorXd c(3);
  c << 1.0, 0.5, 2.0;

  SUBCASE("achieved prescription leaves only the regularization") {
    pr.d = m * c;
    CHECK(cost(c, m, pr, 0.2) ==
          doctest::Approx(0.1 * c.squaredNorm()).epsilon(1e-12));
  }
  SUBCASE("zero weights and zero regularization give zero") {
    pr.w.setZero();
    CHECK(cost(c, m, pr, 0.0) == 0.0);
  }
  SUBCASE("hand-computed quadratic on a fixed instance") {
    Eigen::MatrixXd mm(5, 3);
    mm << 1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1, 2, 0, 1;
    Eigen::VectorXd d(5), w(5);
    d << 0.5, 0.25, 1.0, 2.0, 3.0;
    w << 1.0, 2.0, 0.5, 1.0, 0.25;
    Prescription pr2;
    pr2.d = d;
    pr2.w = w;
    pr2.dz = 0.5;
    Eigen::VectorXd cc(3);
    cc << 1.0, 2.0, 0.5;
    // residuals: (0.5, 1.75, -0.5, 1.5, -0.5)
    double fid = 1.0 * 0.25 + 2.0 * 3.0625 + 0.5 * 0.25 + 1.0 * 2.25 +
                 0.25 * 0.25;
    fid *= 0.5;
    const double reg = 0.5 * 0.1 * cc.squaredNorm();
    CHECK(cost(cc, mm, pr2, 0.1) == doctest::Approx(fid + reg).epsilon(1e-12));
  }
}

TEST_CASE("project: clamp semantics") {
  Eigen::VectorXd x(3);
  x << -1.0, 0.5, 99.0;
  const Eigen::VectorXd p = project(x, 2.0);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 0.5);
  CHECK(p[2] == 2.0);
  const Eigen::VectorXd pp = project(p, 2.0);
  CHECK((pp - p).norm() == 0.0);  // idempotent bit-exactly
  Eigen::VectorXd feasible(3);
  feasible << 0.0, 1.0, 2.0;
  CHECK((project(feasible, 2.0) - feasible).norm() == 0.0);
}

TEST_CASE("vi_residual: fixed-point residual semantics") {
  const double gmax = 2.0;

  SUBCASE("interior stationary point") {
    Eigen::VectorXd c(3), g(3);
    c << 0.5, 1.0, 1.5;
    g.setZero();
    CHECK(vi_residual(c, g, gmax) == 0.0);
  }
  SUBCASE("active lower bound with positive gradient contributes nothing") {
    Eigen::VectorXd c(2), g(2);
    c << 0.0, 1.0;
    g << 5.0, 0.0;
    CHECK(vi_residual(c, g, gmax) == 0.0);
  }
  SUBCASE("equivalence with the exhaustive vertex check") {
    rng::Stream rs(17, 0);
    int zero_cases = 0, positive_cases = 0;
    for (int rep = 0; rep < 200; ++rep) {
      Eigen::VectorXd c(3), g(3);
      // Half the instances are constructed stationary, half random.
      const bool make_stationary = rep % 2 == 0;
      for (int i = 0; i < 3; ++i) {
        const int kind = static_cast<int>(rs.uniform() * 3.0);
        if (make_stationary) {
          if (kind == 0) {
            c[i] = 0.0;
            g[i] = rs.uniform();  // >= 0 pushes against the bound
          } else if (kind == 1) {
            c[i] = gmax;
            g[i] = -rs.uniform();
          } else {
            c[i] = rs.uniform() * gmax;
            g[i] = 0.0;
          }
        } else {
          c[i] = rs.uniform() * gmax;
          g[i] = rs.uniform() - 0.5;
        }
      }
      const double res = vi_residual(c, g, gmax);
      // Exhaustive VI check over the 8 box vertices.
      bool vi_holds = true;
      for (int v = 0; v < 8; ++v) {
        Eigen::VectorXd tilde(3);
        for (int i = 0; i < 3; ++i) tilde[i] = (v >> i) & 1 ? gmax : 0.0;
        if (g.dot(tilde - c) < 0.0) vi_holds = false;
      }
      CHECK((res == 0.0) == vi_holds);
      if (res == 0.0) ++zero_cases;
      else ++positive_cases;
    }
    CHECK(zero_cases > 0);
    CHECK(positive_cases > 0);
  }
}

TEST_CASE("influence matrix: structure and linearity") {
  PlanProblem p = small_plan(3);
  const Eigen::MatrixXd m =
      influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, 1);
  CHECK(m.rows() == p.mesh.n_z);
  CHECK(m.cols() == 3);
  CHECK(m.minCoeff() >= 0.0);

  BeamBank empty;
  const Eigen::MatrixXd none =
      influence_matrix(empty, p, ForwardModel::Pde, p.medium, 1);
  CHECK(none.cols() == 0);

  // Single beam with unit weight reproduces its column bit-exactly.
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1[1] = 1.0;
  const Eigen::VectorXd dose = m * e1;
  CHECK((dose - m.col(1)).norm() == 0.0);
}

TEST_CASE("gradients: influence vs adjoint vs finite differences") {
  PlanProblem p = small_plan(4);
  const Prescription pr = p.realize_on_mesh();
  const Eigen::MatrixXd m =
      influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, 1);
  const double alpha = 1e-3;
  Eigen::VectorXd c(4);
  c << 0.8, 1.1, 0.6, 1.4;

  const Eigen::VectorXd gi = gradient_influence(c, m, pr, alpha);
  const Eigen::VectorXd ga =
      gradient_adjoint_pde(c, p.bank, p.mesh, p.medium, pr, alpha, 1.0);
  CHECK((gi - ga).norm() / gi.norm() < 1e-10);

  // Central differences of the quadratic cost are exact to rounding.
  for (int k = 0; k < 4; ++k) {
    const double h = 1e-3;
    Eigen::VectorXd cp = c, cm = c;
    cp[k] += h;
    cm[k] -= h;
    const double fd = (cost(cp, m, pr, alpha) - cost(cm, m, pr, alpha)) / (2 * h);
    CHECK(std::abs(fd - gi[k]) / std::abs(gi[k]) < 1e-5);
  }

  // Zero residual and zero regularization give the zero gradient.
  Prescription achieved = pr;
  achieved.d = m * c;
  const Eigen::VectorXd gz = gradient_influence(c, m, achieved, 0.0);
  CHECK(gz.norm() < 1e-14 * (m * c).norm());
}

TEST_CASE("expected_cost") {
  PlanProblem p = small_plan(3);
  Eigen::VectorXd c(3);
  c << 1.0, 0.8, 1.2;

  SUBCASE("degenerate scenarios reproduce the deterministic cost") {
    OptConfig o = quiet_opt();
    o.n_scenarios = 4;
    o.scenario = ScenarioParams{0.0, 0.0, 0.2};
    const auto est = expected_cost(c, p, o);
    const Prescription pr = p.realize_on_mesh();
    const Eigen::MatrixXd m =
        influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, 1);
    CHECK(est.value == doctest::Approx(cost(c, m, pr, o.alpha_reg)).epsilon(1e-12));
    CHECK(est.stderr_ == 0.0);
  }

  SUBCASE("Jensen gap is nonnegative within sampling error") {
    OptConfig o = quiet_opt();
    o.n_scenarios = 64;
    o.scenario = ScenarioParams{0.05, 0.05, 0.2};
    const auto est = expected_cost(c, p, o);
    const Prescription pr = p.realize_on_mesh();
    const Eigen::VectorXd r = est.mean_dose - pr.d;
    const double fid_of_mean = (pr.w.array() * r.array().square()).sum() * pr.dz;
    CHECK(est.fidelity_mean >= fid_of_mean - 3.0 * est.stderr_);
  }

  SUBCASE("scenario standard error scales like 1/sqrt(n)") {
    auto spread = [&](int n_scen, int reps) {
      std::vector<double> vals;
      for (int rep = 0; rep < reps; ++rep) {
        OptConfig o = quiet_opt();
        o.n_scenarios = n_scen;
        o.scenario = ScenarioParams{0.05, 0.05, 0.2};
        o.seed = 900 + static_cast<std::uint64_t>(rep);
        vals.push_back(expected_cost(c, p, o).fidelity_mean);
      }
      double mmean = 0.0, ss = 0.0;
      for (double v : vals) mmean += v;
      mmean /= vals.size();
      for (double v : vals) ss += (v - mmean) * (v - mmean);
      return std::sqrt(ss / (vals.size() - 1));
    };
    const double sd4 = spread(4, 30);
    const double sd16 = spread(16, 30);
    const double ratio = sd4 / sd16;
    CHECK(ratio > 1.3);
    CHECK(ratio < 3.2);
  }
}

TEST_CASE("optimize: planted solution is recovered") {
  PlanProblem p = small_plan(4);
  const Eigen::MatrixXd m =
      influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, 1);
  Eigen::VectorXd c_star(4);
  c_star << 1.0, 0.5, 1.5, 0.8;
  // Plant the achieved dose as the prescription via a custom problem:
  // overwrite the target fields so realize_on_mesh reproduces d = M c*.
  // (Here we bypass realize by optimizing the influence instance
  // directly through OptConfig on a problem whose prescription matches.)
  const Eigen::VectorXd d_star = m * c_star;

  // optimize() builds its prescription from the plan fields, so plant
  // through the general path: uniform target equals d_star only if we
  // check the cost directly instead. Run the loop on the quadratic and
  // compare against the planted optimum.
  OptConfig o = quiet_opt();
  o.alpha_reg = 1e-6;
  o.tol_eps = 1e-10;
  o.g_max = 4.0;

  // Hand-rolled projected-gradient run on the planted instance, using
  // the library cost/gradient/project/vi_residual operations.
  Prescription pr = p.realize_on_mesh();
  pr.d = d_star;
  pr.w.setOnes();
  Eigen::VectorXd c = Eigen::VectorXd::Ones(4);
  double tau = 1.0;
  for (int k = 0; k < 20000; ++k) {
    const Eigen::VectorXd g = gradient_influence(c, m, pr, o.alpha_reg);
    if (vi_residual(c, g, o.g_max) <= o.tol_eps) break;
    const double f = cost(c, m, pr, o.alpha_reg);
    tau *= 2.0;
    for (int t = 0; t < 60; ++t) {
      const Eigen::VectorXd cand = project(c - tau * g, o.g_max);
      if (cost(cand, m, pr, o.alpha_reg) <=
          f - 1e-4 * g.dot(c - cand)) {
        c = cand;
        break;
      }
      tau *= 0.5;
    }
  }
  const double final_cost = cost(c, m, pr, o.alpha_reg);
  CHECK(final_cost <= o.alpha_reg * c_star.squaredNorm() * 1.01);
  CHECK((m * c - d_star).norm() / d_star.norm() < 1e-3);
}

TEST_CASE("optimize: full loop contracts") {
  PlanProblem p = small_plan(4);
  // Plain projected gradient converges at rate 1 - alpha/L; scale the
  // regularization and the tolerance to the instance so the configured
  // epsilon is reachable.
  const Prescription pr0 = p.realize_on_mesh();
  const Eigen::MatrixXd m0 =
      influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, 5);
  const Eigen::MatrixXd W0 = pr0.w.asDiagonal();
  const double lip =
      (2.0 * pr0.dz * m0.transpose() * W0 * m0).operatorNorm();

  OptConfig o = quiet_opt();
  o.alpha_reg = 1e-3 * lip;
  o.tol_eps = 1e-9 * lip;
  o.gradient_mode = GradientMode::Influence;
  o.forward_model = ForwardModel::Pde;

  const OptResult res = optimize(p, o);
  REQUIRE(res.cost_trace.size() >= 2);
  CHECK(res.converged);
  CHECK(res.vi_trace.back() <= o.tol_eps);

  // Feasibility of the final iterate (interior iterates are feasible by
  // construction of project()).
  for (int k = 0; k < res.weights.size(); ++k) {
    CHECK(res.weights[k] >= 0.0);
    CHECK(res.weights[k] <= res.g_max_used);
  }
  // Monotone descent under backtracking.
  for (std::size_t k = 1; k < res.cost_trace.size(); ++k)
    CHECK(res.cost_trace[k] <= res.cost_trace[k - 1] + 1e-12);

  // Stationarity certificate against random feasible points.
  const Prescription pr = p.realize_on_mesh();
  const Eigen::MatrixXd m =
      influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, o.seed);
  const Eigen::VectorXd grad =
      gradient_influence(res.weights, m, pr, o.alpha_reg);
  rng::Stream rs(99, 0);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd tilde(res.weights.size());
    for (int i = 0; i < tilde.size(); ++i)
      tilde[i] = rs.uniform() * res.g_max_used;
    CHECK(grad.dot(tilde - res.weights) >=
          -o.tol_eps * (tilde - res.weights).norm() - 1e-12);
  }

  // Adjoint gradient mode reaches the same optimum.
  OptConfig o2 = o;
  o2.gradient_mode = GradientMode::Adjoint;
  const OptResult res2 = optimize(p, o2);
  CHECK(res2.converged);
  CHECK((res2.weights - res.weights).norm() /
            std::max(1.0, res.weights.norm()) <
        1e-5);
}

TEST_CASE("optimize: dominant regularization drives weights to zero") {
  PlanProblem p = small_plan(3);
  OptConfig o = quiet_opt();
  o.alpha_reg = 1e9;
  o.tol_eps = 1e-12;
  const OptResult res = optimize(p, o);
  CHECK(res.weights.norm() < 1e-6);
}

TEST_CASE("optimize: agreement with the exhaustive QP oracle") {
  for (int n : {2, 3, 4}) {
    PlanProblem p = small_plan(n);
    OptConfig o = quiet_opt();
    o.alpha_reg = 1e-3;
    o.tol_eps = 1e-12;
    o.g_max = 3.0;
    const OptResult res = optimize(p, o);

    const Prescription pr = p.realize_on_mesh();
    const Eigen::MatrixXd m =
        influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, o.seed);
    // cost(c) = c^T H c / 2 + q^T c + const with
    //   H = 4 dz M^T W M + 2 alpha I  ... (factor bookkeeping below)
    // J(c) = dz * (Mc - d)^T W (Mc - d) + alpha/2 |c|^2.
    const Eigen::MatrixXd W = pr.w.asDiagonal();
    const Eigen::MatrixXd H =
        2.0 * pr.dz * m.transpose() * W * m +
        o.alpha_reg * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd q = -2.0 * pr.dz * m.transpose() * (W * pr.d);
    const double c0 = pr.dz * pr.d.dot(W * pr.d);

    Eigen::VectorXd x_star;
    const double oracle_val = qp_oracle(H, q, o.g_max, &x_star) + c0;
    const double got = cost(res.weights, m, pr, o.alpha_reg);
    CHECK(got == doctest::Approx(oracle_val).epsilon(1e-8));
  }
}

TEST_CASE("optimize: exact fixed-point rule reaches stationarity") {
  // The undamped rule g = P(-z/alpha) contracts only when alpha_reg
  // dominates the fidelity Hessian; pick alpha accordingly.
  PlanProblem p = small_plan(3);
  const Prescription pr = p.realize_on_mesh();
  const Eigen::MatrixXd m =
      influence_matrix(p.bank, p, ForwardModel::Pde, p.medium, 5);
  const Eigen::MatrixXd W = pr.w.asDiagonal();
  const Eigen::MatrixXd h_fid = 2.0 * pr.dz * m.transpose() * W * m;
  const double lip = h_fid.operatorNorm();

  OptConfig o = quiet_opt();
  o.step_rule = StepRule::Exact;
  o.alpha_reg = 2.0 * lip;
  o.tol_eps = 1e-9;
  o.max_iters = 5000;
  const OptResult res = optimize(p, o);
  CHECK(res.converged);
  CHECK(res.vi_trace.back() <= o.tol_eps);
}

TEST_CASE("optimize: infeasible start is projected and logged") {
  PlanProblem p = small_plan(3);
  for (auto& b : p.bank.beams) b.weight = 1e9;
  OptConfig o = quiet_opt();
  o.g_max = 2.0;
  o.max_iters = 200;
  o.tol_eps = 1e-6;
  const OptResult res = optimize(p, o);
  CHECK(res.start_projected);
  for (int k = 0; k < res.weights.size(); ++k) CHECK(res.weights[k] <= 2.0);
}

TEST_CASE("stochastic gradient estimates are unbiased toward the deterministic one") {
  PlanProblem p = small_plan(3);
  p.mesh = Mesh1D{801, 261, 2.0, 20.0, 150.0};
  p.grid = Grid{0.0, 2.0, 400, 20.0, 150.0, 130, 0};
  p.sim.step_len = 0.002;
  p.sim.threads = 2;
  OptConfig odet = quiet_opt();
  odet.gradient_mode = GradientMode::Adjoint;
  odet.forward_model = ForwardModel::Pde;

  const Prescription pr = p.realize_on_mesh();
  const Eigen::VectorXd c = Eigen::VectorXd::Ones(3);
  const Eigen::VectorXd g_det =
      gradient_adjoint_pde(c, p.bank, p.mesh, p.medium, pr, odet.alpha_reg,
                           1.0);

  // Hybrid gradients: MC forward (sigmas = 0), adjoint PDE backward.
  const int reps = 20;
  Eigen::MatrixXd samples(3, reps);
  for (int rep = 0; rep < reps; ++rep) {
    OptConfig o = quiet_opt();
    o.gradient_mode = GradientMode::Adjoint;
    o.forward_model = ForwardModel::MonteCarlo;
    o.n_mc = 6000;
    o.seed = 3000 + static_cast<std::uint64_t>(rep);
    samples.col(rep) = evaluate_plan_gradient(p, o, c, rep).grad;
  }
  // Component means sit within 3 standard errors of the deterministic
  // gradient, plus a small discretisation allowance (MC step and
  // bin-to-node mapping are O(step_len) and O(dz^2)).
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0;
    for (int rep = 0; rep < reps; ++rep) mean += samples(i, rep);
    mean /= reps;
    double sd = 0.0;
    for (int rep = 0; rep < reps; ++rep)
      sd += (samples(i, rep) - mean) * (samples(i, rep) - mean);
    sd = std::sqrt(sd / (reps - 1));
    const double se = sd / std::sqrt(double(reps));
    CHECK(std::abs(mean - g_det[i]) <=
          3.0 * se + 0.02 * std::abs(g_det[i]));
  }
}
