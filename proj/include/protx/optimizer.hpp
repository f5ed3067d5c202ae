#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "protx/pde1d.hpp"
#include "protx/sde_engine.hpp"

namespace protx {

// Bank of Gaussian pencil beams; the control vector holds one
// nonnegative weight (particle count) per beam.
struct BeamBank {
  std::vector<BeamComponent> beams;  // weight fields hold the initial guess

  int n() const { return static_cast<int>(beams.size()); }
  Eigen::VectorXd initial_weights() const;

  // Unit-mass spectra on the mesh energy nodes: column k satisfies
  // sum_j phi_jk de = 1 (sigma = 0 collapses onto the nearest node).
  Eigen::MatrixXd spectra(const Mesh1D& mesh) const;

  // Single-beam source with unit weight, for influence columns.
  BeamSource source_for(int k, const Vec3& position,
                        const Vec3& direction) const;

  std::vector<std::string> check(const EnergyWindow& window,
                                 const std::string& path = "bank") const;
};

// Prescribed dose and spatial weights sampled on a depth axis (mesh
// nodes or tally-grid bin centers) with quadrature spacing dz.
struct Prescription {
  Eigen::VectorXd d;
  Eigen::VectorXd w;
  double dz = 0.0;
  double z_lo_target = 3.0, z_hi_target = 6.0;
  double level = 1.0;

  static Prescription uniform_target(const std::vector<double>& z_samples,
                                     double dz, double level, double z_lo,
                                     double z_hi, double w_in, double w_out);
  std::vector<std::string> check(const std::string& path = "prescription") const;
};

enum class StepRule { Backtracking, Fixed, Exact };
enum class GradientMode { Influence, Adjoint };
enum class ForwardModel { Pde, MonteCarlo };

struct OptConfig {
  double alpha_reg = 1e-4;
  StepRule step_rule = StepRule::Backtracking;
  double tau0 = 1.0;          // initial step size
  double decay_k0 = 20.0;     // fixed rule: tau_k = tau0 / (1 + k/k0)
  double armijo_c = 1e-4;
  double shrink = 0.5;
  double tol_eps = 1e-8;
  int max_iters = 20000;
  int n_mc = 20000;           // particles per Monte Carlo forward solve
  int n_scenarios = 1;
  ScenarioParams scenario{0.0, 0.0, 0.2};
  double g_max = 0.0;         // <= 0: auto, 10x the uniform-weight scale
  GradientMode gradient_mode = GradientMode::Influence;
  ForwardModel forward_model = ForwardModel::Pde;
  std::uint64_t seed = 1;

  std::vector<std::string> check(const std::string& path = "optimizer") const;
  void validate() const;
};

// Everything a plan optimization needs; transport/sim/grid are only used
// when the forward model is Monte Carlo.
struct PlanProblem {
  BeamBank bank;
  double target_level = 1.0;
  double target_z_lo = 3.0, target_z_hi = 6.0;
  double weight_in = 1.0, weight_out = 0.1;
  Medium medium;
  Mesh1D mesh;
  TransportProblem transport;
  SimConfig sim;
  Grid grid;
  double q_factor = 1.0;

  Prescription realize_on_mesh() const;
  Prescription realize_on_grid() const;
};

// Dose-influence matrix: column k is the depth dose per unit weight of
// beam k. Pde mode evaluates on mesh nodes; MonteCarlo mode on the tally
// grid's depth bins with per-column substreams of `seed`.
Eigen::MatrixXd influence_matrix(const BeamBank& bank, const PlanProblem& prob,
                                 ForwardModel model, const Medium& medium,
                                 std::uint64_t seed);

double cost(const Eigen::VectorXd& weights, const Eigen::MatrixXd& influence,
            const Prescription& pr, double alpha_reg);

Eigen::VectorXd gradient_influence(const Eigen::VectorXd& weights,
                                   const Eigen::MatrixXd& influence,
                                   const Prescription& pr, double alpha_reg);

// Adjoint-route gradient on the mesh axis for one (possibly perturbed)
// medium: Phi^T [inflow trace of the adjoint] + alpha_reg * weights.
Eigen::VectorXd gradient_adjoint_pde(const Eigen::VectorXd& weights,
                                     const BeamBank& bank, const Mesh1D& mesh,
                                     const Medium& medium,
                                     const Prescription& pr, double alpha_reg,
                                     double q_factor);

Eigen::VectorXd project(const Eigen::VectorXd& weights, double g_max);

// Canonical fixed-point residual || w - P(w - grad) ||; zero iff the
// box-constrained variational inequality holds at w.
double vi_residual(const Eigen::VectorXd& weights, const Eigen::VectorXd& grad,
                   double g_max);

struct ExpectedCostEstimate {
  double value = 0.0;     // mean fidelity + regularization
  double stderr_ = 0.0;   // scenario-sampling error of the fidelity mean
  double fidelity_mean = 0.0;
  Eigen::VectorXd mean_dose;
};

// Risk-neutral cost: expectation outside the square, estimated over
// n_scenarios perturbed media (PDE forward). Scenario streams derive
// from (seed, scenario index).
ExpectedCostEstimate expected_cost(const Eigen::VectorXd& weights,
                                   const PlanProblem& prob,
                                   const OptConfig& opt);

struct GradientEval {
  double cost = 0.0;
  Eigen::VectorXd grad;
};

// One cost+gradient evaluation through the mode dispatch used by
// optimize() (influence/adjoint x PDE/Monte-Carlo), with the scenario
// and MC randomness frozen for the given iteration index.
GradientEval evaluate_plan_gradient(const PlanProblem& prob,
                                    const OptConfig& opt,
                                    const Eigen::VectorXd& weights,
                                    int iteration = 0);

struct OptResult {
  Eigen::VectorXd weights;
  std::vector<double> cost_trace;
  std::vector<double> vi_trace;
  std::vector<double> grad_norm_trace;  // || z + alpha g ||, as in the paper
  int iterations = 0;
  bool converged = false;
  bool start_projected = false;
  double g_max_used = 0.0;
  Eigen::VectorXd final_dose;           // on the axis the run optimized over
  std::vector<double> dose_axis;        // depth samples for final_dose
};

// Projected-gradient loop: forward solve (PDE or MC), gradient (adjoint
// or influence), projected update, convergence on the fixed-point
// residual. Scenario and MC draws are frozen within each iteration's
// line search (common random numbers).
OptResult optimize(const PlanProblem& prob, const OptConfig& opt);

}  // namespace protx
