#pragma once
#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "protx/errors.hpp"
#include "protx/materials.hpp"
#include "protx/tally.hpp"

namespace protx {

// Uniform node mesh over [0, z_len] x [e_min, e_max]. Depth plane 0 is
// the inflow plane; the energy axis uses node spacing de with a zero
// ghost flux above e_max and an absorbing ghost below e_min.
struct Mesh1D {
  int n_z = 101;
  int n_e = 101;
  double z_len = 8.5;
  double e_min = 1.0;
  double e_max = 150.0;

  double dz() const { return z_len / (n_z - 1); }
  double de() const { return (e_max - e_min) / (n_e - 1); }
  double z(int i) const { return i * dz(); }
  double e(int j) const { return e_min + j * de(); }
  int idx(int i, int j) const { return i * n_e + j; }
  int n_nodes() const { return n_z * n_e; }

  std::vector<std::string> check(const std::string& path = "mesh") const;
  void validate() const;
};

struct Field2D {
  enum class Role { Fluence, Adjoint, Residual };

  Mesh1D mesh;
  Eigen::VectorXd values;  // node-ordered, idx(i, j)
  Role role = Role::Fluence;

  double at(int i, int j) const { return values[mesh.idx(i, j)]; }
};

// Accuracy guard for the upwind energy flux: max_j S(E_j) dz / de must
// not exceed `safety`. Throws ConfigError naming the offending ratio.
void check_cfl(const Mesh1D& mesh, const Medium& medium, double safety = 1.0);

// Forward CSDA transport  d_z psi - d_E(S psi) = 0,  psi(0, .) = g,
// marched in depth with a conservative upwind flux in energy (energy
// flows downward; flux from above e_max is zero). The scheme is the
// first-order upwind pair in (z, E) with the energy flux taken at the
// current plane, which keeps psi >= 0 for g >= 0 and makes the assembled
// operator's symmetric part positive semidefinite when dS/dE <= 0.
Field2D solve_forward(const Eigen::VectorXd& g_spectrum, const Mesh1D& mesh,
                      const Medium& medium);

// Depth dose of a fluence field: D_i = sum_j S(E_j)/rho psi_ij de.
Eigen::VectorXd dose_of(const Field2D& psi, const Medium& medium);

// Discrete adjoint of the forward solve for the weighted least-squares
// dose mismatch: solves A^T z = C^T (2 q w .* residual * dz) by marching
// backward in depth, with z = 0 built in on the outflow and
// energy-exhaustion boundaries. The inflow-plane trace of z is the exact
// gradient of  sum_i w_i (D_i - d_i)^2 dz  with respect to the inflow
// spectrum g.
Field2D solve_adjoint(const Eigen::VectorXd& residual, const Eigen::VectorXd& w,
                      double q_factor, const Mesh1D& mesh,
                      const Medium& medium);

Eigen::VectorXd inflow_trace(const Field2D& z);

// Sparse matrix A with identity rows on the inflow plane and the upwind
// stencil elsewhere; solve_forward(g) solves A psi = (g; 0; ...).
Eigen::SparseMatrix<double> assemble_operator(const Mesh1D& mesh,
                                              const Medium& medium);

// Smallest eigenvalue of the symmetric part of A restricted to the
// inflow-vanishing subspace (all planes i >= 1; the e_max condition is
// carried by the zero ghost flux, not by a constrained node). Dense
// eigensolve; requires (n_z - 1) * n_e <= 5000.
double monotonicity_check(const Eigen::SparseMatrix<double>& op,
                          const Mesh1D& mesh);

// Bin averages of a node field over a tally grid (for MC comparison and
// CSV export). Node quadrature uses trapezoid weights; bins outside the
// mesh get zero.
std::vector<double> restrict_to_grid(const Field2D& field, const Grid& grid);

// Same restriction for a per-node depth curve.
std::vector<double> restrict_depth_curve(const Eigen::VectorXd& values,
                                         const Mesh1D& mesh, const Grid& grid);

}  // namespace protx
