#include "protx/pde1d.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace protx {

std::vector<std::string> Mesh1D::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (n_z < 2) errs.push_back(path + ".n_z: must be >= 2");
  if (n_e < 2) errs.push_back(path + ".n_e: must be >= 2");
  if (!(z_len > 0.0)) errs.push_back(path + ".z_len: must be > 0");
  if (!(e_min > 0.0 && e_min < e_max))
    errs.push_back(path + ": need 0 < e_min < e_max");
  return errs;
}

void Mesh1D::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

void check_cfl(const Mesh1D& mesh, const Medium& medium, double safety) {
  double worst = 0.0;
  double worst_e = mesh.e_min;
  for (int j = 0; j < mesh.n_e; ++j) {
    const double r = stopping_power(medium, mesh.e(j)) * mesh.dz() / mesh.de();
    if (r > worst) {
      worst = r;
      worst_e = mesh.e(j);
    }
  }
  if (worst > safety) {
    std::ostringstream msg;
    msg << "mesh: CFL-type ratio S*dz/de = " << worst << " at E = " << worst_e
        << " MeV exceeds " << safety << "; refine n_z or coarsen n_e";
    throw ConfigError(msg.str());
  }
}

namespace {

std::vector<double> node_stopping_power(const Mesh1D& mesh,
                                        const Medium& medium) {
  std::vector<double> s(mesh.n_e);
  for (int j = 0; j < mesh.n_e; ++j) s[j] = stopping_power(medium, mesh.e(j));
  return s;
}

}  // namespace

Field2D solve_forward(const Eigen::VectorXd& g_spectrum, const Mesh1D& mesh,
                      const Medium& medium) {
  mesh.validate();
  if (g_spectrum.size() != mesh.n_e)
    throw std::invalid_argument("solve_forward: spectrum size != n_e");
  check_cfl(mesh, medium);

  const auto s = node_stopping_power(mesh, medium);
  const double r = mesh.dz() / mesh.de();

  Field2D psi;
  psi.mesh = mesh;
  psi.role = Field2D::Role::Fluence;
  psi.values.setZero(mesh.n_nodes());
  for (int j = 0; j < mesh.n_e; ++j) psi.values[mesh.idx(0, j)] = g_spectrum[j];

  // Per plane: (I + dz*Mtilde) psi_i = psi_{i-1}, with Mtilde the
  // conservative upwind flux (S_j psi_j - S_{j+1} psi_{j+1}) / de.
  // Upper bidiagonal; back substitution from the top energy node, whose
  // inflow flux from above the window is zero.
  for (int i = 1; i < mesh.n_z; ++i) {
    const int prev = mesh.idx(i - 1, 0);
    const int cur = mesh.idx(i, 0);
    double upper = 0.0;  // S_{j+1} psi_{i, j+1}
    for (int j = mesh.n_e - 1; j >= 0; --j) {
      const double rhs = psi.values[prev + j] + r * upper;
      const double v = rhs / (1.0 + r * s[j]);
      psi.values[cur + j] = v;
      upper = s[j] * v;
    }
  }
  return psi;
}

Eigen::VectorXd dose_of(const Field2D& psi, const Medium& medium) {
  const Mesh1D& mesh = psi.mesh;
  const auto s = node_stopping_power(mesh, medium);
  Eigen::VectorXd dose(mesh.n_z);
  for (int i = 0; i < mesh.n_z; ++i) {
    double acc = 0.0;
    for (int j = 0; j < mesh.n_e; ++j)
      acc += s[j] * psi.values[mesh.idx(i, j)];
    dose[i] = acc * mesh.de() / medium.rho;
  }
  return dose;
}

Field2D solve_adjoint(const Eigen::VectorXd& residual, const Eigen::VectorXd& w,
                      double q_factor, const Mesh1D& mesh,
                      const Medium& medium) {
  mesh.validate();
  if (residual.size() != mesh.n_z || w.size() != mesh.n_z)
    throw std::invalid_argument("solve_adjoint: residual/weights size != n_z");
  check_cfl(mesh, medium);

  const auto s = node_stopping_power(mesh, medium);
  const double dz = mesh.dz();
  const double de = mesh.de();
  const double r = dz / de;

  // Source s_{i,j} = S_j/rho * de * (2 q w_i residual_i dz): the exact
  // transpose of the dose-mismatch chain.
  Eigen::VectorXd src(mesh.n_z);
  for (int i = 0; i < mesh.n_z; ++i)
    src[i] = 2.0 * q_factor * w[i] * residual[i] * dz;

  Field2D zf;
  zf.mesh = mesh;
  zf.role = Field2D::Role::Adjoint;
  zf.values.setZero(mesh.n_nodes());

  // March backward in depth. Plane rows of A^T for i >= 1 read
  //   (I/dz + Mtilde^T) z_i = s_i + z_{i+1}/dz      (ghost z_{n_z} = 0),
  // where Mtilde^T z|_j = S_j (z_j - z_{j-1}) / de advects upward in
  // energy with ghost z_{-1} = 0 (the Gamma+ conditions). The inflow
  // plane carries identity rows: z_0 = s_0 + z_1/dz.
  Eigen::VectorXd plane = Eigen::VectorXd::Zero(mesh.n_e);
  for (int i = mesh.n_z - 1; i >= 1; --i) {
    double below = 0.0;  // z_{i, j-1}
    for (int j = 0; j < mesh.n_e; ++j) {
      const double source_ij = s[j] / medium.rho * de * src[i];
      const double rhs = source_ij + plane[j] / dz + (s[j] / de) * below;
      const double v = rhs / (1.0 / dz + s[j] / de);
      zf.values[mesh.idx(i, j)] = v;
      below = v;
    }
    for (int j = 0; j < mesh.n_e; ++j) plane[j] = zf.values[mesh.idx(i, j)];
  }
  for (int j = 0; j < mesh.n_e; ++j) {
    const double source_0j = s[j] / medium.rho * de * src[0];
    zf.values[mesh.idx(0, j)] = source_0j + plane[j] / dz;
  }
  return zf;
}

Eigen::VectorXd inflow_trace(const Field2D& z) {
  Eigen::VectorXd g(z.mesh.n_e);
  for (int j = 0; j < z.mesh.n_e; ++j) g[j] = z.values[z.mesh.idx(0, j)];
  return g;
}

Eigen::SparseMatrix<double> assemble_operator(const Mesh1D& mesh,
                                              const Medium& medium) {
  mesh.validate();
  const auto s = node_stopping_power(mesh, medium);
  const double dz = mesh.dz();
  const double de = mesh.de();

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh.n_nodes()) * 3);
  for (int j = 0; j < mesh.n_e; ++j)
    trips.emplace_back(mesh.idx(0, j), mesh.idx(0, j), 1.0);
  for (int i = 1; i < mesh.n_z; ++i) {
    for (int j = 0; j < mesh.n_e; ++j) {
      const int row = mesh.idx(i, j);
      trips.emplace_back(row, row, 1.0 / dz + s[j] / de);
      trips.emplace_back(row, mesh.idx(i - 1, j), -1.0 / dz);
      if (j + 1 < mesh.n_e)
        trips.emplace_back(row, mesh.idx(i, j + 1), -s[j + 1] / de);
    }
  }
  Eigen::SparseMatrix<double> A(mesh.n_nodes(), mesh.n_nodes());
  A.setFromTriplets(trips.begin(), trips.end());
  return A;
}

double monotonicity_check(const Eigen::SparseMatrix<double>& op,
                          const Mesh1D& mesh) {
  const int n_sub = (mesh.n_z - 1) * mesh.n_e;
  if (n_sub > 5000)
    throw std::invalid_argument(
        "monotonicity_check: mesh too large for a dense eigensolve");
  const int offset = mesh.n_e;  // drop the inflow plane
  Eigen::MatrixXd sym = Eigen::MatrixXd::Zero(n_sub, n_sub);
  for (int k = 0; k < op.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(op, k); it; ++it) {
      const int r = static_cast<int>(it.row()) - offset;
      const int c = static_cast<int>(it.col()) - offset;
      if (r < 0 || c < 0) continue;
      sym(r, c) += 0.5 * it.value();
      sym(c, r) += 0.5 * it.value();
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym,
                                                        Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

namespace {

double trapezoid_weight(int i, int n) { return (i == 0 || i == n - 1) ? 0.5 : 1.0; }

}  // namespace

std::vector<double> restrict_to_grid(const Field2D& field, const Grid& grid) {
  Grid flat = grid;
  flat.n_angle = 0;  // node fields carry no angular axis
  const Mesh1D& mesh = field.mesh;
  std::vector<double> out(static_cast<std::size_t>(flat.n_z) * flat.n_e, 0.0);
  const double cell = mesh.dz() * mesh.de();
  // Nodes landing exactly on the top edges belong to the closure of the
  // last bin.
  auto clamped_bin = [&flat](double z, double e) -> int {
    int iz = flat.z_index(z);
    if (iz < 0 && z == flat.z_hi) iz = flat.n_z - 1;
    if (iz < 0) return -1;
    if (e < flat.e_lo || e > flat.e_hi) return -1;
    int ie = e == flat.e_hi ? flat.n_e - 1
                            : static_cast<int>((e - flat.e_lo) / flat.de());
    if (ie >= flat.n_e) ie = flat.n_e - 1;
    return flat.flat(iz, ie);
  };
  for (int i = 0; i < mesh.n_z; ++i) {
    const double wz = trapezoid_weight(i, mesh.n_z);
    const double zc = mesh.z(i);
    for (int j = 0; j < mesh.n_e; ++j) {
      const int bin = clamped_bin(zc, mesh.e(j));
      if (bin < 0) continue;
      out[bin] += field.values[mesh.idx(i, j)] * wz *
                  trapezoid_weight(j, mesh.n_e) * cell;
    }
  }
  const double vol = flat.dz() * flat.de();
  for (double& v : out) v /= vol;
  return out;
}

std::vector<double> restrict_depth_curve(const Eigen::VectorXd& values,
                                         const Mesh1D& mesh, const Grid& grid) {
  std::vector<double> out(grid.n_z, 0.0);
  for (int i = 0; i < mesh.n_z; ++i) {
    const int iz = grid.z_index(mesh.z(i));
    if (iz < 0) continue;
    out[iz] += values[i] * trapezoid_weight(i, mesh.n_z) * mesh.dz();
  }
  for (double& v : out) v /= grid.dz();
  return out;
}

}  // namespace protx
