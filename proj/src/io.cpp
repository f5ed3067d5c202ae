#include "protx/io.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace protx {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

namespace {

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

void write_fluence_csv(const std::string& path, const FluenceMap& map) {
  auto out = open_or_throw(path);
  const Grid& g = map.grid();
  const bool angular = g.n_angle > 0;
  out << "z_lo_cm,z_hi_cm,E_lo_MeV,E_hi_MeV";
  if (angular) out << ",mu_lo,mu_hi";
  out << ",fluence_per_cm_MeV,fluence_stderr\n";
  for (int iz = 0; iz < g.n_z; ++iz) {
    for (int ie = 0; ie < g.n_e; ++ie) {
      for (int ia = 0; ia < g.angle_stride(); ++ia) {
        const int bin = g.flat(iz, ie, ia);
        out << format_double(g.z_lo + iz * g.dz()) << ','
            << format_double(g.z_lo + (iz + 1) * g.dz()) << ','
            << format_double(g.e_lo + ie * g.de()) << ','
            << format_double(g.e_lo + (ie + 1) * g.de());
        if (angular)
          out << ',' << format_double(-1.0 + ia * g.dmu()) << ','
              << format_double(-1.0 + (ia + 1) * g.dmu());
        out << ',' << format_double(map.mean(bin)) << ','
            << format_double(map.stderr_of(bin)) << '\n';
      }
    }
  }
}

void write_field_csv(const std::string& path, const Grid& grid,
                     const std::vector<double>& values) {
  auto out = open_or_throw(path);
  out << "z_lo_cm,z_hi_cm,E_lo_MeV,E_hi_MeV,fluence_per_cm_MeV,fluence_stderr\n";
  for (int iz = 0; iz < grid.n_z; ++iz) {
    for (int ie = 0; ie < grid.n_e; ++ie) {
      out << format_double(grid.z_lo + iz * grid.dz()) << ','
          << format_double(grid.z_lo + (iz + 1) * grid.dz()) << ','
          << format_double(grid.e_lo + ie * grid.de()) << ','
          << format_double(grid.e_lo + (ie + 1) * grid.de()) << ','
          << format_double(values[iz * grid.n_e + ie]) << ",0\n";
    }
  }
}

void write_dose_csv(const std::string& path, const DoseCurve& curve) {
  auto out = open_or_throw(path);
  const Grid& g = curve.grid;
  out << "z_lo_cm,z_hi_cm,dose_MeV_per_g,dose_stderr\n";
  for (int iz = 0; iz < g.n_z; ++iz) {
    out << format_double(g.z_lo + iz * g.dz()) << ','
        << format_double(g.z_lo + (iz + 1) * g.dz()) << ','
        << format_double(curve.dose[iz]) << ','
        << format_double(curve.stderr_[iz]) << '\n';
  }
}

void write_dose_samples_csv(const std::string& path,
                            const std::vector<double>& z,
                            const Eigen::VectorXd& dose) {
  auto out = open_or_throw(path);
  out << "z_lo_cm,z_hi_cm,dose_MeV_per_g,dose_stderr\n";
  const double half =
      z.size() > 1 ? 0.5 * (z[1] - z[0]) : 0.5;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out << format_double(z[i] - half) << ',' << format_double(z[i] + half)
        << ',' << format_double(dose[static_cast<int>(i)]) << ",0\n";
  }
}

void write_weights_csv(const std::string& path, const BeamBank& bank,
                       const Eigen::VectorXd& weights) {
  auto out = open_or_throw(path);
  out << "beam,energy_mean_MeV,energy_sigma_MeV,weight\n";
  for (int k = 0; k < bank.n(); ++k) {
    out << k << ',' << format_double(bank.beams[k].energy_mean) << ','
        << format_double(bank.beams[k].energy_sigma) << ','
        << format_double(weights[k]) << '\n';
  }
}

void write_trace_csv(const std::string& path, const OptResult& result) {
  auto out = open_or_throw(path);
  out << "iteration,cost,vi_residual,grad_norm\n";
  for (std::size_t k = 0; k < result.cost_trace.size(); ++k) {
    out << k << ',' << format_double(result.cost_trace[k]) << ','
        << format_double(result.vi_trace[k]) << ','
        << format_double(result.grad_norm_trace[k]) << '\n';
  }
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  auto out = open_or_throw(path);
  for (const auto& e : entries) out << e.key << ": " << e.value << '\n';
}

}  // namespace protx
