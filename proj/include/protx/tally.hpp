#pragma once
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protx/materials.hpp"
#include "protx/track.hpp"

namespace protx {

struct BeamSource;       // sde_engine.hpp
struct TransportProblem; // sde_engine.hpp
struct SimConfig;        // sde_engine.hpp

// Uniform binning of the (depth, energy[, direction-cosine]) phase space.
// The angular axis is optional and only used in 3d mode.
struct Grid {
  double z_lo = 0.0, z_hi = 8.5;
  int n_z = 85;
  double e_lo = 1.0, e_hi = 150.0;
  int n_e = 149;
  int n_angle = 0;  // cos-theta bins over [-1, 1]; 0 disables the axis

  double dz() const { return (z_hi - z_lo) / n_z; }
  double de() const { return (e_hi - e_lo) / n_e; }
  double dmu() const { return 2.0 / n_angle; }
  int angle_stride() const { return n_angle > 0 ? n_angle : 1; }
  int n_bins() const { return n_z * n_e * angle_stride(); }

  // Measure of one bin in the tallied coordinates.
  double bin_volume() const {
    return dz() * de() * (n_angle > 0 ? dmu() : 1.0);
  }

  int z_index(double z) const;                       // -1 if outside
  int index(double z, double e, double mu_cos) const;

  // Depth-major flat layout: ((iz * n_e) + ie) * angle_stride + ia.
  int flat(int iz, int ie, int ia = 0) const {
    return (iz * n_e + ie) * angle_stride() + ia;
  }

  std::vector<std::string> check(const std::string& path = "grid") const;
  void validate() const;
  bool same_shape(const Grid& o) const;
};

// Reusable per-history accumulation buffer: bins touched by one history
// are collected here, then flushed into (sum, sum of squares) so per-bin
// sample variances come out of history statistics.
class BinScratch {
 public:
  void reset(int n_bins);
  void add(int bin, double x);
  // Calls f(bin, value) for every touched bin, then clears.
  void flush(const std::function<void(int, double)>& f);

 private:
  std::vector<double> value_;
  std::vector<int> touched_;
};

// Track-length estimator of the occupation density (fluence): each
// segment adds its length to the bin containing its midpoint, divided by
// the bin volume. Out-of-grid segments go to an overflow counter.
class FluenceMap {
 public:
  explicit FluenceMap(Grid grid);

  void deposit(std::span<const TrackEvent> history, BinScratch& scratch);
  void merge(const FluenceMap& other);

  const Grid& grid() const { return grid_; }
  std::int64_t histories() const { return n_hist_; }
  double mean(int bin) const;       // per history
  double stderr_of(int bin) const;  // standard error of the mean
  std::int64_t overflow_segments() const { return overflow_segments_; }
  double overflow_length() const { return overflow_length_; }

 private:
  Grid grid_;
  std::vector<double> sum_, sumsq_;
  std::int64_t n_hist_ = 0;
  std::int64_t overflow_segments_ = 0;
  double overflow_length_ = 0.0;
};

// Direct dose estimator: per-segment continuous energy loss scored to the
// depth bin of the segment midpoint, per unit mass (rho * dz).
class DoseMap {
 public:
  explicit DoseMap(Grid grid);

  void deposit(std::span<const TrackEvent> history, const MediumStack& stack,
               BinScratch& scratch);
  void merge(const DoseMap& other);

  const Grid& grid() const { return grid_; }
  std::int64_t histories() const { return n_hist_; }
  double dose(int iz) const;  // MeV/g per history
  double stderr_of(int iz) const;
  std::int64_t overflow_segments() const { return overflow_segments_; }
  double overflow_energy() const { return overflow_energy_; }

 private:
  Grid grid_;
  std::vector<double> sum_, sumsq_;
  std::int64_t n_hist_ = 0;
  std::int64_t overflow_segments_ = 0;
  double overflow_energy_ = 0.0;
};

// Plain per-depth dose curve (values + standard errors).
struct DoseCurve {
  Grid grid;
  std::vector<double> dose;
  std::vector<double> stderr_;
};

// dose = fluence x mass stopping power, marginalised over energy (and
// angle): D_i = sum_j psi_ij S(E_j)/rho(z_i) dE [dmu]. Per-bin errors are
// propagated as if bins were independent.
DoseCurve dose_from_fluence(const FluenceMap& fluence,
                            const MediumStack& stack);

// Snapshot of the direct estimator.
DoseCurve curve_of(const DoseMap& dose);

struct ResolventEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::int64_t n = 0;
};

// Monte Carlo estimate of R_lambda[v](source) = E[ integral of
// e^(-lambda l) v(Y_l) dl up to absorption ], accumulated segment-wise at
// midpoint track length. v(cemetery) = 0 holds by construction because
// only live segments are visited.
ResolventEstimate estimate_resolvent(
    const std::function<double(const PhaseState&)>& v, double lambda,
    const BeamSource& source, const TransportProblem& problem,
    const SimConfig& config, std::int64_t n);

}  // namespace protx
