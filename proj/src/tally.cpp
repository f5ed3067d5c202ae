#include "protx/tally.hpp"

#include <cmath>
#include <stdexcept>

#include "protx/sde_engine.hpp"

namespace protx {

int Grid::z_index(double z) const {
  if (z < z_lo || z >= z_hi) return -1;
  const int i = static_cast<int>((z - z_lo) / dz());
  return i < n_z ? i : n_z - 1;
}

int Grid::index(double z, double e, double mu_cos) const {
  const int iz = z_index(z);
  if (iz < 0) return -1;
  if (e < e_lo || e >= e_hi) return -1;
  int ie = static_cast<int>((e - e_lo) / de());
  if (ie >= n_e) ie = n_e - 1;
  int ia = 0;
  if (n_angle > 0) {
    if (mu_cos < -1.0 || mu_cos > 1.0) return -1;
    ia = static_cast<int>((mu_cos + 1.0) / dmu());
    if (ia >= n_angle) ia = n_angle - 1;
  }
  return flat(iz, ie, ia);
}

std::vector<std::string> Grid::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(z_lo < z_hi)) errs.push_back(path + ": need z_lo < z_hi");
  if (n_z < 1) errs.push_back(path + ".n_z: must be >= 1");
  if (!(e_lo < e_hi)) errs.push_back(path + ": need e_lo < e_hi");
  if (n_e < 1) errs.push_back(path + ".n_e: must be >= 1");
  if (n_angle < 0) errs.push_back(path + ".n_angle: must be >= 0");
  return errs;
}

void Grid::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

bool Grid::same_shape(const Grid& o) const {
  return z_lo == o.z_lo && z_hi == o.z_hi && n_z == o.n_z && e_lo == o.e_lo &&
         e_hi == o.e_hi && n_e == o.n_e && n_angle == o.n_angle;
}

void BinScratch::reset(int n_bins) {
  if (static_cast<int>(value_.size()) != n_bins) {
    value_.assign(n_bins, 0.0);
    touched_.clear();
  }
}

void BinScratch::add(int bin, double x) {
  if (value_[bin] == 0.0) touched_.push_back(bin);
  value_[bin] += x;
}

void BinScratch::flush(const std::function<void(int, double)>& f) {
  for (int bin : touched_) {
    if (value_[bin] != 0.0) f(bin, value_[bin]);
    value_[bin] = 0.0;
  }
  touched_.clear();
}

FluenceMap::FluenceMap(Grid grid)
    : grid_(grid), sum_(grid.n_bins(), 0.0), sumsq_(grid.n_bins(), 0.0) {
  grid_.validate();
}

void FluenceMap::deposit(std::span<const TrackEvent> history,
                         BinScratch& scratch) {
  if (history.empty()) return;
  scratch.reset(grid_.n_bins());
  const double inv_vol = 1.0 / grid_.bin_volume();
  for (const TrackEvent& ev : history) {
    if (!(ev.seg_len > 0.0)) continue;
    const double zm = 0.5 * (ev.start.position.z + ev.end.position.z);
    const double em = 0.5 * (ev.start.energy + ev.end.energy);
    const int bin = grid_.index(zm, em, ev.start.direction.z);
    if (bin < 0) {
      ++overflow_segments_;
      overflow_length_ += ev.seg_len;
      continue;
    }
    scratch.add(bin, ev.seg_len * inv_vol);
  }
  scratch.flush([this](int bin, double x) {
    sum_[bin] += x;
    sumsq_[bin] += x * x;
  });
  ++n_hist_;
}

void FluenceMap::merge(const FluenceMap& other) {
  if (!grid_.same_shape(other.grid_))
    throw std::invalid_argument("FluenceMap::merge: grid shape mismatch");
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
    sumsq_[i] += other.sumsq_[i];
  }
  n_hist_ += other.n_hist_;
  overflow_segments_ += other.overflow_segments_;
  overflow_length_ += other.overflow_length_;
}

double FluenceMap::mean(int bin) const {
  return n_hist_ > 0 ? sum_[bin] / static_cast<double>(n_hist_) : 0.0;
}

double FluenceMap::stderr_of(int bin) const {
  if (n_hist_ < 2) return 0.0;
  const double n = static_cast<double>(n_hist_);
  const double m = sum_[bin] / n;
  const double var = std::max(0.0, sumsq_[bin] / n - m * m);
  return std::sqrt(var / n);
}

DoseMap::DoseMap(Grid grid)
    : grid_(grid), sum_(grid.n_z, 0.0), sumsq_(grid.n_z, 0.0) {
  grid_.validate();
}

void DoseMap::deposit(std::span<const TrackEvent> history,
                      const MediumStack& stack, BinScratch& scratch) {
  if (history.empty()) return;
  scratch.reset(grid_.n_z);
  const double dz = grid_.dz();
  for (const TrackEvent& ev : history) {
    if (!(ev.deposited_energy > 0.0)) continue;
    const double zm = 0.5 * (ev.start.position.z + ev.end.position.z);
    const int iz = grid_.z_index(zm);
    if (iz < 0) {
      ++overflow_segments_;
      overflow_energy_ += ev.deposited_energy;
      continue;
    }
    scratch.add(iz, ev.deposited_energy / (stack.at(zm).rho * dz));
  }
  scratch.flush([this](int bin, double x) {
    sum_[bin] += x;
    sumsq_[bin] += x * x;
  });
  ++n_hist_;
}

void DoseMap::merge(const DoseMap& other) {
  if (!grid_.same_shape(other.grid_))
    throw std::invalid_argument("DoseMap::merge: grid shape mismatch");
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
    sumsq_[i] += other.sumsq_[i];
  }
  n_hist_ += other.n_hist_;
  overflow_segments_ += other.overflow_segments_;
  overflow_energy_ += other.overflow_energy_;
}

double DoseMap::dose(int iz) const {
  return n_hist_ > 0 ? sum_[iz] / static_cast<double>(n_hist_) : 0.0;
}

double DoseMap::stderr_of(int iz) const {
  if (n_hist_ < 2) return 0.0;
  const double n = static_cast<double>(n_hist_);
  const double m = sum_[iz] / n;
  const double var = std::max(0.0, sumsq_[iz] / n - m * m);
  return std::sqrt(var / n);
}

DoseCurve dose_from_fluence(const FluenceMap& fluence,
                            const MediumStack& stack) {
  const Grid& g = fluence.grid();
  DoseCurve out;
  out.grid = g;
  out.dose.assign(g.n_z, 0.0);
  out.stderr_.assign(g.n_z, 0.0);
  const double de = g.de();
  const double dmu = g.n_angle > 0 ? g.dmu() : 1.0;
  for (int iz = 0; iz < g.n_z; ++iz) {
    const double zc = g.z_lo + (iz + 0.5) * g.dz();
    const Medium& med = stack.at(zc);
    double acc = 0.0, var = 0.0;
    for (int ie = 0; ie < g.n_e; ++ie) {
      const double ec = g.e_lo + (ie + 0.5) * de;
      const double factor = stopping_power(med, ec) / med.rho * de * dmu;
      for (int ia = 0; ia < g.angle_stride(); ++ia) {
        const int bin = g.flat(iz, ie, ia);
        acc += fluence.mean(bin) * factor;
        const double se = fluence.stderr_of(bin) * factor;
        var += se * se;
      }
    }
    out.dose[iz] = acc;
    out.stderr_[iz] = std::sqrt(var);
  }
  return out;
}

DoseCurve curve_of(const DoseMap& dose) {
  DoseCurve out;
  out.grid = dose.grid();
  out.dose.resize(out.grid.n_z);
  out.stderr_.resize(out.grid.n_z);
  for (int iz = 0; iz < out.grid.n_z; ++iz) {
    out.dose[iz] = dose.dose(iz);
    out.stderr_[iz] = dose.stderr_of(iz);
  }
  return out;
}

ResolventEstimate estimate_resolvent(
    const std::function<double(const PhaseState&)>& v, double lambda,
    const BeamSource& source, const TransportProblem& problem,
    const SimConfig& config, std::int64_t n) {
  if (lambda < 0.0)
    throw std::domain_error("estimate_resolvent: lambda must be >= 0");
  if (n < 1)
    throw std::invalid_argument("estimate_resolvent: n must be >= 1");
  double acc = 0.0, acc_sq = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    rng::Stream rs(config.seed, static_cast<std::uint64_t>(i));
    const PhaseState start = source.sample(problem.window, rs);
    const auto track = simulate_track(start, problem, config, rs);
    double score = 0.0;
    double len = 0.0;
    for (const TrackEvent& ev : track) {
      if (!(ev.seg_len > 0.0)) continue;
      const double l_mid = len + 0.5 * ev.seg_len;
      PhaseState mid = ev.start;
      mid.position = (ev.start.position + ev.end.position) * 0.5;
      mid.energy = 0.5 * (ev.start.energy + ev.end.energy);
      score += std::exp(-lambda * l_mid) * v(mid) * ev.seg_len;
      len += ev.seg_len;
    }
    acc += score;
    acc_sq += score * score;
  }
  ResolventEstimate est;
  est.n = n;
  const double nn = static_cast<double>(n);
  est.value = acc / nn;
  const double var = std::max(0.0, acc_sq / nn - est.value * est.value);
  est.stderr_ = n > 1 ? std::sqrt(var / nn) : 0.0;
  return est;
}

}  // namespace protx
