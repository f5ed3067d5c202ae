#include "protx/sde_engine.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace protx {

std::vector<std::string> SimConfig::check(const std::string& path) const {
  std::vector<std::string> errs;
  if (!(step_len > 0.0)) errs.push_back(path + ".step_len: must be > 0");
  if (!(max_track_len >= step_len))
    errs.push_back(path + ".max_track_len: must be >= step_len");
  if (n_particles < 1) errs.push_back(path + ".n_particles: must be >= 1");
  if (mu < 0.0) errs.push_back(path + ".mu: must be >= 0");
  if (threads < 0) errs.push_back(path + ".threads: must be >= 0");
  return errs;
}

void SimConfig::validate() const {
  const auto errs = check();
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

PhaseState BeamSource::sample(const EnergyWindow& window,
                              rng::Stream& rs) const {
  const BeamComponent* comp = &components.front();
  if (components.size() > 1) {
    double u = rs.uniform() * total_weight();
    for (const auto& c : components) {
      if (u < c.weight) {
        comp = &c;
        break;
      }
      u -= c.weight;
    }
  }
  PhaseState s;
  s.position = position;
  s.direction = direction.normalized();
  if (comp->energy_sigma > 0.0) {
    do {
      s.energy = comp->energy_mean + comp->energy_sigma * rs.normal();
    } while (!window.contains(s.energy));
  } else {
    s.energy = comp->energy_mean;
  }
  s.alive = true;
  return s;
}

double BeamSource::total_weight() const {
  double w = 0.0;
  for (const auto& c : components) w += c.weight;
  return w;
}

std::vector<std::string> BeamSource::check(const EnergyWindow& window,
                                           const std::string& path) const {
  std::vector<std::string> errs;
  if (components.empty()) {
    errs.push_back(path + ".beams: at least one beam required");
    return errs;
  }
  for (std::size_t i = 0; i < components.size(); ++i) {
    const std::string p = path + ".beams[" + std::to_string(i) + "]";
    const auto& c = components[i];
    if (!(c.weight >= 0.0)) errs.push_back(p + ".weight: must be >= 0");
    if (!(c.energy_sigma >= 0.0))
      errs.push_back(p + ".energy_sigma: must be >= 0");
    if (!window.contains(c.energy_mean))
      errs.push_back(p + ".energy_mean: outside the energy window (" +
                     std::to_string(window.e_min) + ", " +
                     std::to_string(window.e_max) + ")");
  }
  if (!(total_weight() > 0.0))
    errs.push_back(path + ".beams: total weight must be > 0");
  if (!(direction.norm() > 0.0))
    errs.push_back(path + ".direction: must be a nonzero vector");
  return errs;
}

void BeamSource::validate(const EnergyWindow& window) const {
  const auto errs = check(window);
  if (!errs.empty()) throw std::invalid_argument(errs.front());
}

PhaseState drift_diffuse_step(const PhaseState& state, double dt,
                              const MediumStack& stack,
                              const SimConfig& config, rng::Stream& rs) {
  PhaseState next = state;
  const Medium& med = stack.at(state.position.z);
  next.energy = state.energy - stopping_power(med, state.energy) * dt;
  next.position = state.position + state.direction * dt;
  if (config.mode == SimMode::ThreeD && config.mu > 0.0) {
    const double sqdt = std::sqrt(dt);
    const Vec3 db{rs.normal() * sqdt, rs.normal() * sqdt, rs.normal() * sqdt};
    const Vec3 w = state.direction * (1.0 - config.mu * config.mu * dt) +
                   state.direction.cross(db) * config.mu;
    next.direction = w.normalized();
  }
  return next;
}

double next_jump(double rate_bound, rng::Stream& rs) {
  if (rate_bound < 0.0)
    throw std::domain_error("next_jump: negative rate bound");
  return rs.exponential(rate_bound);
}

std::vector<TrackEvent> simulate_track(const PhaseState& start,
                                       const TransportProblem& problem,
                                       const SimConfig& config,
                                       rng::Stream& rs) {
  if (!start.alive)
    throw std::invalid_argument("simulate_track: cemetery start state");
  if (classify(start, problem.domain, problem.window) ==
      BoundaryClass::GammaPlus)
    throw std::invalid_argument("simulate_track: start classifies as Gamma+");

  const double rate_bound =
      problem.xs.max_total(problem.window.e_min, problem.window.e_max);
  double dist_to_jump = next_jump(rate_bound, rs);

  // Hard iteration bound: full steps are capped by the track-length
  // budget, jump candidates by the thinning rate; breach means a bug.
  const double budget = config.max_track_len;
  const long iter_cap = static_cast<long>(
      10.0 * (budget / config.step_len + rate_bound * budget + 64.0));

  std::vector<TrackEvent> events;
  PhaseState state = start;
  double track_len = 0.0;

  for (long iter = 0;; ++iter) {
    if (iter > iter_cap)
      throw std::runtime_error("simulate_track: iteration bound exceeded");

    double dt = std::min(config.step_len, config.max_track_len - track_len);
    bool jump_candidate = false;
    if (dist_to_jump <= dt) {
      dt = dist_to_jump;
      jump_candidate = true;
    }

    const PhaseState next = drift_diffuse_step(state, dt, problem.stack,
                                               config, rs);
    if (auto cross = exit_test(state, next, problem.domain, problem.window)) {
      TrackEvent ev;
      ev.start = state;
      ev.end = cross->state;
      ev.seg_len = dt * cross->frac;
      ev.deposited_energy = state.energy - cross->state.energy;
      ev.terminal = cross->energy_exhausted ? TerminalCause::RangeOut
                                            : TerminalCause::SpatialExit;
      events.push_back(ev);
      break;
    }

    TrackEvent ev;
    ev.start = state;
    ev.end = next;
    ev.seg_len = dt;
    ev.deposited_energy = state.energy - next.energy;
    track_len += dt;

    PhaseState after = next;
    if (jump_candidate) {
      dist_to_jump = next_jump(rate_bound, rs);
      const double rate_here = total_rate(next, problem.xs);
      if (rs.uniform() * rate_bound < rate_here) {
        const Transition tr =
            sample_transition(next, problem.xs, problem.kernel, rs);
        ev.jump_loss = next.energy - tr.energy;
        after.energy = tr.energy;
        if (config.mode == SimMode::ThreeD) after.direction = tr.direction;
        if (after.energy <= problem.window.e_min) {
          // Jumped through the energy floor: absorbed on the spot.
          ev.terminal = TerminalCause::RangeOut;
          events.push_back(ev);
          break;
        }
      }
    } else {
      dist_to_jump -= dt;
    }

    if (track_len >= config.max_track_len * (1.0 - 1e-12)) {
      ev.terminal = TerminalCause::MaxLength;
      events.push_back(ev);
      break;
    }
    events.push_back(ev);
    state = after;
  }
  return events;
}

EnergyLedger& EnergyLedger::operator+=(const EnergyLedger& o) {
  injected += o.injected;
  continuous_deposit += o.continuous_deposit;
  jump_deposit += o.jump_deposit;
  outflux_spatial += o.outflux_spatial;
  rangeout_residual += o.rangeout_residual;
  censored_residual += o.censored_residual;
  return *this;
}

namespace {

struct LaneTally {
  FluenceMap fluence;
  DoseMap dose;
  EnergyLedger ledger;
  explicit LaneTally(const Grid& grid) : fluence(grid), dose(grid) {}
};

void tally_history(LaneTally& lane, const PhaseState& start,
                   std::span<const TrackEvent> track, const MediumStack& stack,
                   BinScratch& scratch_f, BinScratch& scratch_d) {
  lane.fluence.deposit(track, scratch_f);
  lane.dose.deposit(track, stack, scratch_d);
  EnergyLedger& led = lane.ledger;
  led.injected += start.energy;
  for (const TrackEvent& ev : track) {
    led.continuous_deposit += ev.deposited_energy;
    led.jump_deposit += ev.jump_loss;
  }
  const TrackEvent& last = track.back();
  const double residual = last.end.energy - last.jump_loss;
  switch (last.terminal) {
    case TerminalCause::RangeOut: led.rangeout_residual += residual; break;
    case TerminalCause::SpatialExit: led.outflux_spatial += residual; break;
    case TerminalCause::MaxLength: led.censored_residual += residual; break;
    case TerminalCause::None: break;
  }
}

}  // namespace

BatchResult run_batch(const BeamSource& source, const TransportProblem& problem,
                      const SimConfig& config, const Grid& grid) {
  config.validate();
  source.validate(problem.window);
  grid.validate();
  const std::int64_t n = config.n_particles;

  // Fixed number of virtual lanes; worker threads pull whole lanes and
  // the merge runs in lane order, so the result does not depend on the
  // thread count.
  constexpr int kLanes = 16;
  std::vector<LaneTally> lanes;
  lanes.reserve(kLanes);
  for (int v = 0; v < kLanes; ++v) lanes.emplace_back(grid);

  std::atomic<int> next_lane{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    BinScratch scratch_f, scratch_d;
    try {
      for (;;) {
        const int v = next_lane.fetch_add(1);
        if (v >= kLanes) break;
        const std::int64_t lo = v * n / kLanes;
        const std::int64_t hi = (v + 1) * n / kLanes;
        for (std::int64_t i = lo; i < hi; ++i) {
          rng::Stream rs(config.seed, static_cast<std::uint64_t>(i));
          const PhaseState start = source.sample(problem.window, rs);
          const auto track = simulate_track(start, problem, config, rs);
          tally_history(lanes[v], start, track, problem.stack, scratch_f,
                        scratch_d);
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  int n_threads = config.threads;
  if (n_threads <= 0)
    n_threads = std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, kLanes);

  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  BatchResult result{FluenceMap(grid), DoseMap(grid), EnergyLedger{}, n};
  for (const LaneTally& lane : lanes) {
    result.fluence.merge(lane.fluence);
    result.dose.merge(lane.dose);
    result.ledger += lane.ledger;
  }
  return result;
}

}  // namespace protx
