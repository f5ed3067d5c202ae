#pragma once
#include "protx/phase_space.hpp"

namespace protx {

enum class TerminalCause { None, RangeOut, SpatialExit, MaxLength };

const char* to_string(TerminalCause c);

// One integrator segment of a track. deposited_energy is the continuous
// (stopping-power) loss along the segment; jump_loss is the discrete
// energy drop of a non-elastic event fired at the segment end, which is
// booked locally but not as CSDA dose (secondaries are out of scope).
struct TrackEvent {
  PhaseState start;
  PhaseState end;
  double seg_len = 0.0;          // cm, in (0, step_len]
  double deposited_energy = 0.0; // MeV
  double jump_loss = 0.0;        // MeV
  TerminalCause terminal = TerminalCause::None;
};

}  // namespace protx
