#pragma once

#include <cstdint>
#include <vector>

#include "rvfault/injector.hpp"
#include "rvfault/machine.hpp"
#include "rvfault/memsys.hpp"

namespace rvfault {

enum class Termination : std::uint8_t { Exited, Trapped, TimedOut };

struct RunTrace {
  Termination termination = Termination::Exited;
  MachineState state;
  std::vector<FaultRecord> faults;
};

/// Steps the machine until it exits, traps, or its cycle count exceeds
/// `cycle_budget`. Before every step, injector events scheduled at or
/// before the current cycle are delivered. The injector set's registry is
/// attached to `mem` for the duration of the run.
RunTrace run(MachineState& state, MemorySystem& mem, InjectorSet& injectors,
             std::uint64_t cycle_budget, const RetireObserver* observer = nullptr);

}  // namespace rvfault
