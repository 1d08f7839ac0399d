#include "rvfault/run.hpp"

#include <stdexcept>

namespace rvfault {

RunTrace run(MachineState& state, MemorySystem& mem, InjectorSet& injectors,
             std::uint64_t cycle_budget, const RetireObserver* observer) {
  if (cycle_budget == 0) throw std::invalid_argument("cycle budget must be positive");
  const PermanentFaultRegistry* registry = &injectors.registry();
  mem.attach_registry(registry);

  while (state.running() && state.cycle <= cycle_budget) {
    if (injectors.next_event() <= state.cycle) injectors.deliver(state.cycle, state, mem);
    injectors.maybe_sweep(state.cycle, state, mem);
    step(state, mem, registry, observer);
  }
  mem.attach_registry(nullptr);

  RunTrace trace;
  if (std::holds_alternative<Exited>(state.status))
    trace.termination = Termination::Exited;
  else if (std::holds_alternative<TrapCause>(state.status))
    trace.termination = Termination::Trapped;
  else
    trace.termination = Termination::TimedOut;
  trace.state = state;
  trace.faults = injectors.take_records();
  return trace;
}

}  // namespace rvfault
