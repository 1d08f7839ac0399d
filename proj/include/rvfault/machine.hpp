#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <variant>

#include "rvfault/isa.hpp"
#include "rvfault/memsys.hpp"

namespace rvfault {

/// The twenty monitored counters, in reporting order.
class HpcVector {
 public:
  enum Index : std::uint8_t {
    mcycle, mtime, minstret,
    hpm4_int_load, hpm5_int_store, hpm7_system, hpm8_int_arith, hpm9_cond_branch,
    hpm10_jal, hpm11_jalr, hpm12_mul, hpm13_div, hpm14_fp_load_store, hpm15_fp_other,
    hpm22_mispredict, hpm27_icache_miss, hpm28_dcache_miss, hpm29_dcache_writeback,
    hpm30_itlb_miss, hpm31_dtlb_miss,
  };
  static constexpr std::size_t kSize = 20;

  /// Architectural CSR names ("mcycle", "mhpmcounter4", ...).
  static std::string_view name(std::size_t i);

  std::uint64_t& operator[](std::size_t i) { return v_[i]; }
  std::uint64_t operator[](std::size_t i) const { return v_[i]; }
  const std::array<std::uint64_t, kSize>& values() const { return v_; }

  friend bool operator==(const HpcVector&, const HpcVector&) = default;

 private:
  std::array<std::uint64_t, kSize> v_{};
};

/// Counter index an instruction class retires into.
HpcVector::Index counter_for(InstrClass cls);

enum class TrapKind : std::uint8_t {
  IllegalInstruction, MisalignedAccess, AccessOutOfBounds, MisalignedFetch, EcallUnknown,
};

std::string_view to_string(TrapKind k);

struct TrapCause {
  TrapKind kind = TrapKind::IllegalInstruction;
  std::uint32_t pc_at_trap = 0;
  std::uint32_t detail = 0;  // faulting word or address
  friend bool operator==(const TrapCause&, const TrapCause&) = default;
};

struct Running {
  friend bool operator==(const Running&, const Running&) = default;
};
struct Exited {
  int code = 0;
  friend bool operator==(const Exited&, const Exited&) = default;
};

using MachineStatus = std::variant<Running, Exited, TrapCause>;

/// Captured output stops growing past this many bytes.
inline constexpr std::size_t kMaxOutputBytes = 1u << 20;

struct MachineState {
  std::uint32_t pc = 0;
  std::array<std::uint32_t, 32> xregs{};
  std::array<std::uint32_t, 32> fregs{};
  std::uint64_t cycle = 0;
  HpcVector hpc;
  MachineStatus status = Running{};
  std::string output;  // bytes written to fd 1

  bool running() const { return std::holds_alternative<Running>(status); }
  friend bool operator==(const MachineState&, const MachineState&) = default;
};

struct Continue {};
using StepOutcome = std::variant<Continue, Exited, TrapCause>;

/// What one step retired; handed to an optional observer.
struct Retired {
  std::uint32_t pc = 0;
  std::uint32_t word = 0;
  bool has_data_access = false;
  AccessKind data_kind = AccessKind::Load;
  std::uint32_t data_addr = 0;
};

using RetireObserver = std::function<void(const Retired&)>;

/// Executes one instruction. `faults` (may be null) supplies stuck-at
/// entries enforced on every register read and after every write.
StepOutcome step(MachineState& state, MemorySystem& mem,
                 const PermanentFaultRegistry* faults = nullptr,
                 const RetireObserver* observer = nullptr);

/// The ecall handler: a7=93 exits with a0 & 0xFF; a7=64 writes
/// [a1, a1+a2) to the output when a0 == 1 (returns a2 in a0) and returns
/// -9 (EBADF) for any other descriptor; anything else traps.
StepOutcome syscall(MachineState& state, MemorySystem& mem,
                    const PermanentFaultRegistry* faults = nullptr);

/// Reads and writes of architectural registers with stuck-at enforcement.
std::uint32_t read_xreg(const MachineState& s, unsigned index, const PermanentFaultRegistry* f);
void write_xreg(MachineState& s, unsigned index, std::uint32_t value,
                const PermanentFaultRegistry* f);

}  // namespace rvfault
