#pragma once

// Probability-driven register, cache and memory fault injection.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rvfault/fault_model.hpp"
#include "rvfault/machine.hpp"
#include "rvfault/memsys.hpp"
#include "rvfault/rng.hpp"

namespace rvfault {

enum class EngineKind : std::uint8_t { Reg, CacheL1I, CacheL1D, CacheL2, Mem };

inline constexpr std::array<EngineKind, 5> kAllEngines{
    EngineKind::Reg, EngineKind::CacheL1I, EngineKind::CacheL1D, EngineKind::CacheL2,
    EngineKind::Mem};

/// Config/report name: "reg", "l1i", "l1d", "l2", "mem".
std::string_view to_string(EngineKind k);
std::optional<EngineKind> engine_from_string(std::string_view name);
/// Cache targeted by a cache engine.
Level cache_level(EngineKind k);

enum class TargetClass : std::uint8_t { Integer, Float, Random };

/// A configuration value out of range. `key` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Parameters of one injector. Engine-specific fields are ignored by the
/// other engines.
struct FaultConfig {
  double probability = 0.0;  // per-cycle activation likelihood
  std::uint64_t start = 0;
  std::uint64_t end = kNever;
  FaultType fault_type = FaultType::BitFlip;
  std::uint32_t mask = 0;                  // 0: generate per injection
  std::optional<unsigned> faulty_bits = 1;  // nullopt: uniform in [1, width]

  // register engine
  TargetClass target_class = TargetClass::Integer;
  std::uint32_t pc_target = 0;
  std::optional<unsigned> target_register;  // pins the register index

  // cache engines
  unsigned corruption_size = 1;

  // memory engine (inclusive bounds)
  std::uint32_t target_start = kRamBase;
  std::uint32_t target_end = kRamBase + (8u << 20) - 1;

  /// Throws ConfigError naming the first field that violates its bounds.
  void validate(EngineKind kind, const MemoryConfig& mem) const;

  friend bool operator==(const FaultConfig&, const FaultConfig&) = default;
};

/// Bit width a mask applies to for this engine: 32 for registers, 8 otherwise.
unsigned fault_width(EngineKind kind);

struct FaultRecord {
  std::uint64_t cycle = 0;
  EngineKind engine = EngineKind::Reg;
  Location location;
  std::optional<std::uint32_t> address;  // memory address of the cell, when known
  std::uint32_t mask = 0;
  FaultType type = FaultType::BitFlip;  // always concrete
  std::uint32_t value_before = 0;
  std::uint32_t value_after = 0;
  bool skipped = false;
  std::string skip_reason;

  friend bool operator==(const FaultRecord&, const FaultRecord&) = default;
};

/// One register-engine event at `event_cycle`. nullopt when the
/// cycle-window/PC gate rejects the event.
std::optional<FaultRecord> reg_inject_event(const FaultConfig& cfg, std::uint64_t event_cycle,
                                            MachineState& state, PermanentFaultRegistry& registry,
                                            Rng& rng);

/// One cache-engine event: corrupts `corruption_size` bytes of one valid
/// block. An all-invalid cache yields a single skipped record.
std::optional<std::vector<FaultRecord>> cache_inject_event(const FaultConfig& cfg, Level cache,
                                                           std::uint64_t event_cycle,
                                                           MemorySystem& mem,
                                                           PermanentFaultRegistry& registry,
                                                           Rng& rng);

/// One memory-engine event: corrupts one RAM byte in [target_start, target_end].
std::optional<FaultRecord> mem_inject_event(const FaultConfig& cfg, std::uint64_t event_cycle,
                                            MemorySystem& mem, PermanentFaultRegistry& registry,
                                            Rng& rng);

/// An engine with its own RNG stream and event schedule.
class InjectionEngine {
 public:
  InjectionEngine(EngineKind kind, FaultConfig cfg, std::uint64_t stream_seed);

  EngineKind kind() const { return kind_; }
  const FaultConfig& config() const { return cfg_; }
  std::uint64_t next_event() const { return next_; }
  std::uint64_t events_delivered() const { return delivered_; }

  /// Fires every event scheduled at or before `now`, appending records.
  void deliver(std::uint64_t now, MachineState& state, MemorySystem& mem,
               PermanentFaultRegistry& registry, std::vector<FaultRecord>& out);

 private:
  void schedule_after(std::uint64_t cycle);

  EngineKind kind_;
  FaultConfig cfg_;
  Rng rng_;
  std::uint64_t next_ = kNever;
  std::uint64_t delivered_ = 0;
};

using FaultObserver = std::function<void(const FaultRecord&)>;

/// The engines bound to one run, plus that run's permanent-fault registry.
class InjectorSet {
 public:
  void add(EngineKind kind, const FaultConfig& cfg, std::uint64_t stream_seed);
  /// Re-applies every stuck-at entry to stored state each `period` cycles
  /// (0 disables). Enforcement on access is always on.
  void set_sweep_period(std::uint64_t period) { sweep_period_ = period; }
  /// Called once per injected (or skipped) fault, as it happens.
  void set_observer(FaultObserver obs) { observer_ = std::move(obs); }

  bool empty() const { return engines_.empty(); }
  const std::vector<InjectionEngine>& engines() const { return engines_; }
  std::uint64_t next_event() const;

  void deliver(std::uint64_t now, MachineState& state, MemorySystem& mem);
  void maybe_sweep(std::uint64_t now, MachineState& state, MemorySystem& mem);
  void sweep(MachineState& state, MemorySystem& mem) const;

  PermanentFaultRegistry& registry() { return registry_; }
  const PermanentFaultRegistry& registry() const { return registry_; }
  const std::vector<FaultRecord>& records() const { return records_; }
  std::vector<FaultRecord> take_records() { return std::move(records_); }

 private:
  std::vector<InjectionEngine> engines_;
  PermanentFaultRegistry registry_;
  std::vector<FaultRecord> records_;
  std::uint64_t sweep_period_ = 0;
  std::uint64_t next_sweep_ = 0;
  FaultObserver observer_;
};

}  // namespace rvfault
