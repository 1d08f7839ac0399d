#pragma once

// Fault mask algebra, event scheduling, and the permanent-fault registry.

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "rvfault/rng.hpp"

namespace rvfault {

enum class FaultType : std::uint8_t { BitFlip, StuckAt0, StuckAt1, Random };

std::string_view to_string(FaultType t);

/// Storage structure a fault can live in.
enum class Level : std::uint8_t { L1I, L1D, L2, RAM };

std::string_view to_string(Level l);

enum class RegClass : std::uint8_t { Integer, Float };

std::string_view to_string(RegClass c);

struct RegLocation {
  RegClass cls = RegClass::Integer;
  std::uint8_t index = 0;
  friend bool operator==(const RegLocation&, const RegLocation&) = default;
};

/// One byte cell of a cache data array.
struct CacheLocation {
  Level level = Level::L1D;
  std::uint32_t set = 0;
  std::uint32_t way = 0;
  std::uint32_t offset = 0;
  friend bool operator==(const CacheLocation&, const CacheLocation&) = default;
};

struct RamLocation {
  std::uint32_t addr = 0;
  friend bool operator==(const RamLocation&, const RamLocation&) = default;
};

using Location = std::variant<RegLocation, CacheLocation, RamLocation>;

/// Applies one concrete fault to `value`. `type` must not be Random.
constexpr std::uint32_t apply_fault(std::uint32_t value, std::uint32_t mask, FaultType type) {
  switch (type) {
    case FaultType::BitFlip: return value ^ mask;
    case FaultType::StuckAt0: return value & ~mask;
    case FaultType::StuckAt1: return value | mask;
    case FaultType::Random: break;
  }
  return value;
}

/// Mask of `width` bits with exactly `faulty_bits` set, uniform over the
/// k-subsets. Requires 1 <= faulty_bits <= width <= 32.
std::uint32_t random_mask(unsigned faulty_bits, unsigned width, Rng& rng);

inline constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

/// Cycles until the next event when each cycle fires independently with
/// probability p: Geometric(p) on {1, 2, ...}. Returns kNever for p == 0.
std::uint64_t next_delay(double probability, Rng& rng);

/// Resolves FaultType::Random uniformly over the three concrete types.
FaultType resolve_fault_type(FaultType configured, Rng& rng);

struct StuckMasks {
  std::uint32_t zeros = 0;
  std::uint32_t ones = 0;

  constexpr std::uint32_t apply(std::uint32_t v) const { return (v & ~zeros) | ones; }
};

struct PermanentFault {
  Location location;
  std::uint32_t mask = 0;
  FaultType type = FaultType::StuckAt0;
};

/// Stuck-at faults that persist until the end of a run.
///
/// Enforcement happens on access: the machine applies register entries on
/// every read and after every write, the memory system does the same for
/// byte cells. Entries are keyed by physical cell, so a stuck cache byte
/// stays stuck when a different block is filled into that way.
class PermanentFaultRegistry {
 public:
  /// Adds an entry. Returns false, leaving the registry untouched, when
  /// the mask is empty, the type is not a stuck-at, or a bit would be
  /// stuck at both 0 and 1.
  bool add(const Location& loc, std::uint32_t mask, FaultType type);

  std::uint32_t enforce(const Location& loc, std::uint32_t value) const;

  std::uint32_t enforce_reg(RegClass cls, unsigned index, std::uint32_t value) const {
    return regs_[reg_slot(cls, index)].apply(value);
  }

  std::uint8_t enforce_cache(Level level, std::uint32_t set, std::uint32_t way,
                             std::uint32_t offset, std::uint8_t value) const {
    if (level_counts_[static_cast<int>(level)] == 0) return value;
    return static_cast<std::uint8_t>(lookup(cache_key(level, set, way, offset)).apply(value));
  }

  std::uint8_t enforce_ram(std::uint32_t addr, std::uint8_t value) const {
    if (level_counts_[static_cast<int>(Level::RAM)] == 0) return value;
    return static_cast<std::uint8_t>(lookup(ram_key(addr)).apply(value));
  }

  bool has_entries(Level level) const { return level_counts_[static_cast<int>(level)] != 0; }
  bool has_register_entries() const { return reg_count_ != 0; }
  bool empty() const { return entries_.empty(); }
  const std::vector<PermanentFault>& entries() const { return entries_; }

 private:
  static std::size_t reg_slot(RegClass cls, unsigned index) {
    return (cls == RegClass::Float ? 32u : 0u) + (index & 31u);
  }
  static std::uint64_t cache_key(Level level, std::uint32_t set, std::uint32_t way,
                                 std::uint32_t offset) {
    return (std::uint64_t{static_cast<std::uint8_t>(level)} << 60) |
           (std::uint64_t{set} << 28) | (std::uint64_t{way & 0xFFFu} << 16) | (offset & 0xFFFFu);
  }
  static std::uint64_t ram_key(std::uint32_t addr) {
    return (std::uint64_t{static_cast<std::uint8_t>(Level::RAM)} << 60) | addr;
  }
  StuckMasks lookup(std::uint64_t key) const {
    auto it = cells_.find(key);
    return it == cells_.end() ? StuckMasks{} : it->second;
  }
  StuckMasks* slot_for(const Location& loc);

  std::array<StuckMasks, 64> regs_{};
  std::unordered_map<std::uint64_t, StuckMasks> cells_;
  std::array<std::size_t, 4> level_counts_{};
  std::size_t reg_count_ = 0;
  std::vector<PermanentFault> entries_;
};

}  // namespace rvfault
