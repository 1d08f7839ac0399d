#pragma once

#include <cstdint>
#include <cstdlib>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "rvfault/fault_model.hpp"
#include "rvfault/rng.hpp"

namespace rvfault {

inline constexpr std::uint32_t kRamBase = 0x80000000u;

struct CacheGeometry {
  std::uint32_t size_bytes = 0;
  std::uint32_t block_bytes = 64;
  std::uint32_t associativity = 4;

  std::uint32_t sets() const { return size_bytes / (block_bytes * associativity); }
  /// Throws std::invalid_argument unless every field is a power of two,
  /// block_bytes >= 4, and the cache holds at least one set.
  void validate() const;

  friend bool operator==(const CacheGeometry&, const CacheGeometry&) = default;
};

/// Extra cycles charged per access on top of the single issue cycle.
struct StallLatencies {
  std::uint32_t l1_hit = 0;
  std::uint32_t l2_hit = 10;
  std::uint32_t memory = 80;

  friend bool operator==(const StallLatencies&, const StallLatencies&) = default;
};

struct MemoryConfig {
  std::uint32_t ram_size = 8u << 20;
  CacheGeometry l1i{16u << 10, 64, 4};
  CacheGeometry l1d{64u << 10, 64, 4};
  CacheGeometry l2{256u << 10, 64, 4};
  StallLatencies latencies{};

  friend bool operator==(const MemoryConfig&, const MemoryConfig&) = default;
};

struct BlockRef {
  Level level = Level::L1D;
  std::uint32_t set = 0;
  std::uint32_t way = 0;
  friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

/// Set-associative write-back, write-allocate cache with LRU replacement
/// and a real data array.
class Cache {
 public:
  struct Line {
    std::uint32_t tag = 0;
    bool valid = false;
    bool dirty = false;
    std::uint64_t lru_stamp = 0;  // larger is more recent
    friend bool operator==(const Line&, const Line&) = default;
  };

  Cache(Level level, CacheGeometry geometry);

  Level level() const { return level_; }
  const CacheGeometry& geometry() const { return geom_; }
  std::uint32_t sets() const { return sets_; }
  std::uint32_t ways() const { return geom_.associativity; }

  std::uint32_t set_of(std::uint32_t addr) const { return (addr >> block_shift_) & (sets_ - 1); }
  std::uint32_t tag_of(std::uint32_t addr) const { return addr >> (block_shift_ + set_shift_); }
  std::uint32_t block_addr(std::uint32_t set, std::uint32_t tag) const {
    return ((tag << set_shift_) | set) << block_shift_;
  }
  std::uint32_t offset_of(std::uint32_t addr) const { return addr & (geom_.block_bytes - 1); }

  /// Way holding `addr`, if valid. Does not touch LRU state.
  std::optional<std::uint32_t> find(std::uint32_t addr) const;
  /// Invalid way if any, else the least recently used way.
  std::uint32_t victim(std::uint32_t set) const;
  void touch(std::uint32_t set, std::uint32_t way) { line(set, way).lru_stamp = ++clock_; }

  Line& line(std::uint32_t set, std::uint32_t way) { return lines_[set * ways() + way]; }
  const Line& line(std::uint32_t set, std::uint32_t way) const {
    return lines_[set * ways() + way];
  }
  std::span<std::uint8_t> data(std::uint32_t set, std::uint32_t way) {
    return {data_.data() + std::size_t{set * ways() + way} * geom_.block_bytes, geom_.block_bytes};
  }
  std::span<const std::uint8_t> data(std::uint32_t set, std::uint32_t way) const {
    return {data_.data() + std::size_t{set * ways() + way} * geom_.block_bytes, geom_.block_bytes};
  }

  std::size_t valid_count() const;
  void invalidate_all();

  const std::vector<Line>& lines() const { return lines_; }

 private:
  Level level_;
  CacheGeometry geom_;
  std::uint32_t sets_;
  unsigned block_shift_;
  unsigned set_shift_;
  std::uint64_t clock_ = 0;
  std::vector<Line> lines_;
  std::vector<std::uint8_t> data_;
};

/// Events feeding mhpmcounter27/28/29, plus L2 activity for diagnostics.
struct MemEvents {
  std::uint64_t l1i_misses = 0;
  std::uint64_t l1d_misses = 0;
  std::uint64_t l1d_writebacks = 0;
  std::uint64_t l2_misses = 0;
  std::uint64_t l2_writebacks = 0;
  friend bool operator==(const MemEvents&, const MemEvents&) = default;
};

enum class AccessKind : std::uint8_t { Fetch, Load, Store };

struct AccessResult {
  bool ok = false;  // false: outside RAM
  std::uint32_t value = 0;
  std::uint32_t stall = 0;
};

/// Flat RAM behind L1I, L1D and a unified L2.
///
/// Coherence holds for data accesses: a load returns the value of the
/// nearest level holding the address (L1D, else L2, else RAM). L1I is not
/// kept coherent with stores (no self-modifying code).
class MemorySystem {
 public:
  explicit MemorySystem(const MemoryConfig& cfg = {});

  const MemoryConfig& config() const { return cfg_; }
  std::uint32_t ram_base() const { return kRamBase; }
  std::uint32_t ram_size() const { return cfg_.ram_size; }
  bool in_ram(std::uint32_t addr, std::uint32_t width) const {
    return addr >= kRamBase && std::uint64_t{addr - kRamBase} + width <= cfg_.ram_size;
  }

  /// Architectural access through the hierarchy. `addr` must be aligned
  /// to `width` (1, 2 or 4); unaligned requests are the caller's bug.
  AccessResult access(AccessKind kind, std::uint32_t addr, std::uint32_t width,
                      std::uint32_t data = 0);

  /// Coherent read with no side effects on caches or counters.
  std::optional<std::uint8_t> read_coherent(std::uint32_t addr) const;

  // Direct cell access for injectors and the loader: no miss handling, no
  // LRU/dirty/valid change, no counters. Stuck-at entries are enforced.
  std::uint8_t peek_ram(std::uint32_t addr) const;
  void poke_ram(std::uint32_t addr, std::uint8_t value);
  std::uint8_t peek_cache(const BlockRef& block, std::uint32_t offset) const;
  void poke_cache(const BlockRef& block, std::uint32_t offset, std::uint8_t value);

  /// Uniform choice among valid blocks; nullopt if the cache is all-invalid.
  std::optional<BlockRef> sample_valid_block(Level level, Rng& rng) const;
  /// Address of the block's data, from its tag.
  std::uint32_t block_address(const BlockRef& block) const;

  /// Writes every dirty block back (L1D to L2, then L2 to RAM) and
  /// invalidates everything. Counts no events.
  void flush_all();
  /// Invalidates every cache without writeback and zeroes the counters.
  void reset_caches();
  void write_ram_bytes(std::uint32_t addr, std::span<const std::uint8_t> bytes);

  Cache& cache(Level level);
  const Cache& cache(Level level) const;
  const MemEvents& events() const { return events_; }

  void attach_registry(const PermanentFaultRegistry* registry) { registry_ = registry; }
  const PermanentFaultRegistry* registry() const { return registry_; }

 private:
  // Returns the way holding the block of `addr` in `l1`, filling it on a miss.
  std::uint32_t ensure_l1(Cache& l1, std::uint32_t addr, std::uint32_t& stall);
  // Way in L2 holding the block of `addr`, filled from RAM on a miss.
  std::uint32_t ensure_l2(std::uint32_t addr, std::uint32_t& stall);
  void write_back_l1d(std::uint32_t set, std::uint32_t way);
  void write_back_l2(std::uint32_t set, std::uint32_t way);
  void copy_block(std::span<const std::uint8_t> src, Cache& dst, std::uint32_t set,
                  std::uint32_t way);
  void enforce_block(Cache& c, std::uint32_t set, std::uint32_t way);
  void enforce_ram_range(std::uint32_t addr, std::uint32_t len);
  std::uint8_t cell(const Cache& c, std::uint32_t set, std::uint32_t way,
                    std::uint32_t offset) const;

  MemoryConfig cfg_;
  struct FreeDeleter {
    void operator()(std::uint8_t* p) const { std::free(p); }
  };
  // calloc'd so that untouched RAM pages are never materialized.
  std::unique_ptr<std::uint8_t[], FreeDeleter> ram_;
  Cache l1i_;
  Cache l1d_;
  Cache l2_;
  MemEvents events_;
  const PermanentFaultRegistry* registry_ = nullptr;
};

}  // namespace rvfault
