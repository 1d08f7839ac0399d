#include "rvfault/fault_model.hpp"

#include <cmath>

namespace rvfault {

std::string_view to_string(FaultType t) {
  switch (t) {
    case FaultType::BitFlip: return "bitflip";
    case FaultType::StuckAt0: return "stuck_at_0";
    case FaultType::StuckAt1: return "stuck_at_1";
    case FaultType::Random: return "random";
  }
  return "?";
}

std::string_view to_string(Level l) {
  switch (l) {
    case Level::L1I: return "l1i";
    case Level::L1D: return "l1d";
    case Level::L2: return "l2";
    case Level::RAM: return "ram";
  }
  return "?";
}

std::string_view to_string(RegClass c) { return c == RegClass::Integer ? "integer" : "float"; }

std::uint32_t random_mask(unsigned faulty_bits, unsigned width, Rng& rng) {
  // partial Fisher-Yates over bit positions
  std::array<std::uint8_t, 32> pos{};
  for (unsigned i = 0; i < width; ++i) pos[i] = static_cast<std::uint8_t>(i);
  std::uint32_t mask = 0;
  for (unsigned i = 0; i < faulty_bits; ++i) {
    const auto j = i + static_cast<unsigned>(rng.below(width - i));
    std::swap(pos[i], pos[j]);
    mask |= 1u << pos[i];
  }
  return mask;
}

std::uint64_t next_delay(double probability, Rng& rng) {
  if (!(probability > 0.0)) return kNever;
  if (probability >= 1.0) return 1;
  // inverse transform: P(K > k) = (1 - p)^k
  const double u = 1.0 - rng.uniform01();  // (0, 1]
  const double k = std::floor(std::log(u) / std::log1p(-probability));
  if (!(k < 9.0e18)) return kNever;
  return static_cast<std::uint64_t>(k) + 1;
}

FaultType resolve_fault_type(FaultType configured, Rng& rng) {
  if (configured != FaultType::Random) return configured;
  static constexpr std::array<FaultType, 3> kTypes{FaultType::BitFlip, FaultType::StuckAt0,
                                                   FaultType::StuckAt1};
  return kTypes[rng.below(3)];
}

StuckMasks* PermanentFaultRegistry::slot_for(const Location& loc) {
  if (const auto* r = std::get_if<RegLocation>(&loc)) return &regs_[reg_slot(r->cls, r->index)];
  if (const auto* c = std::get_if<CacheLocation>(&loc))
    return &cells_[cache_key(c->level, c->set, c->way, c->offset)];
  return &cells_[ram_key(std::get<RamLocation>(loc).addr)];
}

bool PermanentFaultRegistry::add(const Location& loc, std::uint32_t mask, FaultType type) {
  if (mask == 0) return false;
  if (type != FaultType::StuckAt0 && type != FaultType::StuckAt1) return false;

  StuckMasks current{};
  if (const auto* r = std::get_if<RegLocation>(&loc)) {
    current = regs_[reg_slot(r->cls, r->index)];
  } else if (const auto* c = std::get_if<CacheLocation>(&loc)) {
    current = lookup(cache_key(c->level, c->set, c->way, c->offset));
  } else {
    current = lookup(ram_key(std::get<RamLocation>(loc).addr));
  }
  const std::uint32_t opposite = type == FaultType::StuckAt0 ? current.ones : current.zeros;
  if (opposite & mask) return false;

  StuckMasks* slot = slot_for(loc);
  (type == FaultType::StuckAt0 ? slot->zeros : slot->ones) |= mask;

  if (std::holds_alternative<RegLocation>(loc)) {
    ++reg_count_;
  } else if (const auto* c = std::get_if<CacheLocation>(&loc)) {
    ++level_counts_[static_cast<int>(c->level)];
  } else {
    ++level_counts_[static_cast<int>(Level::RAM)];
  }
  entries_.push_back({loc, mask, type});
  return true;
}

std::uint32_t PermanentFaultRegistry::enforce(const Location& loc, std::uint32_t value) const {
  if (const auto* r = std::get_if<RegLocation>(&loc)) return enforce_reg(r->cls, r->index, value);
  if (const auto* c = std::get_if<CacheLocation>(&loc))
    return lookup(cache_key(c->level, c->set, c->way, c->offset)).apply(value);
  return lookup(ram_key(std::get<RamLocation>(loc).addr)).apply(value);
}

}  // namespace rvfault
