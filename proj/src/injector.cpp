#include "rvfault/injector.hpp"

#include <algorithm>
#include <cmath>

namespace rvfault {

namespace {

std::uint32_t width_mask(unsigned width) { return width >= 32 ? ~0u : (1u << width) - 1u; }

std::uint32_t resolve_mask(const FaultConfig& cfg, unsigned width, Rng& rng) {
  if (cfg.mask != 0) return cfg.mask & width_mask(width);
  const unsigned bits =
      cfg.faulty_bits ? *cfg.faulty_bits : 1u + static_cast<unsigned>(rng.below(width));
  return random_mask(bits, width, rng);
}

bool in_window(const FaultConfig& cfg, std::uint64_t cycle) {
  return cfg.start <= cycle && cycle <= cfg.end;
}

// Registers a stuck-at entry when `type` calls for one. On a contradiction
// the record is marked skipped and the target must be left untouched.
bool register_permanent(PermanentFaultRegistry& registry, FaultRecord& rec) {
  if (rec.type == FaultType::BitFlip) return true;
  if (registry.add(rec.location, rec.mask, rec.type)) return true;
  rec.skipped = true;
  rec.skip_reason = "contradicts an existing stuck-at entry";
  rec.value_after = rec.value_before;
  return false;
}

}  // namespace

std::string_view to_string(EngineKind k) {
  switch (k) {
    case EngineKind::Reg: return "reg";
    case EngineKind::CacheL1I: return "l1i";
    case EngineKind::CacheL1D: return "l1d";
    case EngineKind::CacheL2: return "l2";
    case EngineKind::Mem: return "mem";
  }
  return "?";
}

std::optional<EngineKind> engine_from_string(std::string_view name) {
  for (auto k : kAllEngines)
    if (to_string(k) == name) return k;
  return std::nullopt;
}

Level cache_level(EngineKind k) {
  switch (k) {
    case EngineKind::CacheL1I: return Level::L1I;
    case EngineKind::CacheL1D: return Level::L1D;
    case EngineKind::CacheL2: return Level::L2;
    default: throw std::invalid_argument("not a cache engine");
  }
}

unsigned fault_width(EngineKind kind) { return kind == EngineKind::Reg ? 32 : 8; }

void FaultConfig::validate(EngineKind kind, const MemoryConfig& mem) const {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw ConfigError("probability", "must be in [0, 1]");
  if (start > end) throw ConfigError("start", "must not exceed end");
  const unsigned width = fault_width(kind);
  if (mask & ~width_mask(width))
    throw ConfigError("mask", "has bits beyond the " + std::to_string(width) + "-bit target");
  if (faulty_bits && (*faulty_bits < 1 || *faulty_bits > width))
    throw ConfigError("faulty_bits", "must be in [1, " + std::to_string(width) + "] or \"random\"");
  if (kind == EngineKind::Reg && target_register) {
    const unsigned lo = target_class == TargetClass::Integer ? 1 : 0;
    if (target_class == TargetClass::Random)
      throw ConfigError("target_register", "requires a concrete target_class");
    if (*target_register < lo || *target_register > 31)
      throw ConfigError("target_register", "must be in [" + std::to_string(lo) + ", 31]");
  }
  if (corruption_size < 1) throw ConfigError("corruption_size", "must be at least 1");
  if (kind == EngineKind::Mem) {
    if (target_start > target_end) throw ConfigError("target_start", "must not exceed target_end");
    const std::uint64_t ram_end = std::uint64_t{kRamBase} + mem.ram_size;
    if (target_start < kRamBase || target_start >= ram_end)
      throw ConfigError("target_start", "outside RAM");
    if (target_end < kRamBase || target_end >= ram_end)
      throw ConfigError("target_end", "outside RAM");
  }
}

std::optional<FaultRecord> reg_inject_event(const FaultConfig& cfg, std::uint64_t event_cycle,
                                            MachineState& state, PermanentFaultRegistry& registry,
                                            Rng& rng) {
  const bool window_gate = cfg.pc_target == 0 && in_window(cfg, event_cycle);
  const bool pc_gate = cfg.pc_target != 0 && state.pc == cfg.pc_target;
  if (!window_gate && !pc_gate) return std::nullopt;

  RegClass cls = cfg.target_class == TargetClass::Float ? RegClass::Float : RegClass::Integer;
  if (cfg.target_class == TargetClass::Random)
    cls = rng.below(2) == 0 ? RegClass::Integer : RegClass::Float;

  unsigned index;
  if (cfg.target_register)
    index = *cfg.target_register;
  else if (cls == RegClass::Integer)
    index = 1 + static_cast<unsigned>(rng.below(31));  // x0 is hardwired
  else
    index = static_cast<unsigned>(rng.below(32));

  FaultRecord rec;
  rec.cycle = event_cycle;
  rec.engine = EngineKind::Reg;
  rec.location = RegLocation{cls, static_cast<std::uint8_t>(index)};
  rec.mask = resolve_mask(cfg, 32, rng);
  rec.type = resolve_fault_type(cfg.fault_type, rng);

  const PermanentFaultRegistry* f = &registry;
  rec.value_before = cls == RegClass::Integer ? read_xreg(state, index, f)
                                              : registry.enforce_reg(cls, index, state.fregs[index]);
  rec.value_after = apply_fault(rec.value_before, rec.mask, rec.type);
  if (!register_permanent(registry, rec)) return rec;

  if (cls == RegClass::Integer)
    write_xreg(state, index, rec.value_after, f);
  else
    state.fregs[index] = registry.enforce_reg(cls, index, rec.value_after);
  return rec;
}

std::optional<std::vector<FaultRecord>> cache_inject_event(const FaultConfig& cfg, Level cache,
                                                           std::uint64_t event_cycle,
                                                           MemorySystem& mem,
                                                           PermanentFaultRegistry& registry,
                                                           Rng& rng) {
  if (!in_window(cfg, event_cycle)) return std::nullopt;
  const EngineKind kind = cache == Level::L1I   ? EngineKind::CacheL1I
                          : cache == Level::L1D ? EngineKind::CacheL1D
                                                : EngineKind::CacheL2;
  std::vector<FaultRecord> out;
  const auto block = mem.sample_valid_block(cache, rng);
  if (!block) {
    FaultRecord rec;
    rec.cycle = event_cycle;
    rec.engine = kind;
    rec.location = CacheLocation{cache, 0, 0, 0};
    rec.skipped = true;
    rec.skip_reason = "no valid block";
    out.push_back(std::move(rec));
    return out;
  }

  const auto block_bytes = mem.cache(cache).geometry().block_bytes;
  const auto base = mem.block_address(*block);
  for (unsigned i = 0; i < cfg.corruption_size; ++i) {
    const auto offset = static_cast<std::uint32_t>(rng.below(block_bytes));
    FaultRecord rec;
    rec.cycle = event_cycle;
    rec.engine = kind;
    rec.location = CacheLocation{cache, block->set, block->way, offset};
    rec.address = base + offset;
    rec.mask = resolve_mask(cfg, 8, rng);
    rec.type = resolve_fault_type(cfg.fault_type, rng);
    rec.value_before = mem.peek_cache(*block, offset);
    rec.value_after = apply_fault(rec.value_before, rec.mask, rec.type) & 0xFFu;
    if (register_permanent(registry, rec))
      mem.poke_cache(*block, offset, static_cast<std::uint8_t>(rec.value_after));
    out.push_back(std::move(rec));
  }
  return out;
}

std::optional<FaultRecord> mem_inject_event(const FaultConfig& cfg, std::uint64_t event_cycle,
                                            MemorySystem& mem, PermanentFaultRegistry& registry,
                                            Rng& rng) {
  if (!in_window(cfg, event_cycle)) return std::nullopt;
  const auto addr = static_cast<std::uint32_t>(rng.between(cfg.target_start, cfg.target_end));
  FaultRecord rec;
  rec.cycle = event_cycle;
  rec.engine = EngineKind::Mem;
  rec.location = RamLocation{addr};
  rec.address = addr;
  rec.value_before = mem.peek_ram(addr);
  rec.mask = resolve_mask(cfg, 8, rng);
  rec.type = resolve_fault_type(cfg.fault_type, rng);
  rec.value_after = apply_fault(rec.value_before, rec.mask, rec.type) & 0xFFu;
  if (register_permanent(registry, rec)) mem.poke_ram(addr, static_cast<std::uint8_t>(rec.value_after));
  return rec;
}

InjectionEngine::InjectionEngine(EngineKind kind, FaultConfig cfg, std::uint64_t stream_seed)
    : kind_(kind), cfg_(std::move(cfg)), rng_(stream_seed) {
  schedule_after(0);
}

void InjectionEngine::schedule_after(std::uint64_t cycle) {
  const auto d = next_delay(cfg_.probability, rng_);
  next_ = d == kNever || cycle > kNever - d ? kNever : cycle + d;
  // Past the window nothing can trigger any more, unless a PC gate is armed.
  if (kind_ != EngineKind::Reg || cfg_.pc_target == 0) {
    if (next_ != kNever && next_ > cfg_.end) next_ = kNever;
  }
}

void InjectionEngine::deliver(std::uint64_t now, MachineState& state, MemorySystem& mem,
                              PermanentFaultRegistry& registry, std::vector<FaultRecord>& out) {
  while (next_ <= now) {
    const auto cycle = next_;
    ++delivered_;
    switch (kind_) {
      case EngineKind::Reg:
        if (auto r = reg_inject_event(cfg_, cycle, state, registry, rng_)) out.push_back(std::move(*r));
        break;
      case EngineKind::Mem:
        if (auto r = mem_inject_event(cfg_, cycle, mem, registry, rng_)) out.push_back(std::move(*r));
        break;
      default:
        if (auto rs = cache_inject_event(cfg_, cache_level(kind_), cycle, mem, registry, rng_))
          for (auto& r : *rs) out.push_back(std::move(r));
        break;
    }
    schedule_after(cycle);
  }
}

void InjectorSet::add(EngineKind kind, const FaultConfig& cfg, std::uint64_t stream_seed) {
  engines_.emplace_back(kind, cfg, stream_seed);
}

std::uint64_t InjectorSet::next_event() const {
  std::uint64_t n = kNever;
  for (const auto& e : engines_) n = std::min(n, e.next_event());
  return n;
}

void InjectorSet::deliver(std::uint64_t now, MachineState& state, MemorySystem& mem) {
  for (auto& e : engines_) {
    if (e.next_event() > now) continue;
    const auto first = records_.size();
    e.deliver(now, state, mem, registry_, records_);
    if (observer_)
      for (auto i = first; i < records_.size(); ++i) observer_(records_[i]);
  }
}

void InjectorSet::maybe_sweep(std::uint64_t now, MachineState& state, MemorySystem& mem) {
  if (sweep_period_ == 0 || now < next_sweep_) return;
  sweep(state, mem);
  next_sweep_ = now + sweep_period_;
}

void InjectorSet::sweep(MachineState& state, MemorySystem& mem) const {
  for (const auto& e : registry_.entries()) {
    if (const auto* r = std::get_if<RegLocation>(&e.location)) {
      auto& slot = r->cls == RegClass::Integer ? state.xregs[r->index] : state.fregs[r->index];
      slot = apply_fault(slot, e.mask, e.type);
    } else if (const auto* c = std::get_if<CacheLocation>(&e.location)) {
      const BlockRef b{c->level, c->set, c->way};
      mem.poke_cache(b, c->offset, mem.peek_cache(b, c->offset));
    } else {
      const auto addr = std::get<RamLocation>(e.location).addr;
      mem.poke_ram(addr, mem.peek_ram(addr));
    }
  }
}

}  // namespace rvfault
