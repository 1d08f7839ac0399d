#include "rvfault/memsys.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <string>

namespace rvfault {

void CacheGeometry::validate() const {
  auto pow2 = [](std::uint32_t v) { return v != 0 && std::has_single_bit(v); };
  if (!pow2(size_bytes) || !pow2(block_bytes) || !pow2(associativity))
    throw std::invalid_argument("cache geometry fields must be powers of two");
  if (block_bytes < 4) throw std::invalid_argument("cache block must be at least 4 bytes");
  if (std::uint64_t{block_bytes} * associativity > size_bytes)
    throw std::invalid_argument("cache smaller than one set");
}

Cache::Cache(Level level, CacheGeometry geometry)
    : level_(level), geom_(geometry), sets_(geometry.sets()) {
  geom_.validate();
  block_shift_ = static_cast<unsigned>(std::countr_zero(geom_.block_bytes));
  set_shift_ = static_cast<unsigned>(std::countr_zero(sets_));
  lines_.resize(std::size_t{sets_} * geom_.associativity);
  data_.resize(std::size_t{geom_.size_bytes});
}

std::optional<std::uint32_t> Cache::find(std::uint32_t addr) const {
  const auto set = set_of(addr);
  const auto tag = tag_of(addr);
  for (std::uint32_t w = 0; w < ways(); ++w) {
    const Line& l = line(set, w);
    if (l.valid && l.tag == tag) return w;
  }
  return std::nullopt;
}

std::uint32_t Cache::victim(std::uint32_t set) const {
  std::uint32_t best = 0;
  for (std::uint32_t w = 0; w < ways(); ++w) {
    const Line& l = line(set, w);
    if (!l.valid) return w;
    if (l.lru_stamp < line(set, best).lru_stamp) best = w;
  }
  return best;
}

std::size_t Cache::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(lines_.begin(), lines_.end(), [](const Line& l) { return l.valid; }));
}

void Cache::invalidate_all() {
  for (auto& l : lines_) l = Line{};
  clock_ = 0;
}

MemorySystem::MemorySystem(const MemoryConfig& cfg)
    : cfg_(cfg),
      ram_(static_cast<std::uint8_t*>(std::calloc(cfg.ram_size ? cfg.ram_size : 1, 1))),
      l1i_(Level::L1I, cfg.l1i),
      l1d_(Level::L1D, cfg.l1d),
      l2_(Level::L2, cfg.l2) {
  if (cfg.ram_size == 0 || std::uint64_t{kRamBase} + cfg.ram_size > 0x100000000ull)
    throw std::invalid_argument("ram_size must be in (0, 2 GiB]");
  if (!ram_) throw std::bad_alloc();
  if (cfg.l1i.block_bytes != cfg.l2.block_bytes || cfg.l1d.block_bytes != cfg.l2.block_bytes)
    throw std::invalid_argument("all caches must share one block size");
  if (cfg.ram_size % cfg.l2.block_bytes != 0)
    throw std::invalid_argument("ram_size must be a multiple of the block size");
}

Cache& MemorySystem::cache(Level level) {
  switch (level) {
    case Level::L1I: return l1i_;
    case Level::L1D: return l1d_;
    default: return l2_;
  }
}

const Cache& MemorySystem::cache(Level level) const {
  return const_cast<MemorySystem*>(this)->cache(level);
}

std::uint8_t MemorySystem::cell(const Cache& c, std::uint32_t set, std::uint32_t way,
                                std::uint32_t offset) const {
  const std::uint8_t raw = c.data(set, way)[offset];
  return registry_ ? registry_->enforce_cache(c.level(), set, way, offset, raw) : raw;
}

void MemorySystem::enforce_block(Cache& c, std::uint32_t set, std::uint32_t way) {
  if (!registry_ || !registry_->has_entries(c.level())) return;
  auto bytes = c.data(set, way);
  for (std::uint32_t i = 0; i < bytes.size(); ++i)
    bytes[i] = registry_->enforce_cache(c.level(), set, way, i, bytes[i]);
}

void MemorySystem::enforce_ram_range(std::uint32_t addr, std::uint32_t len) {
  if (!registry_ || !registry_->has_entries(Level::RAM)) return;
  for (std::uint32_t i = 0; i < len; ++i) {
    auto& b = ram_[addr - kRamBase + i];
    b = registry_->enforce_ram(addr + i, b);
  }
}

void MemorySystem::copy_block(std::span<const std::uint8_t> src, Cache& dst, std::uint32_t set,
                              std::uint32_t way) {
  std::memcpy(dst.data(set, way).data(), src.data(), src.size());
  enforce_block(dst, set, way);
}

void MemorySystem::write_back_l2(std::uint32_t set, std::uint32_t way) {
  const auto addr = l2_.block_addr(set, l2_.line(set, way).tag);
  const auto src = l2_.data(set, way);
  for (std::uint32_t i = 0; i < src.size(); ++i) ram_[addr - kRamBase + i] = cell(l2_, set, way, i);
  enforce_ram_range(addr, static_cast<std::uint32_t>(src.size()));
  ++events_.l2_writebacks;
}

void MemorySystem::write_back_l1d(std::uint32_t set, std::uint32_t way) {
  const auto addr = l1d_.block_addr(set, l1d_.line(set, way).tag);
  std::vector<std::uint8_t> bytes(l1d_.geometry().block_bytes);
  for (std::uint32_t i = 0; i < bytes.size(); ++i) bytes[i] = cell(l1d_, set, way, i);

  const auto l2set = l2_.set_of(addr);
  std::uint32_t l2way;
  if (auto hit = l2_.find(addr)) {
    l2way = *hit;
  } else {
    // non-inclusive: the whole block is overwritten, so no fetch from RAM
    l2way = l2_.victim(l2set);
    auto& v = l2_.line(l2set, l2way);
    if (v.valid && v.dirty) write_back_l2(l2set, l2way);
    v.valid = true;
    v.tag = l2_.tag_of(addr);
  }
  copy_block(bytes, l2_, l2set, l2way);
  l2_.line(l2set, l2way).dirty = true;
  l2_.touch(l2set, l2way);
}

std::uint32_t MemorySystem::ensure_l2(std::uint32_t addr, std::uint32_t& stall) {
  const auto set = l2_.set_of(addr);
  if (auto hit = l2_.find(addr)) {
    l2_.touch(set, *hit);
    stall = cfg_.latencies.l2_hit;
    return *hit;
  }
  ++events_.l2_misses;
  stall = cfg_.latencies.memory;
  const auto way = l2_.victim(set);
  auto& v = l2_.line(set, way);
  if (v.valid && v.dirty) write_back_l2(set, way);
  const auto base = addr & ~(l2_.geometry().block_bytes - 1);
  std::vector<std::uint8_t> bytes(l2_.geometry().block_bytes);
  for (std::uint32_t i = 0; i < bytes.size(); ++i) bytes[i] = peek_ram(base + i);
  copy_block(bytes, l2_, set, way);
  v.valid = true;
  v.dirty = false;
  v.tag = l2_.tag_of(addr);
  l2_.touch(set, way);
  return way;
}

std::uint32_t MemorySystem::ensure_l1(Cache& l1, std::uint32_t addr, std::uint32_t& stall) {
  const auto set = l1.set_of(addr);
  if (auto hit = l1.find(addr)) {
    l1.touch(set, *hit);
    stall = cfg_.latencies.l1_hit;
    return *hit;
  }
  if (&l1 == &l1i_)
    ++events_.l1i_misses;
  else
    ++events_.l1d_misses;

  const auto way = l1.victim(set);
  auto& v = l1.line(set, way);
  if (v.valid && v.dirty) {
    write_back_l1d(set, way);
    ++events_.l1d_writebacks;
  }
  const auto l2way = ensure_l2(addr, stall);
  const auto l2set = l2_.set_of(addr);
  std::vector<std::uint8_t> bytes(l2_.geometry().block_bytes);
  for (std::uint32_t i = 0; i < bytes.size(); ++i) bytes[i] = cell(l2_, l2set, l2way, i);
  copy_block(bytes, l1, set, way);
  v.valid = true;
  v.dirty = false;
  v.tag = l1.tag_of(addr);
  l1.touch(set, way);
  return way;
}

AccessResult MemorySystem::access(AccessKind kind, std::uint32_t addr, std::uint32_t width,
                                  std::uint32_t data) {
  AccessResult r;
  if (!in_ram(addr, width)) return r;
  r.ok = true;
  Cache& l1 = kind == AccessKind::Fetch ? l1i_ : l1d_;
  const auto way = ensure_l1(l1, addr, r.stall);
  const auto set = l1.set_of(addr);
  const auto off = l1.offset_of(addr);
  if (kind == AccessKind::Store) {
    auto bytes = l1.data(set, way);
    for (std::uint32_t i = 0; i < width; ++i) {
      const auto b = static_cast<std::uint8_t>(data >> (8 * i));
      bytes[off + i] = registry_ ? registry_->enforce_cache(l1.level(), set, way, off + i, b) : b;
    }
    l1.line(set, way).dirty = true;
    return r;
  }
  std::uint32_t v = 0;
  for (std::uint32_t i = 0; i < width; ++i) v |= std::uint32_t{cell(l1, set, way, off + i)} << (8 * i);
  r.value = v;
  return r;
}

std::optional<std::uint8_t> MemorySystem::read_coherent(std::uint32_t addr) const {
  if (!in_ram(addr, 1)) return std::nullopt;
  for (const Cache* c : {&l1d_, &l2_}) {
    if (auto way = c->find(addr)) return cell(*c, c->set_of(addr), *way, c->offset_of(addr));
  }
  return peek_ram(addr);
}

std::uint8_t MemorySystem::peek_ram(std::uint32_t addr) const {
  if (!in_ram(addr, 1)) throw std::out_of_range("peek outside RAM");
  const auto raw = ram_[addr - kRamBase];
  return registry_ ? registry_->enforce_ram(addr, raw) : raw;
}

void MemorySystem::poke_ram(std::uint32_t addr, std::uint8_t value) {
  if (!in_ram(addr, 1)) throw std::out_of_range("poke outside RAM");
  ram_[addr - kRamBase] = registry_ ? registry_->enforce_ram(addr, value) : value;
}

std::uint8_t MemorySystem::peek_cache(const BlockRef& b, std::uint32_t offset) const {
  const Cache& c = cache(b.level);
  if (b.level == Level::RAM || b.set >= c.sets() || b.way >= c.ways() ||
      offset >= c.geometry().block_bytes)
    throw std::out_of_range("invalid cache location");
  return cell(c, b.set, b.way, offset);
}

void MemorySystem::poke_cache(const BlockRef& b, std::uint32_t offset, std::uint8_t value) {
  Cache& c = cache(b.level);
  if (b.level == Level::RAM || b.set >= c.sets() || b.way >= c.ways() ||
      offset >= c.geometry().block_bytes)
    throw std::out_of_range("invalid cache location");
  c.data(b.set, b.way)[offset] =
      registry_ ? registry_->enforce_cache(b.level, b.set, b.way, offset, value) : value;
}

std::optional<BlockRef> MemorySystem::sample_valid_block(Level level, Rng& rng) const {
  const Cache& c = cache(level);
  const auto n = c.valid_count();
  if (n == 0) return std::nullopt;
  auto k = rng.below(n);
  for (std::uint32_t s = 0; s < c.sets(); ++s)
    for (std::uint32_t w = 0; w < c.ways(); ++w)
      if (c.line(s, w).valid && k-- == 0) return BlockRef{level, s, w};
  return std::nullopt;
}

std::uint32_t MemorySystem::block_address(const BlockRef& b) const {
  const Cache& c = cache(b.level);
  return c.block_addr(b.set, c.line(b.set, b.way).tag);
}

void MemorySystem::flush_all() {
  const MemEvents saved = events_;
  for (std::uint32_t s = 0; s < l1d_.sets(); ++s)
    for (std::uint32_t w = 0; w < l1d_.ways(); ++w) {
      const auto& l = l1d_.line(s, w);
      if (l.valid && l.dirty) write_back_l1d(s, w);
    }
  for (std::uint32_t s = 0; s < l2_.sets(); ++s)
    for (std::uint32_t w = 0; w < l2_.ways(); ++w) {
      const auto& l = l2_.line(s, w);
      if (l.valid && l.dirty) write_back_l2(s, w);
    }
  events_ = saved;
  l1i_.invalidate_all();
  l1d_.invalidate_all();
  l2_.invalidate_all();
}

void MemorySystem::reset_caches() {
  l1i_.invalidate_all();
  l1d_.invalidate_all();
  l2_.invalidate_all();
  events_ = MemEvents{};
}

void MemorySystem::write_ram_bytes(std::uint32_t addr, std::span<const std::uint8_t> bytes) {
  if (!in_ram(addr, static_cast<std::uint32_t>(bytes.size())))
    throw std::out_of_range("write outside RAM");
  std::memcpy(ram_.get() + (addr - kRamBase), bytes.data(), bytes.size());
}

}  // namespace rvfault
