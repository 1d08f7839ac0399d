#include <gtest/gtest.h>

#include <cmath>

#include "rvfault/assembler.hpp"
#include "rvfault/injector.hpp"
#include "rvfault/run.hpp"
#include "test_util.hpp"

using namespace rvfault;
using test::Loaded;

namespace {

FaultConfig forced_reg(unsigned reg, std::uint32_t mask, FaultType type) {
  FaultConfig c;
  c.probability = 1.0;
  c.start = 0;
  c.end = 1'000'000;
  c.mask = mask;
  c.fault_type = type;
  c.target_class = TargetClass::Integer;
  c.target_register = reg;
  return c;
}

// Walks a buffer through s0: the pointer register is live on every iteration.
constexpr const char* kPointerLoop =
    "_start: la s0, buf\n"
    "li t1, 200\n"
    "loop: lw t0, 0(s0)\n"
    "addi t1, t1, -1\n"
    "bnez t1, loop\n"
    "li a0, 0\nli a7, 93\necall\n"
    ".align 2\n"
    "buf: .word 1, 2, 3, 4\n";

}  // namespace

TEST(RegInject, ForcedTarget) {
  MachineState s;
  PermanentFaultRegistry reg;
  Rng rng(1);
  const auto r = reg_inject_event(forced_reg(5, 0x1, FaultType::BitFlip), 10, s, reg, rng);
  ASSERT_TRUE(r);
  EXPECT_EQ(s.xregs[5], 1u);
  EXPECT_EQ(r->value_before, 0u);
  EXPECT_EQ(r->value_after, 1u);
  EXPECT_EQ(r->cycle, 10u);
  EXPECT_EQ(std::get<RegLocation>(r->location), (RegLocation{RegClass::Integer, 5}));
  EXPECT_TRUE(reg.empty());
}

TEST(RegInject, PcGateMismatch) {
  MachineState s;
  s.pc = kRamBase;
  PermanentFaultRegistry reg;
  Rng rng(1);
  auto c = forced_reg(5, 1, FaultType::BitFlip);
  c.pc_target = 0x80000040;
  EXPECT_FALSE(reg_inject_event(c, 10, s, reg, rng));
  s.pc = 0x80000040;
  EXPECT_TRUE(reg_inject_event(c, 10, s, reg, rng));
}

TEST(RegInject, WindowGate) {
  MachineState s;
  PermanentFaultRegistry reg;
  Rng rng(1);
  auto c = forced_reg(5, 1, FaultType::BitFlip);
  c.start = 100;
  c.end = 200;
  EXPECT_FALSE(reg_inject_event(c, 99, s, reg, rng));
  EXPECT_TRUE(reg_inject_event(c, 100, s, reg, rng));
  EXPECT_TRUE(reg_inject_event(c, 200, s, reg, rng));
  EXPECT_FALSE(reg_inject_event(c, 201, s, reg, rng));
}

TEST(RegInject, StuckAt0Persists) {
  Loaded l(assemble("li t2, -1\nli t2, 12345\naddi t2, t2, 7\nmv s0, t2\nli a7, 93\necall\n"));
  InjectorSet inj;
  auto c = forced_reg(7, 0xFFFFFFFF, FaultType::StuckAt0);
  c.end = 1;  // one event, delivered before the second instruction
  inj.add(EngineKind::Reg, c, 5);
  const auto t = run(l.state, l.mem, inj, 100000);
  ASSERT_EQ(t.termination, Termination::Exited);
  ASSERT_FALSE(t.faults.empty());
  EXPECT_EQ(t.state.xregs[7], 0u);
  EXPECT_EQ(t.state.xregs[8], 0u);  // every read of t2 yielded 0
}

TEST(RegInject, NeverTargetsX0) {
  FaultConfig c;
  c.probability = 1;
  c.end = kNever;
  Rng rng(9);
  PermanentFaultRegistry reg;
  MachineState s;
  std::array<int, 32> hits{};
  for (int i = 0; i < 62000; ++i) {
    const auto r = reg_inject_event(c, 1, s, reg, rng);
    const auto loc = std::get<RegLocation>(r->location);
    ASSERT_EQ(loc.cls, RegClass::Integer);
    ASSERT_NE(loc.index, 0);
    ++hits[loc.index];
  }
  EXPECT_EQ(s.xregs[0], 0u);
  for (int i = 1; i < 32; ++i) EXPECT_NEAR(hits[i], 2000, 250) << i;
}

TEST(RegInject, RandomClassCoversBoth) {
  FaultConfig c;
  c.probability = 1;
  c.target_class = TargetClass::Random;
  c.faulty_bits.reset();
  Rng rng(10);
  PermanentFaultRegistry reg;
  MachineState s;
  int fl = 0;
  for (int i = 0; i < 4000; ++i) {
    const auto r = reg_inject_event(c, 1, s, reg, rng);
    fl += std::get<RegLocation>(r->location).cls == RegClass::Float;
    const auto bits = std::popcount(r->mask);
    ASSERT_GE(bits, 1);
    ASSERT_LE(bits, 32);
    ASSERT_EQ(r->value_after, apply_fault(r->value_before, r->mask, r->type));
  }
  EXPECT_NEAR(fl, 2000, 200);
}

// Crafted kernel: flipping one bit of the live pointer register. The outcome
// of each of the 32 flips follows from the address arithmetic alone.
TEST(RegInject, PointerFlipCrashes) {
  const auto img = assemble(kPointerLoop);
  const auto buf = img.symbols().at("buf");
  int oob = 0;
  for (unsigned bit = 0; bit < 32; ++bit) {
    Loaded l(img);
    InjectorSet inj;
    auto c = forced_reg(8, 1u << bit, FaultType::BitFlip);
    // after la (2 instructions, cold fetch) s0 is live; one event only
    c.start = 300;
    c.end = 300;
    c.probability = 1.0;
    inj.add(EngineKind::Reg, c, bit);
    // p=1 gives one event per cycle; the window keeps exactly one
    const auto t = run(l.state, l.mem, inj, 1'000'000);
    ASSERT_EQ(t.faults.size(), 1u) << bit;
    const auto ptr = buf ^ (1u << bit);
    if (bit < 2) {
      EXPECT_EQ(std::get<TrapCause>(t.state.status).kind, TrapKind::MisalignedAccess) << bit;
    } else if (ptr < kRamBase || ptr >= kRamBase + (8u << 20)) {
      EXPECT_EQ(std::get<TrapCause>(t.state.status).kind, TrapKind::AccessOutOfBounds) << bit;
      ++oob;
    } else {
      EXPECT_EQ(t.termination, Termination::Exited) << bit;
    }
  }
  EXPECT_EQ(oob, 9);  // bits 23..31
}

TEST(RegInject, ProbabilityOnePointerRun) {
  Loaded l(assemble(kPointerLoop));
  InjectorSet inj;
  auto c = forced_reg(8, 0x80000000, FaultType::BitFlip);
  inj.add(EngineKind::Reg, c, 3);
  const auto t = run(l.state, l.mem, inj, 1'000'000);
  EXPECT_EQ(t.termination, Termination::Trapped);
  EXPECT_EQ(std::get<TrapCause>(t.state.status).kind, TrapKind::AccessOutOfBounds);
  EXPECT_GE(t.faults.size(), 1u);
}

TEST(CacheInject, AllInvalidSkips) {
  MemorySystem m;
  PermanentFaultRegistry reg;
  Rng rng(1);
  FaultConfig c;
  c.probability = 1;
  const auto r = cache_inject_event(c, Level::L2, 5, m, reg, rng);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->size(), 1u);
  EXPECT_TRUE(r->front().skipped);
  EXPECT_EQ(r->front().engine, EngineKind::CacheL2);
}

TEST(CacheInject, CorruptionSizeThree) {
  MemorySystem m;
  for (std::uint32_t i = 0; i < 50; ++i) m.access(AccessKind::Load, kRamBase + i * 64, 4);
  PermanentFaultRegistry reg;
  Rng rng(2);
  FaultConfig c;
  c.corruption_size = 3;
  for (int n = 0; n < 200; ++n) {
    const auto r = cache_inject_event(c, Level::L1D, 5, m, reg, rng);
    ASSERT_EQ(r->size(), 3u);
    const auto first = std::get<CacheLocation>(r->front().location);
    for (const auto& rec : *r) {
      const auto loc = std::get<CacheLocation>(rec.location);
      EXPECT_EQ(loc.set, first.set);
      EXPECT_EQ(loc.way, first.way);
      EXPECT_EQ(std::popcount(rec.mask), 1);
      EXPECT_FALSE(rec.skipped);
      EXPECT_EQ(*rec.address, m.block_address({Level::L1D, loc.set, loc.way}) + loc.offset);
    }
  }
}

TEST(CacheInject, OutsideWindow) {
  MemorySystem m;
  m.access(AccessKind::Load, kRamBase, 4);
  PermanentFaultRegistry reg;
  Rng rng(2);
  FaultConfig c;
  c.start = 10;
  c.end = 20;
  EXPECT_FALSE(cache_inject_event(c, Level::L1D, 9, m, reg, rng));
  EXPECT_TRUE(cache_inject_event(c, Level::L1D, 10, m, reg, rng));
}

TEST(CacheInject, DirtyFlipPropagatesToRam) {
  MemorySystem m;
  const std::uint32_t a = kRamBase + 0x4000;
  m.access(AccessKind::Store, a, 4, 0x3C3C3C3C);
  ASSERT_EQ(m.cache(Level::L1D).valid_count(), 1u);
  PermanentFaultRegistry reg;
  Rng rng(3);
  FaultConfig c;
  c.mask = 0xFF;
  const auto r = cache_inject_event(c, Level::L1D, 1, m, reg, rng);
  ASSERT_EQ(r->size(), 1u);
  const auto addr = *r->front().address;
  ASSERT_GE(addr, a - (a % 64));
  m.flush_all();
  const auto expect = addr >= a && addr < a + 4 ? 0xC3 : 0xFF;
  EXPECT_EQ(m.peek_ram(addr), expect);
  EXPECT_EQ((m.access(AccessKind::Load, addr & ~3u, 4).value >> (8 * (addr & 3))) & 0xFF,
            static_cast<std::uint32_t>(expect));
}

TEST(MemInject, SingleByteRange) {
  MemorySystem m;
  PermanentFaultRegistry reg;
  Rng rng(4);
  FaultConfig c;
  c.mask = 0x01;
  c.target_start = c.target_end = kRamBase + 0x100;
  const auto r = mem_inject_event(c, 1, m, reg, rng);
  ASSERT_TRUE(r);
  EXPECT_EQ(m.peek_ram(kRamBase + 0x100), 0x01);
  EXPECT_EQ(r->value_before, 0u);
  EXPECT_EQ(r->value_after, 1u);
  EXPECT_EQ(m.events(), MemEvents{});
}

TEST(MemInject, OutsideWindow) {
  MemorySystem m;
  PermanentFaultRegistry reg;
  Rng rng(4);
  FaultConfig c;
  c.start = 100;
  c.end = 200;
  EXPECT_FALSE(mem_inject_event(c, 50, m, reg, rng));
}

TEST(MemInject, UniformOverRange) {
  MemorySystem m;
  PermanentFaultRegistry reg;
  Rng rng(5);
  FaultConfig c;
  c.target_start = kRamBase + 10;
  c.target_end = kRamBase + 19;
  std::array<int, 10> n{};
  for (int i = 0; i < 20000; ++i) {
    const auto r = mem_inject_event(c, 1, m, reg, rng);
    ASSERT_GE(*r->address, c.target_start);
    ASSERT_LE(*r->address, c.target_end);
    ++n[*r->address - c.target_start];
  }
  for (int k : n) EXPECT_NEAR(k, 2000, 250);
}

// Stuck-at-1 bit 7 in a RAM byte; the program stores 0 there, the store
// reaches RAM on flush, and a later read still sees bit 7 set.
TEST(MemInject, StuckAtSurvivesProgramStore) {
  const auto img = assemble(
      "la a0, cell\nsb zero, 0(a0)\nlbu s0, 0(a0)\nli a7, 93\necall\n.align 2\ncell: .word 0\n");
  const auto cell = img.symbols().at("cell");
  Loaded l(img);
  InjectorSet inj;
  FaultConfig c;
  c.probability = 1;
  c.start = c.end = 1;
  c.mask = 0x80;
  c.fault_type = FaultType::StuckAt1;
  c.target_start = c.target_end = cell;
  inj.add(EngineKind::Mem, c, 1);
  const auto t = run(l.state, l.mem, inj, 100000);
  ASSERT_EQ(t.faults.size(), 1u);
  EXPECT_EQ(t.state.xregs[8], 0u);  // served by L1D, whose cell is healthy
  l.mem.attach_registry(&inj.registry());
  l.mem.flush_all();
  EXPECT_EQ(l.mem.peek_ram(cell) & 0x80, 0x80);
  EXPECT_EQ(l.mem.access(AccessKind::Load, cell, 1).value & 0x80, 0x80u);
  l.mem.attach_registry(nullptr);
}

TEST(MemInject, StuckAtContradictionSkipped) {
  MemorySystem m;
  PermanentFaultRegistry reg;
  Rng rng(6);
  FaultConfig c;
  c.target_start = c.target_end = kRamBase;
  c.mask = 0x1;
  c.fault_type = FaultType::StuckAt1;
  m.attach_registry(&reg);
  ASSERT_FALSE(mem_inject_event(c, 1, m, reg, rng)->skipped);
  c.fault_type = FaultType::StuckAt0;
  const auto r = mem_inject_event(c, 2, m, reg, rng);
  EXPECT_TRUE(r->skipped);
  EXPECT_EQ(m.peek_ram(kRamBase), 1);
  m.attach_registry(nullptr);
}

TEST(Engine, PastEndGoesQuiet) {
  FaultConfig c;
  c.probability = 0.5;
  c.end = 100;
  InjectionEngine e(EngineKind::Mem, c, 1);
  MachineState s;
  MemorySystem m;
  PermanentFaultRegistry reg;
  std::vector<FaultRecord> out;
  e.deliver(1000, s, m, reg, out);
  EXPECT_EQ(e.next_event(), kNever);
  for (const auto& r : out) EXPECT_LE(r.cycle, 100u);
  EXPECT_GT(out.size(), 20u);
}

TEST(Engine, ZeroProbabilityNeverFires) {
  FaultConfig c;
  c.probability = 0;
  InjectionEngine e(EngineKind::Reg, c, 1);
  EXPECT_EQ(e.next_event(), kNever);
}

// Property: event cycles form a renewal process with i.i.d. Geometric(p)
// gaps (mean 1/p, variance (1-p)/p^2, no lag-1 correlation).
TEST(Engine, GeometricRenewal) {
  for (const double p : {0.5, 0.01}) {
    FaultConfig c;
    c.probability = p;
    c.end = kNever;
    c.target_start = c.target_end = kRamBase;
    InjectionEngine e(EngineKind::Mem, c, 77);
    MachineState s;
    MemorySystem m;
    PermanentFaultRegistry reg;
    std::vector<FaultRecord> out;
    std::vector<double> gaps;
    std::uint64_t prev = 0;
    while (gaps.size() < 50000) {
      out.clear();
      e.deliver(e.next_event(), s, m, reg, out);
      ASSERT_EQ(out.size(), 1u);
      gaps.push_back(static_cast<double>(out[0].cycle - prev));
      prev = out[0].cycle;
    }
    double mean = 0;
    for (double g : gaps) mean += g;
    mean /= gaps.size();
    double var = 0, cov = 0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      var += (gaps[i] - mean) * (gaps[i] - mean);
      if (i + 1 < gaps.size()) cov += (gaps[i] - mean) * (gaps[i + 1] - mean);
    }
    var /= gaps.size();
    const double rho = cov / gaps.size() / var;
    EXPECT_NEAR(mean, 1 / p, 0.03 / p);
    EXPECT_NEAR(var, (1 - p) / (p * p), 0.1 * (1 - p) / (p * p));
    EXPECT_LT(std::abs(rho), 0.02);
  }
}

// Enabling another engine never changes an engine's own draws.
TEST(Engine, StreamsIndependent) {
  FaultConfig c;
  c.probability = 0.1;
  c.end = kNever;
  auto records_of = [&](bool with_mem) {
    InjectorSet set;
    set.add(EngineKind::Reg, c, 11);
    if (with_mem) set.add(EngineKind::Mem, c, 12);
    MachineState s;
    MemorySystem m;
    set.deliver(5000, s, m);
    std::vector<FaultRecord> out;
    for (const auto& r : set.records())
      if (r.engine == EngineKind::Reg) out.push_back(r);
    return out;
  };
  const auto a = records_of(false);
  EXPECT_EQ(a, records_of(true));
  EXPECT_GT(a.size(), 100u);
}

TEST(Injection, DeterministicRun) {
  const auto img = test::kernel("qsort");
  auto once = [&] {
    Loaded l(img);
    InjectorSet set;
    FaultConfig c;
    c.probability = 1e-3;
    c.fault_type = FaultType::Random;
    c.faulty_bits.reset();
    set.add(EngineKind::CacheL1D, c, 99);
    set.add(EngineKind::Reg, c, 98);
    return run(l.state, l.mem, set, 300000);
  };
  const auto a = once(), b = once();
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.faults, b.faults);
  EXPECT_EQ(a.termination, b.termination);
  EXPECT_FALSE(a.faults.empty());
}

// An injection changes no counter, cycle, or cache metadata by itself.
TEST(Injection, SideEffectIsolation) {
  Loaded l(test::kernel("crc"));
  InjectorSet none;
  run(l.state, l.mem, none, 20000);  // warm, mid-run state
  Rng rng(8);
  PermanentFaultRegistry reg;
  for (int i = 0; i < 2000; ++i) {
    const auto hpc = l.state.hpc;
    const auto cycle = l.state.cycle;
    const auto lines = l.mem.cache(Level::L1D).lines();
    const auto l2 = l.mem.cache(Level::L2).lines();
    const auto ev = l.mem.events();
    FaultConfig c;
    c.fault_type = FaultType::BitFlip;
    switch (i % 5) {
      case 0: reg_inject_event(c, cycle, l.state, reg, rng); break;
      case 1: cache_inject_event(c, Level::L1I, cycle, l.mem, reg, rng); break;
      case 2: cache_inject_event(c, Level::L1D, cycle, l.mem, reg, rng); break;
      case 3: cache_inject_event(c, Level::L2, cycle, l.mem, reg, rng); break;
      default: mem_inject_event(c, cycle, l.mem, reg, rng);
    }
    ASSERT_EQ(l.state.hpc, hpc);
    ASSERT_EQ(l.state.cycle, cycle);
    ASSERT_EQ(l.mem.cache(Level::L1D).lines(), lines);
    ASSERT_EQ(l.mem.cache(Level::L2).lines(), l2);
    ASSERT_EQ(l.mem.events(), ev);
  }
}

TEST(Injection, SweepMatchesOnAccessEnforcement) {
  const auto img = test::kernel("bitcount");
  auto once = [&](std::uint64_t sweep) {
    Loaded l(img);
    InjectorSet set;
    FaultConfig c;
    c.probability = 2e-4;
    c.fault_type = FaultType::StuckAt1;
    set.add(EngineKind::Mem, c, 5);
    set.add(EngineKind::CacheL1D, c, 6);
    set.set_sweep_period(sweep);
    return run(l.state, l.mem, set, 1'000'000);
  };
  const auto a = once(0), b = once(100);
  EXPECT_EQ(a.state.output, b.state.output);
  EXPECT_EQ(a.state.hpc, b.state.hpc);
  EXPECT_EQ(a.faults, b.faults);
}

TEST(Config, ValidateNamesField) {
  const MemoryConfig mem;
  auto key_of = [&](const FaultConfig& c, EngineKind k) -> std::string {
    try {
      c.validate(k, mem);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return "";
  };
  FaultConfig c;
  EXPECT_EQ(key_of(c, EngineKind::Mem), "");
  c.probability = 1.5;
  EXPECT_EQ(key_of(c, EngineKind::Reg), "probability");
  c = {};
  c.start = 10;
  c.end = 5;
  EXPECT_EQ(key_of(c, EngineKind::Reg), "start");
  c = {};
  c.mask = 0x100;
  EXPECT_EQ(key_of(c, EngineKind::CacheL1D), "mask");
  EXPECT_EQ(key_of(c, EngineKind::Reg), "");
  c = {};
  c.faulty_bits = 9;
  EXPECT_EQ(key_of(c, EngineKind::Mem), "faulty_bits");
  c = {};
  c.corruption_size = 0;
  EXPECT_EQ(key_of(c, EngineKind::CacheL2), "corruption_size");
  c = {};
  c.target_end = kRamBase + (8u << 20);
  EXPECT_EQ(key_of(c, EngineKind::Mem), "target_end");
  c = {};
  c.target_register = 0;
  EXPECT_EQ(key_of(c, EngineKind::Reg), "target_register");
}
