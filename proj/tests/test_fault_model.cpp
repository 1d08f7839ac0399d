#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <map>

#include "rvfault/fault_model.hpp"
#include "rvfault/memsys.hpp"

using namespace rvfault;

TEST(ApplyFault, Examples) {
  EXPECT_EQ(apply_fault(0b1010, 0b0011, FaultType::BitFlip), 0b1001u);
  EXPECT_EQ(apply_fault(0xFF, 0x0F, FaultType::StuckAt0), 0xF0u);
  EXPECT_EQ(apply_fault(0x00, 0x81, FaultType::StuckAt1), 0x81u);
}

TEST(ApplyFault, Properties) {
  Rng rng(8);
  for (int i = 0; i < 200000; ++i) {
    const auto v = static_cast<std::uint32_t>(rng.next());
    const auto m = static_cast<std::uint32_t>(rng.next());
    ASSERT_EQ(apply_fault(apply_fault(v, m, FaultType::BitFlip), m, FaultType::BitFlip), v);
    for (const auto t : {FaultType::StuckAt0, FaultType::StuckAt1}) {
      const auto once = apply_fault(v, m, t);
      ASSERT_EQ(apply_fault(once, m, t), once);
    }
    ASSERT_EQ(apply_fault(v, m, FaultType::StuckAt0) & m, 0u);
    ASSERT_EQ(apply_fault(v, m, FaultType::StuckAt1) & m, m);
    // bits outside the mask are untouched
    for (const auto t : {FaultType::BitFlip, FaultType::StuckAt0, FaultType::StuckAt1})
      ASSERT_EQ(apply_fault(v, m, t) & ~m, v & ~m);
  }
}

TEST(RandomMask, SingleBit) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto m = random_mask(1, 8, rng);
    EXPECT_EQ(std::popcount(m), 1);
    EXPECT_LE(m, 0x80u);
  }
}

TEST(RandomMask, FullWidth) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(random_mask(8, 8, rng), 0xFFu);
  EXPECT_EQ(random_mask(32, 32, rng), 0xFFFFFFFFu);
}

TEST(RandomMask, PopcountAndWidth) {
  Rng rng(2);
  for (int i = 0; i < 100000; ++i) {
    const unsigned w = rng.below(2) ? 8 : 32;
    const unsigned k = 1 + static_cast<unsigned>(rng.below(w));
    const auto m = random_mask(k, w, rng);
    ASSERT_EQ(static_cast<unsigned>(std::popcount(m)), k);
    if (w == 8) {
      ASSERT_LT(m, 0x100u);
    }
  }
}

TEST(RandomMask, TwoBitUniform) {
  Rng rng(2024);
  std::map<std::uint32_t, int> counts;
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) ++counts[random_mask(2, 8, rng)];
  ASSERT_EQ(counts.size(), 28u);
  const double p = 1.0 / 28;
  const double expect = kDraws * p;
  const double sigma = std::sqrt(kDraws * p * (1 - p));
  double chi2 = 0;
  for (const auto& [m, n] : counts) {
    EXPECT_EQ(std::popcount(m), 2);
    EXPECT_LT(std::abs(n - expect), 5 * sigma) << std::hex << m;
    chi2 += (n - expect) * (n - expect) / expect;
  }
  // 27 degrees of freedom; 0.999 quantile is about 55.5
  EXPECT_LT(chi2, 55.5);
}

TEST(NextDelay, Edges) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(next_delay(1.0, rng), 1u);
  EXPECT_EQ(next_delay(0.0, rng), kNever);
}

TEST(NextDelay, GeometricMean) {
  for (const double p : {0.5, 0.01, 0.001}) {
    Rng rng(99);
    constexpr int kN = 100000;
    double sum = 0;
    std::uint64_t ones = 0;
    for (int i = 0; i < kN; ++i) {
      const auto d = next_delay(p, rng);
      ASSERT_GE(d, 1u);
      sum += static_cast<double>(d);
      ones += d == 1;
    }
    EXPECT_NEAR(sum / kN, 1 / p, 0.03 / p) << p;
    // P(gap == 1) = p
    const double sigma = std::sqrt(kN * p * (1 - p));
    EXPECT_LT(std::abs(static_cast<double>(ones) - kN * p), 5 * sigma + 1) << p;
  }
}

// Gaps are memoryless: P(gap > a + b | gap > a) = P(gap > b).
TEST(NextDelay, Memoryless) {
  const double p = 0.05;
  Rng rng(17);
  constexpr int kN = 200000;
  int gt10 = 0, gt20 = 0;
  for (int i = 0; i < kN; ++i) {
    const auto d = next_delay(p, rng);
    gt10 += d > 10;
    gt20 += d > 20;
  }
  const double expect = std::pow(1 - p, 10);
  EXPECT_NEAR(static_cast<double>(gt10) / kN, expect, 0.01);
  EXPECT_NEAR(static_cast<double>(gt20) / gt10, expect, 0.01);
}

TEST(ResolveFaultType, UniformOverConcrete) {
  Rng rng(5);
  std::map<FaultType, int> n;
  for (int i = 0; i < 30000; ++i) {
    const auto t = resolve_fault_type(FaultType::Random, rng);
    ASSERT_NE(t, FaultType::Random);
    ++n[t];
  }
  ASSERT_EQ(n.size(), 3u);
  for (const auto& [t, c] : n) EXPECT_NEAR(c, 10000, 500);
  EXPECT_EQ(resolve_fault_type(FaultType::StuckAt1, rng), FaultType::StuckAt1);
}

TEST(Registry, EmptyIsIdentity) {
  PermanentFaultRegistry r;
  EXPECT_EQ(r.enforce(RegLocation{RegClass::Integer, 7}, 0x1234u), 0x1234u);
  EXPECT_EQ(r.enforce_ram(kNever & 0xFFFFFFFF, 0x12), 0x12);
  EXPECT_TRUE(r.empty());
}

TEST(Registry, StuckAt1OnRegister) {
  PermanentFaultRegistry r;
  const RegLocation x7{RegClass::Integer, 7};
  ASSERT_TRUE(r.add(x7, 0x2, FaultType::StuckAt1));
  EXPECT_EQ(r.enforce(x7, 0x0), 0x2u);
  EXPECT_EQ(r.enforce_reg(RegClass::Integer, 7, 0x0), 0x2u);
  EXPECT_EQ(r.enforce_reg(RegClass::Float, 7, 0x0), 0x0u);
}

TEST(Registry, DisjointMasksCommute) {
  const RegLocation x7{RegClass::Integer, 7};
  PermanentFaultRegistry a, b;
  a.add(x7, 0x1, FaultType::StuckAt0);
  a.add(x7, 0x2, FaultType::StuckAt1);
  b.add(x7, 0x2, FaultType::StuckAt1);
  b.add(x7, 0x1, FaultType::StuckAt0);
  EXPECT_EQ(a.enforce(x7, 0x3), 0x2u);
  EXPECT_EQ(b.enforce(x7, 0x3), 0x2u);
}

TEST(Registry, RejectsBitFlipAndContradictions) {
  PermanentFaultRegistry r;
  const CacheLocation c{Level::L1D, 3, 1, 9};
  EXPECT_FALSE(r.add(c, 0x1, FaultType::BitFlip));
  EXPECT_FALSE(r.add(c, 0x0, FaultType::StuckAt0));
  EXPECT_TRUE(r.add(c, 0x1, FaultType::StuckAt0));
  EXPECT_FALSE(r.add(c, 0x3, FaultType::StuckAt1));
  EXPECT_EQ(r.entries().size(), 1u);
  EXPECT_TRUE(r.add(c, 0x2, FaultType::StuckAt1));
  EXPECT_EQ(r.enforce_cache(Level::L1D, 3, 1, 9, 0x01), 0x02);
  EXPECT_EQ(r.enforce_cache(Level::L1D, 3, 2, 9, 0x01), 0x01);
  EXPECT_EQ(r.enforce_cache(Level::L2, 3, 1, 9, 0x01), 0x01);
  EXPECT_TRUE(r.has_entries(Level::L1D));
  EXPECT_FALSE(r.has_entries(Level::RAM));
}

TEST(Registry, EnforcementSoundness) {
  Rng rng(6);
  for (int i = 0; i < 20000; ++i) {
    PermanentFaultRegistry r;
    const RamLocation loc{kRamBase + static_cast<std::uint32_t>(rng.below(1000))};
    std::uint32_t zeros = 0, ones = 0;
    for (int k = 0; k < 4; ++k) {
      const auto m = static_cast<std::uint32_t>(rng.below(256));
      const auto t = rng.below(2) ? FaultType::StuckAt0 : FaultType::StuckAt1;
      if (r.add(loc, m, t)) (t == FaultType::StuckAt0 ? zeros : ones) |= m;
    }
    ASSERT_EQ(zeros & ones, 0u);
    for (int k = 0; k < 10; ++k) {
      const auto v = static_cast<std::uint8_t>(rng.below(256));
      const auto e = r.enforce_ram(loc.addr, v);
      ASSERT_EQ(e & zeros, 0u);
      ASSERT_EQ(e & ones, ones);
      ASSERT_EQ(e & ~(zeros | ones) & 0xFF, v & ~(zeros | ones) & 0xFF);
    }
  }
}

TEST(Rng, BelowInRangeAndDeterministic) {
  Rng a(42), b(42);
  for (int i = 0; i < 10000; ++i) {
    const auto x = a.below(7);
    ASSERT_LT(x, 7u);
    ASSERT_EQ(x, b.below(7));
  }
  EXPECT_NE(derive_seed({1, 2}), derive_seed({2, 1}));
}
