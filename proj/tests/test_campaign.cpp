#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rvfault/campaign.hpp"
#include "rvfault/report_io.hpp"
#include "test_util.hpp"

using namespace rvfault;

namespace {

// Direct transcription of the deviation formula, written independently of
// the library: mean over counters with nonzero golden of |f - g| / g * 100.
double brute_delta(const std::vector<std::uint64_t>& g, const std::vector<std::uint64_t>& f) {
  long double sum = 0;
  int n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0) continue;
    const long double gi = g[i], fi = f[i];
    sum += (fi > gi ? fi - gi : gi - fi) / gi * 100.0L;
    ++n;
  }
  return static_cast<double>(sum / n);
}

EngineSetup engine(EngineKind k, double p) {
  EngineSetup e;
  e.kind = k;
  e.config.probability = p;
  return e;
}

CampaignConfig one_cell(const std::string& bench, EngineKind k, double p) {
  CampaignConfig c;
  c.benchmarks.push_back({bench, test::kernel(bench)});
  c.engines.push_back(engine(k, p));
  c.seed = 2024;
  return c;
}

RunRecord rec(std::string b, std::string e, OutcomeClass o, double d = 0) {
  RunRecord r;
  r.benchmark = std::move(b);
  r.engine = std::move(e);
  r.outcome = o;
  r.delta = d;
  return r;
}

}  // namespace

TEST(SampleSize, TierSizes) {
  EXPECT_EQ(sample_size(0.05, 0.95), 384u);
  EXPECT_EQ(sample_size(0.05, 0.99), 663u);
  EXPECT_EQ(sample_size(0.01, 0.99), 16587u);
  EXPECT_EQ(sample_size(Tier::Low), 384u);
  EXPECT_EQ(sample_size(Tier::Medium), 663u);
  EXPECT_EQ(sample_size(Tier::High), 16587u);
  EXPECT_THROW(sample_size(0.05, 0.9), std::invalid_argument);
  EXPECT_EQ(sample_size(0.05, 0.9, 1.6449), 271u);
}

TEST(SampleSize, TierNames) {
  for (auto t : kAllTiers) EXPECT_EQ(tier_from_string(to_string(t)), t);
  for (auto o : kAllOutcomes) EXPECT_EQ(outcome_from_string(to_string(o)), o);
  EXPECT_FALSE(tier_from_string("extreme"));
}

TEST(Delta, Examples) {
  const std::vector<std::uint64_t> g{100, 200, 0, 0}, f{110, 180, 0, 0};
  EXPECT_DOUBLE_EQ(delta_mean(g, f).value, 10.0);
  EXPECT_DOUBLE_EQ(delta_mean(g, g).value, 0.0);
  const std::vector<std::uint64_t> z{0, 0}, one{1, 0};
  EXPECT_THROW(delta_mean(z, z), std::domain_error);
  EXPECT_THROW(delta_mean(z, one), std::domain_error);
  EXPECT_THROW(delta_mean(g, z), std::domain_error);
}

TEST(Delta, DivergentFromZeroFlagged) {
  const std::vector<std::uint64_t> g{100, 0, 50}, f{100, 7, 50};
  const auto d = delta_mean(g, f);
  EXPECT_DOUBLE_EQ(d.value, 0.0);
  EXPECT_EQ(d.divergent_from_zero, std::vector<std::size_t>{1});
}

TEST(Delta, ThreeZeroGoldenEntries) {
  Rng rng(5);
  std::vector<std::uint64_t> g(20), f(20);
  for (std::size_t i = 0; i < 20; ++i) {
    g[i] = 1 + rng.below(100000);
    f[i] = rng.below(200000);
  }
  g[3] = g[11] = g[19] = 0;
  EXPECT_NEAR(delta_mean(g, f).value, brute_delta(g, f), 1e-9);
}

// Property: library against the brute-force transcription, and
// non-negativity with equality iff all nonzero-golden counters match.
TEST(Delta, MatchesBruteForce) {
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    std::vector<std::uint64_t> g(20), f(20);
    for (std::size_t k = 0; k < 20; ++k) {
      g[k] = rng.below(4) == 0 ? 0 : rng.below(1'000'000'000);
      f[k] = rng.below(3) == 0 ? g[k] : rng.below(1'000'000'000);
    }
    g[0] = 1 + rng.below(1000);
    const auto d = delta_mean(g, f);
    const double ref = brute_delta(g, f);
    ASSERT_LT(std::abs(d.value - ref), 1e-9 * std::max(1.0, ref));
    ASSERT_GE(d.value, 0.0);
    bool equal = true;
    for (std::size_t k = 0; k < 20; ++k) equal = equal && (g[k] == 0 || g[k] == f[k]);
    ASSERT_EQ(d.value == 0.0, equal);
  }
}

TEST(Golden, CrcExitsWithDigest) {
  const auto g = golden_run(test::kernel("crc"), {});
  EXPECT_EQ(g.exit_code, 0);
  EXPECT_EQ(g.output, "ce040015\n");
  EXPECT_GT(g.hpc[HpcVector::minstret], 0u);
  EXPECT_EQ(g.cycles, g.hpc[HpcVector::mcycle]);
  EXPECT_EQ(g.budget(10.0), g.cycles * 10);
  EXPECT_EQ(g, golden_run(test::kernel("crc"), {}));
}

TEST(Golden, NonTerminatingProgramAborts) {
  MachineConfig m;
  m.max_golden_cycles = 100000;
  EXPECT_THROW(golden_run(assemble("loop: j loop\n"), m), CampaignError);
  EXPECT_THROW(golden_run(assemble(".word 0\n"), m), CampaignError);
}

TEST(Classify, Definitions) {
  GoldenReference g;
  g.output = "12345678\n";
  g.exit_code = 0;
  MachineState s;
  s.status = TrapCause{TrapKind::IllegalInstruction, 0, 0};
  EXPECT_EQ(classify(Termination::Trapped, s, g), OutcomeClass::Crash);
  s.status = Running{};
  EXPECT_EQ(classify(Termination::TimedOut, s, g), OutcomeClass::Timeout);
  s.status = Exited{0};
  s.output = g.output;
  s.hpc[HpcVector::mcycle] = 12345;  // counters differ from golden
  EXPECT_EQ(classify(Termination::Exited, s, g), OutcomeClass::Masked);
  s.output[3] = 'x';
  EXPECT_EQ(classify(Termination::Exited, s, g), OutcomeClass::SDC);
  s.output = g.output;
  s.status = Exited{1};
  EXPECT_EQ(classify(Termination::Exited, s, g), OutcomeClass::SDC);
}

TEST(Aggregate, Percentages) {
  std::vector<RunRecord> r;
  for (int i = 0; i < 300; ++i) r.push_back(rec("crc", "l1i", OutcomeClass::Crash));
  for (int i = 0; i < 50; ++i) r.push_back(rec("crc", "l1i", OutcomeClass::SDC, 2.0));
  for (int i = 0; i < 34; ++i) r.push_back(rec("crc", "l1i", OutcomeClass::Masked, 1.0));
  const auto cells = aggregate(r);
  ASSERT_EQ(cells.size(), 1u);
  const auto& c = cells[0];
  EXPECT_EQ(c.n_runs, 384u);
  auto r1 = [](double v) { return std::round(v * 10) / 10; };
  EXPECT_DOUBLE_EQ(r1(c.percent(OutcomeClass::Crash)), 78.1);
  EXPECT_DOUBLE_EQ(r1(c.percent(OutcomeClass::SDC)), 13.0);
  EXPECT_DOUBLE_EQ(r1(c.percent(OutcomeClass::Masked)), 8.9);
  double sum = 0;
  for (auto o : kAllOutcomes) sum += c.percent(o);
  EXPECT_NEAR(sum, 100.0, 1e-9);
  EXPECT_DOUBLE_EQ(*c.delta_sdc, 2.0);
  EXPECT_DOUBLE_EQ(*c.delta_masked, 1.0);
}

TEST(Aggregate, EmptyCategoryAndSingleRun) {
  std::vector<RunRecord> r{rec("crc", "mem", OutcomeClass::SDC, 4.2),
                           rec("crc", "mem", OutcomeClass::Crash, 99.0),
                           rec("qsort", "mem", OutcomeClass::Masked, 0.0)};
  const auto cells = aggregate(r);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].benchmark, "crc");
  EXPECT_DOUBLE_EQ(*cells[0].delta_sdc, 4.2);
  EXPECT_FALSE(cells[0].delta_masked);
  EXPECT_FALSE(cells[1].delta_sdc);
  EXPECT_DOUBLE_EQ(*cells[1].delta_masked, 0.0);
  const auto table = render_tables(cells);
  EXPECT_NE(table.find("4.20"), std::string::npos);
  EXPECT_NE(table.find('-'), std::string::npos);
}

TEST(RunFaulty, ZeroProbabilityIsMasked) {
  const auto img = test::kernel("bitcount");
  const auto g = golden_run(img, {});
  const std::vector<EngineSetup> e{engine(EngineKind::Mem, 0.0)};
  const auto r = run_faulty(img, {}, g, e, 1);
  EXPECT_EQ(r.outcome, OutcomeClass::Masked);
  EXPECT_EQ(r.delta.value, 0.0);
  EXPECT_TRUE(r.faults.empty());
  EXPECT_EQ(r.hpc, g.hpc);
}

// Property: every run lands in exactly one class, Masked runs reproduce the
// golden output and exit code, and a run is a pure function of its seed.
TEST(RunFaulty, ClassificationConsistent) {
  for (const char* k : {"crc", "qsort"}) {
    const auto img = test::kernel(k);
    const auto g = golden_run(img, {});
    for (const auto kind : kAllEngines) {
      std::vector<EngineSetup> e{engine(kind, 2e-4)};
      e[0].config.fault_type = FaultType::Random;
      e[0].config.faulty_bits.reset();
      for (std::uint64_t s = 0; s < 15; ++s) {
        const auto r = run_faulty(img, {}, g, e, s);
        const auto again = run_faulty(img, {}, g, e, s);
        ASSERT_EQ(r.hpc, again.hpc);
        ASSERT_EQ(r.faults, again.faults);
        MachineState st;
        st.status = r.status;
        st.output = r.output;
        ASSERT_EQ(r.outcome, classify(r.termination, st, g));
        switch (r.outcome) {
          case OutcomeClass::Masked:
            ASSERT_EQ(r.output, g.output);
            ASSERT_EQ(r.status, MachineStatus{Exited{g.exit_code}});
            break;
          case OutcomeClass::Crash: ASSERT_EQ(r.termination, Termination::Trapped); break;
          case OutcomeClass::Timeout:
            ASSERT_EQ(r.termination, Termination::TimedOut);
            ASSERT_GT(r.cycles, g.budget(10.0));
            break;
          case OutcomeClass::SDC: ASSERT_EQ(r.termination, Termination::Exited); break;
        }
        ASSERT_GE(r.delta.value, 0.0);
        for (const auto& f : r.faults) {
          if (f.skipped) continue;
          ASSERT_EQ(f.value_after, apply_fault(f.value_before, f.mask, f.type));
        }
      }
    }
  }
}

TEST(Campaign, ZeroProbabilityLowTier) {
  const auto rep = run_campaign(one_cell("crc", EngineKind::Mem, 0.0));
  ASSERT_EQ(rep.cells.size(), 1u);
  EXPECT_EQ(rep.cells[0].n_runs, 384u);
  EXPECT_EQ(rep.cells[0].counts[static_cast<int>(OutcomeClass::Masked)], 384u);
  EXPECT_DOUBLE_EQ(*rep.cells[0].delta_masked, 0.0);
  EXPECT_FALSE(rep.cells[0].delta_sdc);
  EXPECT_EQ(rep.runs.size(), 384u);
  for (const auto& r : rep.runs) EXPECT_EQ(r.delta, 0.0);
}

TEST(Campaign, HistogramSumsToRuns) {
  auto cfg = one_cell("qsort", EngineKind::CacheL1I, 1e-4);
  cfg.benchmarks.push_back({"crc", test::kernel("crc")});
  cfg.engines.push_back(engine(EngineKind::Reg, 1e-4));
  cfg.tiers = {Tier::Low, Tier::Medium};
  cfg.runs_override = {20, 30, std::nullopt};
  const auto rep = run_campaign(cfg);
  ASSERT_EQ(rep.cells.size(), 8u);
  std::set<std::uint64_t> seeds;
  for (const auto& c : rep.cells) {
    std::uint64_t sum = 0;
    for (auto n : c.counts) sum += n;
    EXPECT_EQ(sum, c.n_runs);
    EXPECT_EQ(c.n_runs, c.tier == Tier::Low ? 20u : 30u);
  }
  for (const auto& r : rep.runs) seeds.insert(r.seed);
  EXPECT_EQ(seeds.size(), rep.runs.size());
  EXPECT_EQ(aggregate(rep.runs), rep.cells);
}

TEST(Campaign, SerialEqualsParallel) {
  auto cfg = one_cell("crc", EngineKind::CacheL1D, 2e-4);
  cfg.engines.push_back(engine(EngineKind::Reg, 2e-4));
  cfg.runs_override[0] = 40;
  const auto serial = report_to_json(run_campaign(cfg));
  cfg.parallelism = 4;
  EXPECT_EQ(report_to_json(run_campaign(cfg)), serial);
}

TEST(Campaign, SeedsFollowNamesNotOrder) {
  auto a = one_cell("crc", EngineKind::CacheL1I, 2e-4);
  a.engines.push_back(engine(EngineKind::Mem, 2e-4));
  a.runs_override[0] = 10;
  auto b = a;
  std::swap(b.engines[0], b.engines[1]);
  const auto ra = run_campaign(a), rb = run_campaign(b);
  auto by_engine = [](const CampaignReport& r, const std::string& e) {
    std::vector<RunRecord> out;
    for (const auto& x : r.runs)
      if (x.engine == e) out.push_back(x);
    return out;
  };
  EXPECT_EQ(by_engine(ra, "l1i"), by_engine(rb, "l1i"));
  EXPECT_EQ(by_engine(ra, "mem"), by_engine(rb, "mem"));
  auto c = a;
  c.seed = 2025;
  EXPECT_NE(run_campaign(c).runs, ra.runs);
}

TEST(Campaign, MultiEngineCell) {
  auto cfg = one_cell("bitcount", EngineKind::Reg, 1e-4);
  cfg.engines.push_back(engine(EngineKind::Mem, 1e-4));
  cfg.multi_engine = true;
  cfg.runs_override[0] = 5;
  const auto rep = run_campaign(cfg);
  ASSERT_EQ(rep.cells.size(), 1u);
  EXPECT_EQ(rep.cells[0].engine, "reg+mem");
}

TEST(Campaign, ProgressReported) {
  auto cfg = one_cell("crc", EngineKind::Mem, 1e-4);
  cfg.runs_override[0] = 7;
  std::uint64_t last = 0, total = 0;
  run_campaign(cfg, [&](std::uint64_t d, std::uint64_t t) {
    EXPECT_GT(d, last);
    last = d;
    total = t;
  });
  EXPECT_EQ(last, 7u);
  EXPECT_EQ(total, 7u);
}

TEST(Campaign, GoldenFailureAborts) {
  CampaignConfig cfg;
  cfg.machine.max_golden_cycles = 10000;
  cfg.benchmarks.push_back({"spin", assemble("loop: j loop\n")});
  cfg.engines.push_back(engine(EngineKind::Mem, 1e-3));
  EXPECT_THROW(run_campaign(cfg), CampaignError);
}

TEST(Campaign, ValidateRejects) {
  CampaignConfig cfg;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = one_cell("crc", EngineKind::Mem, 1e-3);
  EXPECT_NO_THROW(cfg.validate());
  cfg.engines.push_back(engine(EngineKind::Mem, 1e-3));
  EXPECT_THROW(cfg.validate(), ConfigError);  // duplicate engine
  cfg = one_cell("crc", EngineKind::Mem, 2.0);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Campaign, TimeoutBudget) {
  GoldenReference g;
  g.cycles = 1001;
  EXPECT_EQ(g.budget(10.0), 10010u);
  EXPECT_EQ(g.budget(1.5), 1502u);
  g.cycles = 0;
  EXPECT_EQ(g.budget(10.0), 1u);
}
