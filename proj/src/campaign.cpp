#include "rvfault/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

namespace rvfault {

std::string_view to_string(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::Crash: return "crash";
    case OutcomeClass::SDC: return "sdc";
    case OutcomeClass::Masked: return "masked";
    case OutcomeClass::Timeout: return "timeout";
  }
  return "?";
}

std::optional<OutcomeClass> outcome_from_string(std::string_view s) {
  for (auto c : kAllOutcomes)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::string_view to_string(Tier t) {
  switch (t) {
    case Tier::Low: return "low";
    case Tier::Medium: return "medium";
    case Tier::High: return "high";
  }
  return "?";
}

std::optional<Tier> tier_from_string(std::string_view s) {
  for (auto t : kAllTiers)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

TierSpec tier_spec(Tier t) {
  switch (t) {
    case Tier::Low: return {0.05, 0.95};
    case Tier::Medium: return {0.05, 0.99};
    case Tier::High: return {0.01, 0.99};
  }
  throw std::invalid_argument("unknown tier");
}

double z_value(double confidence) {
  if (confidence == 0.95) return 1.9600;
  if (confidence == 0.99) return 2.5758;
  throw std::invalid_argument("no z-value for confidence " + std::to_string(confidence) +
                              "; pass one explicitly");
}

std::uint64_t sample_size(double margin, double confidence, std::optional<double> z) {
  if (!(margin > 0.0 && margin < 1.0)) throw std::invalid_argument("margin must be in (0, 1)");
  const double zz = z ? *z : z_value(confidence);
  if (!(zz > 0.0)) throw std::invalid_argument("z must be positive");
  return static_cast<std::uint64_t>(std::llround(zz * zz * 0.25 / (margin * margin)));
}

std::uint64_t sample_size(Tier t) {
  const auto s = tier_spec(t);
  return sample_size(s.margin, s.confidence);
}

std::uint64_t GoldenReference::budget(double timeout_factor) const {
  const long double b = std::ceil(static_cast<long double>(timeout_factor) * cycles);
  if (b >= static_cast<long double>(std::numeric_limits<std::uint64_t>::max()))
    return std::numeric_limits<std::uint64_t>::max() - 1;
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(b));
}

GoldenReference golden_run(const ProgramImage& program, const MachineConfig& machine) {
  MemorySystem mem(machine.memory);
  MachineState state;
  load(program, mem, state);
  InjectorSet none;
  const auto trace = run(state, mem, none, machine.max_golden_cycles);
  switch (trace.termination) {
    case Termination::Exited: break;
    case Termination::Trapped: {
      const auto& t = std::get<TrapCause>(trace.state.status);
      char buf[128];
      std::snprintf(buf, sizeof buf, "golden run trapped: %s at pc 0x%08x (detail 0x%08x)",
                    std::string(to_string(t.kind)).c_str(), t.pc_at_trap, t.detail);
      throw CampaignError(buf);
    }
    case Termination::TimedOut:
      throw CampaignError("golden run did not exit within " +
                          std::to_string(machine.max_golden_cycles) + " cycles");
  }
  GoldenReference g;
  g.output = trace.state.output;
  g.exit_code = std::get<Exited>(trace.state.status).code;
  g.hpc = trace.state.hpc;
  g.cycles = trace.state.cycle;
  return g;
}

OutcomeClass classify(Termination termination, const MachineState& final_state,
                      const GoldenReference& golden) {
  switch (termination) {
    case Termination::Trapped: return OutcomeClass::Crash;
    case Termination::TimedOut: return OutcomeClass::Timeout;
    case Termination::Exited: break;
  }
  const auto& e = std::get<Exited>(final_state.status);
  return e.code == golden.exit_code && final_state.output == golden.output ? OutcomeClass::Masked
                                                                           : OutcomeClass::SDC;
}

DeltaResult delta_mean(std::span<const std::uint64_t> golden,
                       std::span<const std::uint64_t> faulty) {
  if (golden.size() != faulty.size()) throw std::domain_error("counter vectors differ in length");
  DeltaResult r;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < golden.size(); ++i) {
    if (golden[i] == 0) {
      if (faulty[i] != 0) r.divergent_from_zero.push_back(i);
      continue;
    }
    const auto diff = golden[i] > faulty[i] ? golden[i] - faulty[i] : faulty[i] - golden[i];
    sum += static_cast<double>(diff) / static_cast<double>(golden[i]);
    ++n;
  }
  if (n == 0) throw std::domain_error("every golden counter is zero");
  r.value = sum / static_cast<double>(n) * 100.0;
  return r;
}

DeltaResult delta_mean(const HpcVector& golden, const HpcVector& faulty) {
  return delta_mean(std::span<const std::uint64_t>(golden.values()),
                    std::span<const std::uint64_t>(faulty.values()));
}

std::uint64_t engine_stream_seed(std::uint64_t run_seed, std::size_t slot) {
  return derive_seed({run_seed, 0x656E67696E65ull /* "engine" */, slot});
}

RunReport run_faulty(const ProgramImage& program, const MachineConfig& machine,
                     const GoldenReference& golden, std::span<const EngineSetup> engines,
                     std::uint64_t seed) {
  MemorySystem mem(machine.memory);
  MachineState state;
  load(program, mem, state);
  InjectorSet injectors;
  for (std::size_t i = 0; i < engines.size(); ++i)
    injectors.add(engines[i].kind, engines[i].config, engine_stream_seed(seed, i));
  injectors.set_sweep_period(machine.sweep_period);

  auto trace = run(state, mem, injectors, golden.budget(machine.timeout_factor));
  RunReport r;
  r.outcome = classify(trace.termination, trace.state, golden);
  r.termination = trace.termination;
  r.status = trace.state.status;
  r.output = std::move(trace.state.output);
  r.hpc = trace.state.hpc;
  r.cycles = trace.state.cycle;
  r.seed = seed;
  r.delta = delta_mean(golden.hpc, r.hpc);
  r.faults = std::move(trace.faults);
  return r;
}

std::uint64_t CampaignConfig::runs_for(Tier t) const {
  const auto& o = runs_override[static_cast<std::size_t>(t)];
  return o ? *o : sample_size(t);
}

void CampaignConfig::validate() const {
  if (benchmarks.empty()) throw ConfigError("benchmarks", "at least one benchmark is required");
  if (engines.empty()) throw ConfigError("engines", "at least one engine is required");
  if (tiers.empty()) throw ConfigError("campaign.tiers", "at least one tier is required");
  if (parallelism < 1) throw ConfigError("campaign.parallelism", "must be at least 1");
  if (!(machine.timeout_factor > 0.0))
    throw ConfigError("machine.timeout_factor", "must be positive");
  if (machine.max_golden_cycles == 0)
    throw ConfigError("machine.max_golden_cycles", "must be positive");
  std::set<std::string> names;
  for (const auto& b : benchmarks)
    if (!names.insert(b.name).second)
      throw ConfigError("benchmarks", "duplicate benchmark name '" + b.name + "'");
  std::set<EngineKind> kinds;
  for (const auto& e : engines) {
    if (!kinds.insert(e.kind).second)
      throw ConfigError("engines." + std::string(to_string(e.kind)), "configured twice");
    try {
      e.config.validate(e.kind, machine.memory);
    } catch (const ConfigError& err) {
      throw ConfigError("engines." + std::string(to_string(e.kind)) + "." + err.key(),
                        std::string(err.what()).substr(err.key().size() + 2));
    }
  }
  std::set<Tier> seen;
  for (auto t : tiers)
    if (!seen.insert(t).second)
      throw ConfigError("campaign.tiers", "duplicate tier '" + std::string(to_string(t)) + "'");
  for (auto t : kAllTiers)
    if (const auto& o = runs_override[static_cast<std::size_t>(t)]; o && *o == 0)
      throw ConfigError("campaign.runs." + std::string(to_string(t)), "must be at least 1");
}

double CellSummary::percent(OutcomeClass c) const {
  if (n_runs == 0) return 0.0;
  return 100.0 * static_cast<double>(counts[static_cast<std::size_t>(c)]) /
         static_cast<double>(n_runs);
}

std::string cell_engine_name(const CampaignConfig& cfg, std::size_t engine_cell) {
  if (!cfg.multi_engine) return std::string(to_string(cfg.engines.at(engine_cell).kind));
  std::string name;
  for (const auto& e : cfg.engines) {
    if (!name.empty()) name += '+';
    name += to_string(e.kind);
  }
  return name;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

std::uint64_t run_seed(std::uint64_t master, std::string_view benchmark, std::string_view engine,
                       Tier tier, std::uint64_t run_index) {
  return derive_seed(
      {master, fnv1a(benchmark), fnv1a(engine), static_cast<std::uint64_t>(tier), run_index});
}

std::vector<CellSummary> aggregate(std::span<const RunRecord> records) {
  std::vector<CellSummary> cells;
  std::map<std::tuple<std::string, std::string, Tier>, std::size_t> index;
  std::vector<double> sdc_sum, masked_sum;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.benchmark, r.engine, r.tier);
    auto [it, fresh] = index.emplace(key, cells.size());
    if (fresh) {
      CellSummary c;
      c.benchmark = r.benchmark;
      c.engine = r.engine;
      c.tier = r.tier;
      cells.push_back(std::move(c));
      sdc_sum.push_back(0.0);
      masked_sum.push_back(0.0);
    }
    auto& c = cells[it->second];
    ++c.n_runs;
    ++c.counts[static_cast<std::size_t>(r.outcome)];
    if (!r.divergent_from_zero.empty()) ++c.divergent_runs;
    if (r.outcome == OutcomeClass::SDC) sdc_sum[it->second] += r.delta;
    if (r.outcome == OutcomeClass::Masked) masked_sum[it->second] += r.delta;
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& c = cells[i];
    const auto n_sdc = c.counts[static_cast<std::size_t>(OutcomeClass::SDC)];
    const auto n_masked = c.counts[static_cast<std::size_t>(OutcomeClass::Masked)];
    if (n_sdc) c.delta_sdc = sdc_sum[i] / static_cast<double>(n_sdc);
    if (n_masked) c.delta_masked = masked_sum[i] / static_cast<double>(n_masked);
  }
  return cells;
}

CampaignReport run_campaign(const CampaignConfig& cfg, const ProgressFn& progress) {
  cfg.validate();

  CampaignReport report;
  report.config = cfg;
  std::vector<GoldenReference> goldens;
  for (const auto& b : cfg.benchmarks) {
    try {
      goldens.push_back(golden_run(b.image, cfg.machine));
    } catch (const CampaignError& e) {
      throw CampaignError(b.name + ": " + e.what());
    }
    report.goldens.push_back({b.name, goldens.back()});
  }

  // Cells in reporting order: benchmark, then engine, then tier.
  struct Cell {
    std::size_t bench;
    std::vector<EngineSetup> engines;
    std::string engine_name;
    Tier tier;
    std::uint64_t first_task;
    std::uint64_t n;
  };
  const std::size_t engine_cells = cfg.multi_engine ? 1 : cfg.engines.size();
  std::vector<Cell> cells;
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < cfg.benchmarks.size(); ++b) {
    for (std::size_t e = 0; e < engine_cells; ++e) {
      for (auto t : cfg.tiers) {
        Cell c{b, {}, cell_engine_name(cfg, e), t, total, cfg.runs_for(t)};
        if (cfg.multi_engine)
          c.engines = cfg.engines;
        else
          c.engines = {cfg.engines[e]};
        total += c.n;
        cells.push_back(std::move(c));
      }
    }
  }

  report.runs.resize(total);
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::uint64_t done = 0;

  auto worker = [&] {
    std::size_t cell = 0;
    for (;;) {
      const auto task = next.fetch_add(1);
      if (task >= total || failed.load()) return;
      while (task >= cells[cell].first_task + cells[cell].n) ++cell;
      while (task < cells[cell].first_task) --cell;
      const auto& c = cells[cell];
      const auto& bench = cfg.benchmarks[c.bench];
      const auto idx = task - c.first_task;
      try {
        const auto seed = run_seed(cfg.seed, bench.name, c.engine_name, c.tier, idx);
        const auto r = run_faulty(bench.image, cfg.machine, goldens[c.bench], c.engines, seed);
        RunRecord rec;
        rec.benchmark = bench.name;
        rec.engine = c.engine_name;
        rec.tier = c.tier;
        rec.run_index = idx;
        rec.seed = seed;
        rec.outcome = r.outcome;
        rec.delta = r.delta.value;
        rec.fault_count = r.faults.size();
        rec.cycles = r.cycles;
        if (const auto* e = std::get_if<Exited>(&r.status)) rec.exit_code = e->code;
        rec.divergent_from_zero = r.delta.divergent_from_zero;
        report.runs[task] = std::move(rec);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
      if (progress) {
        std::lock_guard lock(mu);
        progress(++done, total);
      }
    }
  };

  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::uint64_t>(cfg.parallelism, std::max<std::uint64_t>(total, 1)));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  report.cells = aggregate(report.runs);
  return report;
}

}  // namespace rvfault
