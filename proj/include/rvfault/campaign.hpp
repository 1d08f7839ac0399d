#pragma once

// Statistical fault-injection campaigns: sample sizing, golden runs,
// faulty runs, classification and counter-deviation analysis.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rvfault/assembler.hpp"
#include "rvfault/injector.hpp"
#include "rvfault/machine.hpp"
#include "rvfault/memsys.hpp"
#include "rvfault/run.hpp"

namespace rvfault {

/// Reporting order: Crash, SDC, Masked, Timeout.
enum class OutcomeClass : std::uint8_t { Crash, SDC, Masked, Timeout };
inline constexpr std::array<OutcomeClass, 4> kAllOutcomes{
    OutcomeClass::Crash, OutcomeClass::SDC, OutcomeClass::Masked, OutcomeClass::Timeout};

/// "crash", "sdc", "masked", "timeout".
std::string_view to_string(OutcomeClass c);
std::optional<OutcomeClass> outcome_from_string(std::string_view s);

enum class Tier : std::uint8_t { Low, Medium, High };
inline constexpr std::array<Tier, 3> kAllTiers{Tier::Low, Tier::Medium, Tier::High};

/// "low", "medium", "high".
std::string_view to_string(Tier t);
std::optional<Tier> tier_from_string(std::string_view s);

struct TierSpec {
  double margin;
  double confidence;
};
/// Low (5%, 95%), Medium (5%, 99%), High (1%, 99%).
TierSpec tier_spec(Tier t);

/// Two-sided z for 0.95 and 0.99; throws std::invalid_argument otherwise.
double z_value(double confidence);

/// round(z^2 * 0.25 / e^2), the worst case p = 0.5. `z` overrides the
/// table lookup for other confidence levels.
std::uint64_t sample_size(double margin, double confidence,
                          std::optional<double> z = std::nullopt);
std::uint64_t sample_size(Tier t);

class CampaignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MachineConfig {
  MemoryConfig memory;
  double timeout_factor = 10.0;
  std::uint64_t max_golden_cycles = 50'000'000;
  std::uint64_t sweep_period = 0;

  friend bool operator==(const MachineConfig&, const MachineConfig&) = default;
};

struct GoldenReference {
  std::string output;
  int exit_code = 0;
  HpcVector hpc;
  std::uint64_t cycles = 0;

  /// Cycle budget for faulty runs: ceil(timeout_factor * cycles), at least 1.
  std::uint64_t budget(double timeout_factor) const;

  friend bool operator==(const GoldenReference&, const GoldenReference&) = default;
};

/// Fault-free execution. Throws CampaignError if the program traps or does
/// not exit within `max_golden_cycles`.
GoldenReference golden_run(const ProgramImage& program, const MachineConfig& machine);

OutcomeClass classify(Termination termination, const MachineState& final_state,
                      const GoldenReference& golden);

struct DeltaResult {
  double value = 0.0;  // percent
  std::vector<std::size_t> divergent_from_zero;  // golden == 0, faulty > 0
};

/// Mean absolute percentage deviation over the counters with a nonzero
/// golden value. Throws std::domain_error when every golden counter is zero
/// or the lengths differ.
DeltaResult delta_mean(std::span<const std::uint64_t> golden,
                       std::span<const std::uint64_t> faulty);
DeltaResult delta_mean(const HpcVector& golden, const HpcVector& faulty);

struct EngineSetup {
  EngineKind kind = EngineKind::Reg;
  FaultConfig config;
  friend bool operator==(const EngineSetup&, const EngineSetup&) = default;
};

struct RunReport {
  OutcomeClass outcome = OutcomeClass::Masked;
  Termination termination = Termination::Exited;
  MachineStatus status;
  std::string output;
  HpcVector hpc;
  std::uint64_t cycles = 0;
  std::uint64_t seed = 0;
  DeltaResult delta;
  std::vector<FaultRecord> faults;
};

/// Stream seed of the `slot`-th engine of a run.
std::uint64_t engine_stream_seed(std::uint64_t run_seed, std::size_t slot);

/// One faulty run of `program` with the given engines, each on its own
/// stream derived from `run_seed`.
RunReport run_faulty(const ProgramImage& program, const MachineConfig& machine,
                     const GoldenReference& golden, std::span<const EngineSetup> engines,
                     std::uint64_t run_seed);

struct Benchmark {
  std::string name;
  ProgramImage image;
};

struct CampaignConfig {
  MachineConfig machine;
  std::vector<Benchmark> benchmarks;
  std::vector<EngineSetup> engines;
  std::vector<Tier> tiers{Tier::Low};
  std::array<std::optional<std::uint64_t>, 3> runs_override{};  // indexed by Tier
  std::uint64_t seed = 0;
  unsigned parallelism = 1;
  /// All engines fire together in one cell instead of one cell per engine.
  bool multi_engine = false;

  std::uint64_t runs_for(Tier t) const;
  /// Throws ConfigError on an empty or inconsistent configuration.
  void validate() const;
};

/// One faulty run as stored in the report.
struct RunRecord {
  std::string benchmark;
  std::string engine;
  Tier tier = Tier::Low;
  std::uint64_t run_index = 0;
  std::uint64_t seed = 0;
  OutcomeClass outcome = OutcomeClass::Masked;
  double delta = 0.0;
  std::uint64_t fault_count = 0;
  std::uint64_t cycles = 0;
  std::optional<int> exit_code;
  std::vector<std::size_t> divergent_from_zero;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Aggregate of one (benchmark, engine, tier) cell.
struct CellSummary {
  std::string benchmark;
  std::string engine;
  Tier tier = Tier::Low;
  std::uint64_t n_runs = 0;
  std::array<std::uint64_t, 4> counts{};  // by OutcomeClass
  std::optional<double> delta_sdc;        // nullopt: no SDC runs
  std::optional<double> delta_masked;
  std::uint64_t divergent_runs = 0;

  double percent(OutcomeClass c) const;
  friend bool operator==(const CellSummary&, const CellSummary&) = default;
};

struct GoldenSummary {
  std::string benchmark;
  GoldenReference golden;
  friend bool operator==(const GoldenSummary&, const GoldenSummary&) = default;
};

struct CampaignReport {
  CampaignConfig config;
  std::vector<GoldenSummary> goldens;
  std::vector<CellSummary> cells;
  std::vector<RunRecord> runs;
};

/// Name of a cell's engine column: the engine name, or the names joined
/// with '+' for a multi-engine cell.
std::string cell_engine_name(const CampaignConfig& cfg, std::size_t engine_cell);

/// Seed of run `run_index` in a cell; depends on names, not config order.
std::uint64_t run_seed(std::uint64_t master, std::string_view benchmark, std::string_view engine,
                       Tier tier, std::uint64_t run_index);

/// Groups records by (benchmark, engine, tier) in first-appearance order.
std::vector<CellSummary> aggregate(std::span<const RunRecord> records);

using ProgressFn = std::function<void(std::uint64_t done, std::uint64_t total)>;

/// Runs every cell. The result depends only on the config (not on
/// parallelism or scheduling).
CampaignReport run_campaign(const CampaignConfig& cfg, const ProgressFn& progress = {});

}  // namespace rvfault
