// rvfault: assemble, run, inject and analyze fault-injection campaigns.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>

#include "rvfault/assembler.hpp"
#include "rvfault/campaign.hpp"
#include "rvfault/config.hpp"
#include "rvfault/report_io.hpp"
#include "rvfault/run.hpp"

namespace fs = std::filesystem;
using namespace rvfault;

namespace {

constexpr int kExitUsage = 2;
constexpr const char* kOutputEnv = "RVFAULT_OUTPUT_DIR";

// Usage, file and configuration problems.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ProgramImage load_program(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError(path.string() + ": no such file");
  try {
    if (path.extension() == ".json") return image_from_json(read_file(path));
    return assemble_file(path);
  } catch (const ImageError& e) {
    throw UsageError(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
}

ConfigFile load_config_or_default(const std::string& path) {
  if (path.empty()) return ConfigFile{};
  if (!fs::exists(path)) throw UsageError(path + ": no such file");
  try {
    return load_config(path);
  } catch (const ConfigError& e) {
    throw UsageError(path + ": schema violation at " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  out << text;
  out.close();
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

int exit_code_for(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::Masked: return 0;
    case OutcomeClass::SDC: return 10;
    case OutcomeClass::Crash: return 20;
    case OutcomeClass::Timeout: return 30;
  }
  return 1;
}

// --- assemble ---------------------------------------------------------------

int cmd_assemble(const std::string& source, const std::string& out) {
  const auto image = load_program(source);
  const auto json = image_to_json(image);
  if (out.empty() || out == "-")
    std::cout << json;
  else
    write_file(out, json);
  return 0;
}

// --- run --------------------------------------------------------------------

int cmd_run(const std::string& program, const std::string& config, std::uint64_t budget) {
  const auto cfg = load_config_or_default(config);
  const auto image = load_program(program);
  MemorySystem mem(cfg.campaign.machine.memory);
  MachineState state;
  load(image, mem, state);
  InjectorSet none;
  const auto trace = run(state, mem, none, budget ? budget : cfg.campaign.machine.max_golden_cycles);
  std::cout << trace.state.output << std::flush;
  switch (trace.termination) {
    case Termination::Exited: {
      const int code = std::get<Exited>(trace.state.status).code;
      std::cerr << "exited with code " << code << " after " << trace.state.cycle << " cycles\n";
      return code;
    }
    case Termination::Trapped: {
      const auto& t = std::get<TrapCause>(trace.state.status);
      std::fprintf(stderr, "trapped: %s at pc 0x%08x (detail 0x%08x) after %llu cycles\n",
                   std::string(to_string(t.kind)).c_str(), t.pc_at_trap, t.detail,
                   static_cast<unsigned long long>(trace.state.cycle));
      return exit_code_for(OutcomeClass::Crash);
    }
    case Termination::TimedOut:
      std::cerr << "cycle budget exhausted at cycle " << trace.state.cycle << "\n";
      return exit_code_for(OutcomeClass::Timeout);
  }
  return 1;
}

// --- golden -----------------------------------------------------------------

int cmd_golden(const std::string& program, const std::string& config) {
  const auto cfg = load_config_or_default(config);
  const auto image = load_program(program);
  try {
    const auto g = golden_run(image, cfg.campaign.machine);
    std::cout << golden_to_json(fs::path(program).stem().string(), g);
  } catch (const CampaignError& e) {
    std::cerr << "rvfault: " << program << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// --- inject -----------------------------------------------------------------

int cmd_inject(const std::string& program, const std::string& config, const std::string& engine,
               std::uint64_t seed) {
  const auto kind = engine_from_string(engine);
  if (!kind) throw UsageError("unknown engine '" + engine + "' (reg, l1i, l1d, l2, mem)");
  const auto cfg = load_config_or_default(config);
  const EngineSetup* setup = nullptr;
  for (const auto& e : cfg.campaign.engines)
    if (e.kind == *kind) setup = &e;
  if (!setup) throw UsageError(config + ": no enabled [engines." + engine + "] block");
  const auto image = load_program(program);
  GoldenReference golden;
  try {
    golden = golden_run(image, cfg.campaign.machine);
  } catch (const CampaignError& e) {
    std::cerr << "rvfault: " << program << ": " << e.what() << "\n";
    return 1;
  }
  const auto r = run_faulty(image, cfg.campaign.machine, golden, std::span(setup, 1), seed);
  std::cout << run_report_to_json(fs::path(program).stem().string(), r, golden);
  return exit_code_for(r.outcome);
}

// --- campaign ---------------------------------------------------------------

const char* const kArtifacts[] = {"runs.csv", "outcome_distribution.csv", "delta_tables.csv",
                                  "report.json"};

std::string timestamp_dir_name(const fs::path& out) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "previous-%Y%m%dT%H%M%SZ", &tm);
  std::string name = buf;
  for (int i = 1; fs::exists(out / name); ++i) name = std::string(buf) + "-" + std::to_string(i);
  return name;
}

// Moves the artifacts of an earlier campaign into a timestamped subdirectory.
void archive_previous(const fs::path& out) {
  bool any = false;
  for (const auto* a : kArtifacts) any = any || fs::exists(out / a);
  if (!any) return;
  const auto dest = out / timestamp_dir_name(out);
  fs::create_directory(dest);
  for (const auto* a : kArtifacts)
    if (fs::exists(out / a)) fs::rename(out / a, dest / a);
  std::cerr << "previous report moved to " << dest.string() << "\n";
}

int cmd_campaign(const std::string& config, std::string out_flag, unsigned parallelism,
                 bool quiet) {
  auto cfg = load_config_or_default(config);
  try {
    load_benchmarks(cfg);
    if (parallelism) cfg.campaign.parallelism = parallelism;
    cfg.campaign.validate();
  } catch (const ConfigError& e) {
    throw UsageError(config + ": schema violation at " + e.what());
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }

  fs::path out;
  if (!out_flag.empty())
    out = out_flag;
  else if (const char* env = std::getenv(kOutputEnv); env && *env)
    out = env;
  else if (cfg.output_directory)
    out = *cfg.output_directory;
  else
    out = "rvfault-out";

  fs::create_directories(out);
  for (const auto& entry : fs::directory_iterator(out))
    if (entry.is_directory() && entry.path().filename().string().rfind(".staging-", 0) == 0)
      fs::remove_all(entry.path());
  const auto staging = out / (".staging-" + std::to_string(::getpid()));
  fs::create_directory(staging);

  try {
    std::uint64_t last_pct = 101;
    ProgressFn progress;
    if (!quiet) {
      progress = [&](std::uint64_t done, std::uint64_t total) {
        const auto pct = done * 100 / total;
        if (pct != last_pct) {
          last_pct = pct;
          std::fprintf(stderr, "\r%llu/%llu runs (%llu%%)", static_cast<unsigned long long>(done),
                       static_cast<unsigned long long>(total), static_cast<unsigned long long>(pct));
          if (done == total) std::fputc('\n', stderr);
        }
      };
    }
    const auto report = run_campaign(cfg.campaign, progress);
    if (cfg.write_csv) {
      write_file(staging / "runs.csv", runs_to_csv(report.runs));
      write_file(staging / "outcome_distribution.csv", outcome_distribution_csv(report.cells));
      write_file(staging / "delta_tables.csv", delta_tables_csv(report.cells));
    }
    if (cfg.write_json) write_file(staging / "report.json", report_to_json(report));

    archive_previous(out);
    for (const auto* a : kArtifacts)  // report.json last: its presence marks completion
      if (fs::exists(staging / a)) fs::rename(staging / a, out / a);
    fs::remove_all(staging);
    if (!quiet) std::cout << render_tables(report.cells);
    std::cerr << "report written to " << out.string() << "\n";
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  return 0;
}

// --- analyze ----------------------------------------------------------------

int cmd_analyze(const std::string& report_path) {
  fs::path report = report_path;
  if (fs::is_directory(report)) report /= "report.json";
  if (!fs::exists(report)) throw UsageError(report.string() + ": no such file");
  const auto runs = report.parent_path() / "runs.csv";
  if (!fs::exists(runs)) throw UsageError(runs.string() + ": no such file");
  AuditResult audit;
  try {
    audit = audit_report(read_file(report), read_file(runs));
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  std::cout << render_tables(audit.recomputed) << "\n";
  if (audit.clean()) {
    std::cout << "audit clean\n";
    return 0;
  }
  std::cout << "audit failed: " << audit.divergences.size() << " divergent cell field(s)\n";
  for (const auto& d : audit.divergences) std::cout << "  " << d << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Register, cache and memory fault injection on an RV32IM emulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rvfault 1.0.0");

  std::string program, config, out, engine, report;
  std::uint64_t seed = 0, budget = 0;
  unsigned parallelism = 0;
  bool quiet = false;

  auto* assemble_cmd = app.add_subcommand("assemble", "Assemble a source file to a JSON image");
  assemble_cmd->add_option("source", program, "Assembly source")->required();
  assemble_cmd->add_option("-o,--output", out, "Output file (default: stdout)");

  auto* run_cmd = app.add_subcommand("run", "Run a program fault-free and print its output");
  run_cmd->add_option("program", program, "Assembly source or JSON image")->required();
  run_cmd->add_option("-c,--config", config, "Configuration file (machine section used)");
  run_cmd->add_option("--budget", budget, "Cycle budget (default: machine.max_golden_cycles)");

  auto* golden_cmd = app.add_subcommand("golden", "Print the golden reference as JSON");
  golden_cmd->add_option("program", program, "Assembly source or JSON image")->required();
  golden_cmd->add_option("-c,--config", config, "Configuration file");

  auto* inject_cmd = app.add_subcommand(
      "inject", "One faulty run; exit code 0 Masked, 10 SDC, 20 Crash, 30 Timeout");
  inject_cmd->add_option("program", program, "Assembly source or JSON image")->required();
  inject_cmd->add_option("-c,--config", config, "Configuration file")->required();
  inject_cmd->add_option("--engine", engine, "reg, l1i, l1d, l2 or mem")->required();
  inject_cmd->add_option("--seed", seed, "Run seed (as listed in runs.csv)");

  auto* campaign_cmd = app.add_subcommand("campaign", "Run a full campaign");
  campaign_cmd->add_option("config", config, "Configuration file")->required();
  campaign_cmd->add_option("--out", out,
                           std::string("Output directory (overrides ") + kOutputEnv +
                               " and [output] directory)");
  campaign_cmd->add_option("-j,--parallelism", parallelism, "Worker threads (overrides config)")
      ->check(CLI::Range(1u, 1024u));
  campaign_cmd->add_flag("-q,--quiet", quiet, "No progress or tables");

  auto* analyze_cmd =
      app.add_subcommand("analyze", "Audit report.json against runs.csv and print tables");
  analyze_cmd->add_option("report", report, "report.json or its directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*assemble_cmd) return cmd_assemble(program, out);
    if (*run_cmd) return cmd_run(program, config, budget);
    if (*golden_cmd) return cmd_golden(program, config);
    if (*inject_cmd) return cmd_inject(program, config, engine, seed);
    if (*campaign_cmd) return cmd_campaign(config, out, parallelism, quiet);
    if (*analyze_cmd) return cmd_analyze(report);
  } catch (const UsageError& e) {
    std::cerr << "rvfault: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CampaignError& e) {
    std::cerr << "rvfault: campaign aborted: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "rvfault: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
