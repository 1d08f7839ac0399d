#include "rvfault/report_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

namespace rvfault {

using ojson = nlohmann::ordered_json;

namespace {

std::string dump(const ojson& j) {
  return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

std::string base64_of(std::string_view bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

ojson hpc_json(const HpcVector& h) {
  ojson j = ojson::object();
  for (std::size_t i = 0; i < HpcVector::kSize; ++i) j[std::string(HpcVector::name(i))] = h[i];
  return j;
}

ojson counter_names(const std::vector<std::size_t>& idx) {
  ojson j = ojson::array();
  for (auto i : idx) j.push_back(std::string(HpcVector::name(i)));
  return j;
}

ojson location_json(const Location& loc) {
  ojson j;
  if (const auto* r = std::get_if<RegLocation>(&loc)) {
    j["kind"] = "register";
    j["class"] = std::string(to_string(r->cls));
    j["index"] = r->index;
  } else if (const auto* c = std::get_if<CacheLocation>(&loc)) {
    j["kind"] = "cache";
    j["level"] = std::string(to_string(c->level));
    j["set"] = c->set;
    j["way"] = c->way;
    j["offset"] = c->offset;
  } else {
    j["kind"] = "ram";
    j["address"] = hex32(std::get<RamLocation>(loc).addr);
  }
  return j;
}

ojson fault_json(const FaultRecord& f) {
  ojson j;
  j["cycle"] = f.cycle;
  j["engine"] = std::string(to_string(f.engine));
  j["location"] = location_json(f.location);
  j["address"] = f.address ? ojson(hex32(*f.address)) : ojson(nullptr);
  j["mask"] = hex32(f.mask);
  j["type"] = std::string(to_string(f.type));
  j["value_before"] = hex32(f.value_before);
  j["value_after"] = hex32(f.value_after);
  j["skipped"] = f.skipped;
  if (f.skipped) j["skip_reason"] = f.skip_reason;
  return j;
}

ojson status_json(const MachineStatus& s) {
  ojson j;
  if (const auto* e = std::get_if<Exited>(&s)) {
    j["state"] = "exited";
    j["exit_code"] = e->code;
  } else if (const auto* t = std::get_if<TrapCause>(&s)) {
    j["state"] = "trapped";
    j["trap"] = std::string(to_string(t->kind));
    j["pc"] = hex32(t->pc_at_trap);
    j["detail"] = hex32(t->detail);
  } else {
    j["state"] = "running";
  }
  return j;
}

ojson fault_config_json(const EngineSetup& e) {
  const auto& c = e.config;
  ojson j;
  j["probability"] = c.probability;
  j["start"] = c.start;
  j["end"] = c.end == kNever ? ojson(nullptr) : ojson(c.end);
  j["fault_type"] = std::string(to_string(c.fault_type));
  j["mask"] = c.mask;
  j["faulty_bits"] = c.faulty_bits ? ojson(*c.faulty_bits) : ojson("random");
  switch (e.kind) {
    case EngineKind::Reg:
      j["target_class"] = c.target_class == TargetClass::Integer ? "integer"
                          : c.target_class == TargetClass::Float ? "float"
                                                                 : "random";
      j["pc_target"] = c.pc_target;
      j["target_register"] = c.target_register ? ojson(*c.target_register) : ojson(nullptr);
      break;
    case EngineKind::Mem:
      j["target_start"] = c.target_start;
      j["target_end"] = c.target_end;
      break;
    default:
      j["corruption_size"] = c.corruption_size;
      break;
  }
  return j;
}

ojson geometry_json(const CacheGeometry& g) {
  return ojson{{"size_bytes", g.size_bytes},
               {"block_bytes", g.block_bytes},
               {"associativity", g.associativity}};
}

ojson machine_json(const MachineConfig& m) {
  ojson j;
  j["ram_size"] = m.memory.ram_size;
  j["timeout_factor"] = m.timeout_factor;
  j["max_golden_cycles"] = m.max_golden_cycles;
  j["sweep_period"] = m.sweep_period;
  j["l1i"] = geometry_json(m.memory.l1i);
  j["l1d"] = geometry_json(m.memory.l1d);
  j["l2"] = geometry_json(m.memory.l2);
  j["latencies"] = ojson{{"l1_hit", m.memory.latencies.l1_hit},
                         {"l2_hit", m.memory.latencies.l2_hit},
                         {"memory", m.memory.latencies.memory}};
  return j;
}

std::string image_digest(const ProgramImage& img) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 0x100000001B3ull;
  };
  for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(img.entry() >> (8 * i)));
  for (const auto& s : img.segments()) {
    for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(s.base >> (8 * i)));
    for (auto b : s.bytes) mix(b);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::string cell_label(const CellSummary& c) {
  return c.benchmark + "/" + c.engine + "/" + std::string(to_string(c.tier));
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  for (;;) {
    const auto pos = s.find(sep, begin);
    out.push_back(s.substr(begin, pos == std::string_view::npos ? std::string_view::npos : pos - begin));
    if (pos == std::string_view::npos) return out;
    begin = pos + 1;
  }
}

constexpr std::string_view kRunsHeader =
    "benchmark,engine,tier,run_index,seed,outcome,delta,fault_count,cycles,exit_code,"
    "divergent_counters";

}  // namespace

std::string golden_to_json(std::string_view benchmark, const GoldenReference& golden) {
  ojson j;
  j["format"] = "rvfault-golden";
  j["version"] = kReportSchemaVersion;
  j["benchmark"] = std::string(benchmark);
  j["exit_code"] = golden.exit_code;
  j["output"] = golden.output;
  j["output_base64"] = base64_of(golden.output);
  j["cycles"] = golden.cycles;
  j["hpc"] = hpc_json(golden.hpc);
  return dump(j);
}

std::string run_report_to_json(std::string_view benchmark, const RunReport& run,
                               const GoldenReference& golden) {
  ojson j;
  j["format"] = "rvfault-run";
  j["version"] = kReportSchemaVersion;
  j["benchmark"] = std::string(benchmark);
  j["seed"] = run.seed;
  j["outcome"] = std::string(to_string(run.outcome));
  j["status"] = status_json(run.status);
  j["cycles"] = run.cycles;
  j["output"] = run.output;
  j["output_base64"] = base64_of(run.output);
  j["golden_output"] = golden.output;
  j["delta"] = run.delta.value;
  j["divergent_from_zero"] = counter_names(run.delta.divergent_from_zero);
  j["hpc"] = hpc_json(run.hpc);
  j["golden_hpc"] = hpc_json(golden.hpc);
  auto& faults = j["faults"] = ojson::array();
  for (const auto& f : run.faults) faults.push_back(fault_json(f));
  return dump(j);
}

std::string report_to_json(const CampaignReport& report) {
  const auto& cfg = report.config;
  ojson j;
  j["format"] = "rvfault-campaign-report";
  j["version"] = kReportSchemaVersion;
  j["seed"] = cfg.seed;

  ojson c;
  c["machine"] = machine_json(cfg.machine);
  auto& benches = c["benchmarks"] = ojson::array();
  for (const auto& b : cfg.benchmarks)
    benches.push_back({{"name", b.name}, {"entry", hex32(b.image.entry())},
                       {"image_digest", image_digest(b.image)}});
  auto& engines = c["engines"] = ojson::object();
  for (const auto& e : cfg.engines) engines[std::string(to_string(e.kind))] = fault_config_json(e);
  c["multi_engine"] = cfg.multi_engine;
  auto& tiers = c["tiers"] = ojson::array();
  for (auto t : cfg.tiers)
    tiers.push_back({{"tier", std::string(to_string(t))},
                     {"margin", tier_spec(t).margin},
                     {"confidence", tier_spec(t).confidence},
                     {"n_runs", cfg.runs_for(t)}});
  j["config"] = std::move(c);

  auto& goldens = j["goldens"] = ojson::array();
  for (const auto& g : report.goldens) {
    goldens.push_back({{"benchmark", g.benchmark},
                       {"exit_code", g.golden.exit_code},
                       {"output", g.golden.output},
                       {"cycles", g.golden.cycles},
                       {"hpc", hpc_json(g.golden.hpc)}});
  }

  auto& cells = j["cells"] = ojson::array();
  for (const auto& cell : report.cells) {
    ojson counts, pct;
    for (auto o : kAllOutcomes) {
      counts[std::string(to_string(o))] = cell.counts[static_cast<std::size_t>(o)];
      pct[std::string(to_string(o))] = cell.percent(o);
    }
    cells.push_back({{"benchmark", cell.benchmark},
                     {"engine", cell.engine},
                     {"tier", std::string(to_string(cell.tier))},
                     {"n_runs", cell.n_runs},
                     {"counts", counts},
                     {"percent", pct},
                     {"delta_sdc", optional_number(cell.delta_sdc)},
                     {"delta_masked", optional_number(cell.delta_masked)},
                     {"divergent_runs", cell.divergent_runs}});
  }

  auto& runs = j["runs"] = ojson::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"benchmark", r.benchmark},
                    {"engine", r.engine},
                    {"tier", std::string(to_string(r.tier))},
                    {"run_index", r.run_index},
                    {"seed", r.seed},
                    {"outcome", std::string(to_string(r.outcome))},
                    {"delta", r.delta},
                    {"fault_count", r.fault_count},
                    {"cycles", r.cycles},
                    {"exit_code", r.exit_code ? ojson(*r.exit_code) : ojson(nullptr)},
                    {"divergent_from_zero", counter_names(r.divergent_from_zero)}});
  }
  return dump(j);
}

std::string runs_to_csv(std::span<const RunRecord> runs) {
  std::string out(kRunsHeader);
  out += '\n';
  char buf[256];
  for (const auto& r : runs) {
    std::string divergent;
    for (auto i : r.divergent_from_zero) {
      if (!divergent.empty()) divergent += ';';
      divergent += HpcVector::name(i);
    }
    std::snprintf(buf, sizeof buf, ",%llu,%llu,%s,%.17g,%llu,%llu,",
                  static_cast<unsigned long long>(r.run_index),
                  static_cast<unsigned long long>(r.seed),
                  std::string(to_string(r.outcome)).c_str(), r.delta,
                  static_cast<unsigned long long>(r.fault_count),
                  static_cast<unsigned long long>(r.cycles));
    out += r.benchmark + "," + r.engine + "," + std::string(to_string(r.tier)) + buf;
    if (r.exit_code) out += std::to_string(*r.exit_code);
    out += "," + divergent + "\n";
  }
  return out;
}

std::vector<RunRecord> runs_from_csv(std::string_view text) {
  std::vector<RunRecord> out;
  const auto lines = split(text, '\n');
  auto fail = [](std::size_t line, const std::string& msg) -> std::runtime_error {
    return std::runtime_error("runs.csv:" + std::to_string(line) + ": " + msg);
  };
  auto trim_cr = [](std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
  };
  if (lines.empty() || trim_cr(lines[0]) != kRunsHeader) throw fail(1, "unexpected header");
  auto to_u64 = [&](std::string_view s, std::size_t line, const char* field) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty())
      throw fail(line, std::string("bad ") + field);
    return v;
  };
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = trim_cr(lines[i]);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 11) throw fail(i + 1, "expected 11 fields");
    RunRecord r;
    r.benchmark = std::string(f[0]);
    r.engine = std::string(f[1]);
    const auto tier = tier_from_string(f[2]);
    if (!tier) throw fail(i + 1, "bad tier");
    r.tier = *tier;
    r.run_index = to_u64(f[3], i + 1, "run_index");
    r.seed = to_u64(f[4], i + 1, "seed");
    const auto outcome = outcome_from_string(f[5]);
    if (!outcome) throw fail(i + 1, "bad outcome");
    r.outcome = *outcome;
    {
      const std::string d(f[6]);
      char* end = nullptr;
      r.delta = std::strtod(d.c_str(), &end);
      if (d.empty() || *end != '\0' || !std::isfinite(r.delta)) throw fail(i + 1, "bad delta");
    }
    r.fault_count = to_u64(f[7], i + 1, "fault_count");
    r.cycles = to_u64(f[8], i + 1, "cycles");
    if (!f[9].empty()) {
      int code = 0;
      auto [p, ec] = std::from_chars(f[9].data(), f[9].data() + f[9].size(), code);
      if (ec != std::errc{} || p != f[9].data() + f[9].size()) throw fail(i + 1, "bad exit_code");
      r.exit_code = code;
    }
    if (!f[10].empty()) {
      for (auto name : split(f[10], ';')) {
        std::size_t k = 0;
        while (k < HpcVector::kSize && HpcVector::name(k) != name) ++k;
        if (k == HpcVector::kSize) throw fail(i + 1, "bad counter name");
        r.divergent_from_zero.push_back(k);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string outcome_distribution_csv(std::span<const CellSummary> cells) {
  std::string out =
      "engine,benchmark,tier,n_runs,crash,sdc,masked,timeout,crash_pct,sdc_pct,masked_pct,"
      "timeout_pct\n";
  for (const auto& c : cells) {
    out += c.engine + "," + c.benchmark + "," + std::string(to_string(c.tier)) + "," +
           std::to_string(c.n_runs);
    for (auto o : kAllOutcomes) out += "," + std::to_string(c.counts[static_cast<std::size_t>(o)]);
    for (auto o : kAllOutcomes) out += "," + fmt("%.4f", c.percent(o));
    out += "\n";
  }
  return out;
}

std::string delta_tables_csv(std::span<const CellSummary> cells) {
  std::string out = "tier,benchmark,engine,n_sdc,delta_sdc,n_masked,delta_masked\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt("%.6f", *v) : std::string("-"); };
  for (auto t : kAllTiers) {
    for (const auto& c : cells) {
      if (c.tier != t) continue;
      out += std::string(to_string(t)) + "," + c.benchmark + "," + c.engine + "," +
             std::to_string(c.counts[static_cast<std::size_t>(OutcomeClass::SDC)]) + "," +
             cell(c.delta_sdc) + "," +
             std::to_string(c.counts[static_cast<std::size_t>(OutcomeClass::Masked)]) + "," +
             cell(c.delta_masked) + "\n";
    }
  }
  return out;
}

std::vector<CellSummary> cells_from_report_json(std::string_view text) {
  std::vector<CellSummary> out;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format") != "rvfault-campaign-report")
      throw std::runtime_error("report.json: not a campaign report");
    if (j.at("version") != kReportSchemaVersion)
      throw std::runtime_error("report.json: unsupported schema version");
    for (const auto& c : j.at("cells")) {
      CellSummary s;
      s.benchmark = c.at("benchmark").get<std::string>();
      s.engine = c.at("engine").get<std::string>();
      const auto tier = tier_from_string(c.at("tier").get<std::string>());
      if (!tier) throw std::runtime_error("report.json: bad tier");
      s.tier = *tier;
      s.n_runs = c.at("n_runs").get<std::uint64_t>();
      for (auto o : kAllOutcomes)
        s.counts[static_cast<std::size_t>(o)] =
            c.at("counts").at(std::string(to_string(o))).get<std::uint64_t>();
      if (!c.at("delta_sdc").is_null()) s.delta_sdc = c["delta_sdc"].get<double>();
      if (!c.at("delta_masked").is_null()) s.delta_masked = c["delta_masked"].get<double>();
      s.divergent_runs = c.at("divergent_runs").get<std::uint64_t>();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("report.json: ") + e.what());
  }
  return out;
}

AuditResult audit_report(std::string_view report_json, std::string_view runs_csv) {
  const auto stored = cells_from_report_json(report_json);
  const auto runs = runs_from_csv(runs_csv);
  AuditResult result;
  result.recomputed = aggregate(runs);

  std::map<std::tuple<std::string, std::string, Tier>, const CellSummary*> recomputed;
  for (const auto& c : result.recomputed) recomputed[{c.benchmark, c.engine, c.tier}] = &c;

  auto number = [](const std::optional<double>& v) { return v ? fmt("%.17g", *v) : std::string("-"); };
  auto close = [](const std::optional<double>& a, const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return std::fabs(*a - *b) <= 1e-12 * std::max({1.0, std::fabs(*a), std::fabs(*b)});
  };

  for (const auto& s : stored) {
    const auto label = cell_label(s);
    auto it = recomputed.find({s.benchmark, s.engine, s.tier});
    if (it == recomputed.end()) {
      result.divergences.push_back(label + ": no rows in runs.csv");
      continue;
    }
    const auto& r = *it->second;
    recomputed.erase(it);
    auto diff_u = [&](const char* field, std::uint64_t a, std::uint64_t b) {
      if (a != b)
        result.divergences.push_back(label + " " + field + ": report " + std::to_string(a) +
                                     ", runs.csv " + std::to_string(b));
    };
    diff_u("n_runs", s.n_runs, r.n_runs);
    for (auto o : kAllOutcomes)
      diff_u(std::string(to_string(o)).c_str(), s.counts[static_cast<std::size_t>(o)],
             r.counts[static_cast<std::size_t>(o)]);
    diff_u("divergent_runs", s.divergent_runs, r.divergent_runs);
    if (!close(s.delta_sdc, r.delta_sdc))
      result.divergences.push_back(label + " delta_sdc: report " + number(s.delta_sdc) +
                                   ", runs.csv " + number(r.delta_sdc));
    if (!close(s.delta_masked, r.delta_masked))
      result.divergences.push_back(label + " delta_masked: report " + number(s.delta_masked) +
                                   ", runs.csv " + number(r.delta_masked));
  }
  for (const auto& [key, c] : recomputed)
    result.divergences.push_back(cell_label(*c) + ": present in runs.csv but not in report");
  return result;
}

std::string render_tables(std::span<const CellSummary> cells) {
  std::ostringstream out;
  char buf[256];
  out << "Outcome distribution (%)\n";
  std::snprintf(buf, sizeof buf, "%-10s %-12s %-7s %7s %8s %8s %8s %8s\n", "engine", "benchmark",
                "tier", "runs", "crash", "sdc", "masked", "timeout");
  out << buf;
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%-10s %-12s %-7s %7llu %8.1f %8.1f %8.1f %8.1f\n",
                  c.engine.c_str(), c.benchmark.c_str(), std::string(to_string(c.tier)).c_str(),
                  static_cast<unsigned long long>(c.n_runs), c.percent(OutcomeClass::Crash),
                  c.percent(OutcomeClass::SDC), c.percent(OutcomeClass::Masked),
                  c.percent(OutcomeClass::Timeout));
    out << buf;
  }
  auto cell = [](const std::optional<double>& v) { return v ? fmt("%.2f", *v) : std::string("-"); };
  for (auto t : kAllTiers) {
    bool any = false;
    for (const auto& c : cells) any = any || c.tier == t;
    if (!any) continue;
    out << "\nMean HPC deviation (%), tier " << to_string(t) << "\n";
    std::snprintf(buf, sizeof buf, "%-12s %-10s %10s %10s\n", "benchmark", "engine", "SDC", "Masked");
    out << buf;
    for (const auto& c : cells) {
      if (c.tier != t) continue;
      std::snprintf(buf, sizeof buf, "%-12s %-10s %10s %10s\n", c.benchmark.c_str(),
                    c.engine.c_str(), cell(c.delta_sdc).c_str(), cell(c.delta_masked).c_str());
      out << buf;
    }
  }
  return out.str();
}

}  // namespace rvfault
