#include "rvfault/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace rvfault {

namespace {

std::string line_suffix(const toml::node& n) {
  const auto& src = n.source();
  if (src.begin.line == 0) return {};
  return " (line " + std::to_string(src.begin.line) + ")";
}

// Typed, key-path-aware access to one TOML table. finish() rejects every
// key that was never asked for.
class Section {
 public:
  Section(const toml::table& t, std::string path) : t_(t), path_(std::move(path)) {}

  std::string key(std::string_view k) const {
    return path_.empty() ? std::string(k) : path_ + "." + std::string(k);
  }

  const toml::node* find(std::string_view k) {
    seen_.insert(std::string(k));
    return t_.get(k);
  }

  bool has(std::string_view k) const { return t_.contains(k); }

  std::optional<std::uint64_t> uint(std::string_view k, std::uint64_t lo = 0,
                                    std::uint64_t hi = std::numeric_limits<std::int64_t>::max()) {
    const auto* n = find(k);
    if (!n) return std::nullopt;
    const auto v = n->value_exact<std::int64_t>();
    if (!v) throw ConfigError(key(k), "expected an integer" + line_suffix(*n));
    if (*v < 0 || static_cast<std::uint64_t>(*v) < lo || static_cast<std::uint64_t>(*v) > hi)
      throw ConfigError(key(k), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                    "]" + line_suffix(*n));
    return static_cast<std::uint64_t>(*v);
  }

  std::optional<double> real(std::string_view k) {
    const auto* n = find(k);
    if (!n) return std::nullopt;
    if (auto i = n->value_exact<std::int64_t>()) return static_cast<double>(*i);
    if (auto d = n->value_exact<double>()) return *d;
    throw ConfigError(key(k), "expected a number" + line_suffix(*n));
  }

  std::optional<bool> boolean(std::string_view k) {
    const auto* n = find(k);
    if (!n) return std::nullopt;
    if (auto b = n->value_exact<bool>()) return *b;
    throw ConfigError(key(k), "expected true or false" + line_suffix(*n));
  }

  std::optional<std::string> string(std::string_view k) {
    const auto* n = find(k);
    if (!n) return std::nullopt;
    if (auto s = n->value_exact<std::string>()) return *s;
    throw ConfigError(key(k), "expected a string" + line_suffix(*n));
  }

  std::optional<std::vector<std::string>> strings(std::string_view k) {
    const auto* n = find(k);
    if (!n) return std::nullopt;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError(key(k), "expected an array of strings" + line_suffix(*n));
    std::vector<std::string> out;
    for (const auto& e : *arr) {
      auto s = e.value_exact<std::string>();
      if (!s) throw ConfigError(key(k), "expected an array of strings" + line_suffix(e));
      out.push_back(*s);
    }
    return out;
  }

  std::optional<Section> table(std::string_view k) {
    const auto* n = find(k);
    if (!n) return std::nullopt;
    const auto* t = n->as_table();
    if (!t) throw ConfigError(key(k), "expected a table" + line_suffix(*n));
    return Section(*t, key(k));
  }

  const toml::node* raw(std::string_view k) { return find(k); }
  const std::string& path() const { return path_; }

  const toml::table& node() const { return t_; }

  void finish() const {
    for (const auto& [k, v] : t_)
      if (!seen_.count(std::string(k.str())))
        throw ConfigError(key(k.str()), "unknown key" + line_suffix(v));
  }

 private:
  const toml::table& t_;
  std::string path_;
  std::set<std::string> seen_;
};

std::uint32_t u32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }

void parse_geometry(Section s, CacheGeometry& g) {
  if (auto v = s.uint("size_bytes", 1, 0xFFFFFFFFu)) g.size_bytes = u32(*v);
  if (auto v = s.uint("block_bytes", 1, 0xFFFFFFFFu)) g.block_bytes = u32(*v);
  if (auto v = s.uint("associativity", 1, 0xFFFFFFFFu)) g.associativity = u32(*v);
  s.finish();
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.path(), e.what());
  }
}

MachineConfig parse_machine(Section s) {
  MachineConfig m;
  if (auto v = s.uint("ram_size", 1, 0x80000000u)) m.memory.ram_size = u32(*v);
  if (auto v = s.real("timeout_factor")) {
    if (!(*v > 0.0)) throw ConfigError(s.key("timeout_factor"), "must be positive");
    m.timeout_factor = *v;
  }
  if (auto v = s.uint("max_golden_cycles", 1)) m.max_golden_cycles = *v;
  if (auto v = s.uint("sweep_period")) m.sweep_period = *v;
  if (auto t = s.table("l1i")) parse_geometry(std::move(*t), m.memory.l1i);
  if (auto t = s.table("l1d")) parse_geometry(std::move(*t), m.memory.l1d);
  if (auto t = s.table("l2")) parse_geometry(std::move(*t), m.memory.l2);
  if (auto t = s.table("latencies")) {
    if (auto v = t->uint("l1_hit", 0, 1u << 20)) m.memory.latencies.l1_hit = u32(*v);
    if (auto v = t->uint("l2_hit", 0, 1u << 20)) m.memory.latencies.l2_hit = u32(*v);
    if (auto v = t->uint("memory", 0, 1u << 20)) m.memory.latencies.memory = u32(*v);
    t->finish();
  }
  s.finish();
  try {
    MemorySystem probe(m.memory);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.path(), e.what());
  }
  return m;
}

FaultType parse_fault_type(const std::string& s, const std::string& key) {
  if (s == "bitflip") return FaultType::BitFlip;
  if (s == "stuck_at_0") return FaultType::StuckAt0;
  if (s == "stuck_at_1") return FaultType::StuckAt1;
  if (s == "random") return FaultType::Random;
  throw ConfigError(key, "expected one of bitflip, stuck_at_0, stuck_at_1, random");
}

EngineSetup parse_engine(EngineKind kind, Section s, const MemoryConfig& mem) {
  EngineSetup e;
  e.kind = kind;
  auto& c = e.config;
  c.target_end = kRamBase + mem.ram_size - 1;
  const bool is_reg = kind == EngineKind::Reg;
  const bool is_cache = kind != EngineKind::Reg && kind != EngineKind::Mem;
  const bool is_mem = kind == EngineKind::Mem;

  auto only = [&](std::string_view k, bool ok) {
    if (!ok && s.has(k))
      throw ConfigError(s.key(k), "not applicable to the " + std::string(to_string(kind)) +
                                      " engine");
  };
  only("target_class", is_reg);
  only("pc_target", is_reg);
  only("target_register", is_reg);
  only("corruption_size", is_cache);
  only("target_start", is_mem);
  only("target_end", is_mem);

  if (auto v = s.real("probability")) {
    if (!(*v >= 0.0 && *v <= 1.0)) throw ConfigError(s.key("probability"), "must be in [0, 1]");
    c.probability = *v;
  }
  if (auto v = s.uint("start")) c.start = *v;
  if (auto v = s.uint("end")) c.end = *v;
  if (auto v = s.string("fault_type")) c.fault_type = parse_fault_type(*v, s.key("fault_type"));
  const unsigned width = fault_width(kind);
  if (auto v = s.uint("mask", 0, width == 32 ? 0xFFFFFFFFu : 0xFFu)) c.mask = u32(*v);
  if (const auto* n = s.raw("faulty_bits")) {
    if (auto str = n->value_exact<std::string>()) {
      if (*str != "random")
        throw ConfigError(s.key("faulty_bits"), "expected an integer or \"random\"");
      c.faulty_bits.reset();
    } else if (auto i = n->value_exact<std::int64_t>()) {
      if (*i < 1 || *i > static_cast<std::int64_t>(width))
        throw ConfigError(s.key("faulty_bits"),
                          "must be in [1, " + std::to_string(width) + "] or \"random\"");
      c.faulty_bits = static_cast<unsigned>(*i);
    } else {
      throw ConfigError(s.key("faulty_bits"), "expected an integer or \"random\"");
    }
  }
  if (auto v = s.string("target_class")) {
    if (*v == "integer") c.target_class = TargetClass::Integer;
    else if (*v == "float") c.target_class = TargetClass::Float;
    else if (*v == "random") c.target_class = TargetClass::Random;
    else throw ConfigError(s.key("target_class"), "expected integer, float or random");
  }
  if (auto v = s.uint("pc_target", 0, 0xFFFFFFFFu)) c.pc_target = u32(*v);
  if (auto v = s.uint("target_register", 0, 31)) c.target_register = static_cast<unsigned>(*v);
  if (auto v = s.uint("corruption_size", 1, 1u << 16)) c.corruption_size = static_cast<unsigned>(*v);
  if (auto v = s.uint("target_start", 0, 0xFFFFFFFFu)) c.target_start = u32(*v);
  if (auto v = s.uint("target_end", 0, 0xFFFFFFFFu)) c.target_end = u32(*v);
  s.finish();

  try {
    c.validate(kind, mem);
  } catch (const ConfigError& err) {
    throw ConfigError(s.key(err.key()), std::string(err.what()).substr(err.key().size() + 2));
  }
  return e;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": no such file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConfigFile parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("<document>", std::string(e.description()) + " (line " +
                                        std::to_string(e.source().begin.line) + ")");
  }

  ConfigFile out;
  Section root(doc, "");
  auto& cc = out.campaign;

  if (auto m = root.table("machine")) cc.machine = parse_machine(std::move(*m));

  if (auto b = root.table("benchmarks")) {
    if (auto paths = b->strings("paths")) {
      for (const auto& p : *paths) {
        std::filesystem::path path(p);
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        benchmark_name(path);
        out.benchmark_paths.push_back(path.lexically_normal());
      }
    }
    b->finish();
  }

  if (auto engines = root.table("engines")) {
    for (const auto& [name, node] : engines->node()) {
      const auto kind = engine_from_string(name.str());
      if (!kind)
        throw ConfigError(engines->key(name.str()),
                          "unknown engine (expected reg, l1i, l1d, l2 or mem)");
      auto block = engines->table(name.str());
      const bool enabled = block->boolean("enabled").value_or(true);
      auto setup = parse_engine(*kind, std::move(*block), cc.machine.memory);
      if (enabled) cc.engines.push_back(std::move(setup));
    }
    engines->finish();
    // Config order is document order; report order is fixed.
    std::stable_sort(cc.engines.begin(), cc.engines.end(),
                     [](const EngineSetup& a, const EngineSetup& b) { return a.kind < b.kind; });
  }

  if (auto c = root.table("campaign")) {
    if (auto tiers = c->strings("tiers")) {
      cc.tiers.clear();
      std::set<Tier> seen;
      for (const auto& t : *tiers) {
        auto tier = tier_from_string(t);
        if (!tier) throw ConfigError(c->key("tiers"), "unknown tier '" + t + "' (low, medium, high)");
        if (!seen.insert(*tier).second) throw ConfigError(c->key("tiers"), "duplicate tier '" + t + "'");
        cc.tiers.push_back(*tier);
      }
      if (cc.tiers.empty()) throw ConfigError(c->key("tiers"), "at least one tier is required");
    }
    if (auto v = c->uint("seed")) cc.seed = *v;
    if (auto v = c->uint("parallelism", 1, 1024)) cc.parallelism = static_cast<unsigned>(*v);
    if (auto v = c->boolean("multi_engine")) cc.multi_engine = *v;
    if (auto runs = c->table("runs")) {
      for (auto t : kAllTiers)
        if (auto v = runs->uint(to_string(t), 1)) cc.runs_override[static_cast<std::size_t>(t)] = *v;
      runs->finish();
    }
    c->finish();
  }

  if (auto o = root.table("output")) {
    if (auto d = o->string("directory")) {
      std::filesystem::path p(*d);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      out.output_directory = p.lexically_normal().string();
    }
    if (auto formats = o->strings("formats")) {
      out.write_json = out.write_csv = false;
      for (const auto& f : *formats) {
        if (f == "json") out.write_json = true;
        else if (f == "csv") out.write_csv = true;
        else throw ConfigError(o->key("formats"), "unknown format '" + f + "' (json, csv)");
      }
    }
    o->finish();
  }

  root.finish();
  return out;
}

ConfigFile load_config(const std::filesystem::path& path) {
  const auto text = read_file(path);
  return parse_config(text, path.parent_path());
}

std::string benchmark_name(const std::filesystem::path& path) {
  const auto stem = path.stem().string();
  if (stem.empty()) throw ConfigError("benchmarks.paths", "empty benchmark name in '" + path.string() + "'");
  for (char ch : stem)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
      throw ConfigError("benchmarks.paths",
                        "benchmark name '" + stem + "' may only use letters, digits, '_', '-', '.'");
  return stem;
}

ProgramImage assemble_file(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return assemble(text);
  } catch (const AsmError& e) {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    throw std::runtime_error(path.string() + ":" + std::to_string(e.line()) + ": " +
                             (colon == std::string::npos ? what : what.substr(colon + 2)));
  }
}

void load_benchmarks(ConfigFile& cfg) {
  cfg.campaign.benchmarks.clear();
  for (const auto& p : cfg.benchmark_paths)
    cfg.campaign.benchmarks.push_back({benchmark_name(p), assemble_file(p)});
}

}  // namespace rvfault
