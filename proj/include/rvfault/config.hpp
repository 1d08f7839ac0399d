#pragma once

// Campaign configuration files (TOML).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rvfault/campaign.hpp"

namespace rvfault {

/// A parsed configuration file. Benchmark sources are referenced, not yet
/// assembled; paths are resolved against the file's directory.
struct ConfigFile {
  CampaignConfig campaign;  // benchmarks left empty
  std::vector<std::filesystem::path> benchmark_paths;
  std::optional<std::string> output_directory;
  bool write_json = true;
  bool write_csv = true;
};

/// Parses and schema-checks a configuration document. Unknown keys, wrong
/// types and out-of-range values throw ConfigError whose key is the dotted
/// path of the offending entry (e.g. "engines.mem.probability").
ConfigFile parse_config(std::string_view text, const std::filesystem::path& base_dir = {});

/// Reads `path` and parses it. Missing files throw std::runtime_error
/// ("<path>: no such file").
ConfigFile load_config(const std::filesystem::path& path);

/// Benchmark name derived from a source path: its stem. Throws ConfigError
/// unless the stem is non-empty and uses only [A-Za-z0-9_.-].
std::string benchmark_name(const std::filesystem::path& path);

/// Reads and assembles one source file. Assembler errors are rethrown as
/// std::runtime_error with "file:line: message".
ProgramImage assemble_file(const std::filesystem::path& path);

/// Assembles every benchmark listed in `cfg` into cfg.campaign.benchmarks.
void load_benchmarks(ConfigFile& cfg);

/// Reads a whole file; throws std::runtime_error("<path>: no such file").
std::string read_file(const std::filesystem::path& path);

}  // namespace rvfault
