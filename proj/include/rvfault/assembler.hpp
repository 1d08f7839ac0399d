#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rvfault/machine.hpp"
#include "rvfault/memsys.hpp"

namespace rvfault {

struct Segment {
  std::uint32_t base = 0;
  std::vector<std::uint8_t> bytes;
  friend bool operator==(const Segment&, const Segment&) = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loadable program: non-overlapping segments and an entry point that
/// lies inside one of them. Checked on construction.
class ProgramImage {
 public:
  ProgramImage(std::uint32_t entry, std::vector<Segment> segments,
               std::map<std::string, std::uint32_t> symbols = {});

  std::uint32_t entry() const { return entry_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::map<std::string, std::uint32_t>& symbols() const { return symbols_; }

  /// Throws ImageError if any segment lies outside [ram_base, ram_base + ram_size).
  void check_fits(std::uint32_t ram_base, std::uint32_t ram_size) const;
  /// Byte at `addr` if some segment covers it.
  std::optional<std::uint8_t> byte_at(std::uint32_t addr) const;

  friend bool operator==(const ProgramImage&, const ProgramImage&) = default;

 private:
  std::uint32_t entry_;
  std::vector<Segment> segments_;
  std::map<std::string, std::uint32_t> symbols_;
};

class AsmError : public std::runtime_error {
 public:
  AsmError(int line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Two-pass assembler for the emulator's ISA subset.
///
/// Syntax: one statement per line, `#` comments, `label:` prefixes.
/// Directives: .org .word .byte .ascii .asciz .space .align.
/// Pseudo-instructions: nop li la mv not neg j ret call beqz bnez bgez bltz
/// bgt ble. Branch/jump operands naming a symbol are absolute targets; a
/// bare number is a PC-relative byte offset. The entry point is `_start`
/// if defined, else the first emitted byte. Code starts at the RAM base
/// unless an .org says otherwise.
ProgramImage assemble(std::string_view source);

/// Writes the image into RAM (bypassing and resetting caches and memory
/// event counters) and resets `state`: pc = entry, sp = top of RAM
/// rounded down to 16 bytes, every other register zero.
void load(const ProgramImage& image, MemorySystem& mem, MachineState& state);

/// JSON descriptor: entry, symbols, segments with base64 payloads.
std::string image_to_json(const ProgramImage& image);
ProgramImage image_from_json(std::string_view text);

}  // namespace rvfault
