#include "rvfault/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <unordered_map>

#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

namespace rvfault {

// ---------------------------------------------------------------------------
// ProgramImage

ProgramImage::ProgramImage(std::uint32_t entry, std::vector<Segment> segments,
                           std::map<std::string, std::uint32_t> symbols)
    : entry_(entry), segments_(std::move(segments)), symbols_(std::move(symbols)) {
  std::erase_if(segments_, [](const Segment& s) { return s.bytes.empty(); });
  std::sort(segments_.begin(), segments_.end(),
            [](const Segment& a, const Segment& b) { return a.base < b.base; });
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto end = std::uint64_t{segments_[i].base} + segments_[i].bytes.size();
    if (end > 0x100000000ull) throw ImageError("segment wraps the address space");
    if (i + 1 < segments_.size() && end > segments_[i + 1].base)
      throw ImageError("overlapping segments at " + std::to_string(segments_[i + 1].base));
  }
  if (!byte_at(entry_)) throw ImageError("entry point outside every segment");
}

void ProgramImage::check_fits(std::uint32_t ram_base, std::uint32_t ram_size) const {
  for (const auto& s : segments_) {
    if (s.base < ram_base || std::uint64_t{s.base} + s.bytes.size() > std::uint64_t{ram_base} + ram_size)
      throw ImageError("segment at " + std::to_string(s.base) + " lies outside RAM");
  }
}

std::optional<std::uint8_t> ProgramImage::byte_at(std::uint32_t addr) const {
  for (const auto& s : segments_)
    if (addr >= s.base && addr - s.base < s.bytes.size()) return s.bytes[addr - s.base];
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Lexing helpers

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }

std::string_view strip_comment(std::string_view line) {
  bool in_str = false, in_chr = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if ((in_str || in_chr) && c == '\\') {
      ++i;
      continue;
    }
    if (!in_chr && c == '"') in_str = !in_str;
    else if (!in_str && c == '\'') in_chr = !in_chr;
    else if (!in_str && !in_chr && c == '#') return line.substr(0, i);
  }
  return line;
}

std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  bool in_str = false;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (in_str && s[i] == '\\') {
      ++i;
      continue;
    }
    if (s[i] == '"') in_str = !in_str;
    if (!in_str && s[i] == ',') {
      out.push_back(trim(s.substr(begin, i - begin)));
      begin = i + 1;
    }
  }
  if (!trim(s.substr(begin)).empty() || !out.empty()) out.push_back(trim(s.substr(begin)));
  return out;
}

const std::unordered_map<std::string_view, unsigned>& int_reg_names() {
  static const std::unordered_map<std::string_view, unsigned> m = [] {
    std::unordered_map<std::string_view, unsigned> r{
        {"zero", 0}, {"ra", 1},  {"sp", 2},   {"gp", 3},   {"tp", 4},  {"t0", 5},  {"t1", 6},
        {"t2", 7},   {"s0", 8},  {"fp", 8},   {"s1", 9},   {"a0", 10}, {"a1", 11}, {"a2", 12},
        {"a3", 13},  {"a4", 14}, {"a5", 15},  {"a6", 16},  {"a7", 17}, {"s2", 18}, {"s3", 19},
        {"s4", 20},  {"s5", 21}, {"s6", 22},  {"s7", 23},  {"s8", 24}, {"s9", 25}, {"s10", 26},
        {"s11", 27}, {"t3", 28}, {"t4", 29},  {"t5", 30},  {"t6", 31}};
    static const char* const kX[] = {"x0",  "x1",  "x2",  "x3",  "x4",  "x5",  "x6",  "x7",
                                     "x8",  "x9",  "x10", "x11", "x12", "x13", "x14", "x15",
                                     "x16", "x17", "x18", "x19", "x20", "x21", "x22", "x23",
                                     "x24", "x25", "x26", "x27", "x28", "x29", "x30", "x31"};
    for (unsigned i = 0; i < 32; ++i) r.emplace(kX[i], i);
    return r;
  }();
  return m;
}

const std::unordered_map<std::string_view, unsigned>& fp_reg_names() {
  static const std::unordered_map<std::string_view, unsigned> m = [] {
    std::unordered_map<std::string_view, unsigned> r;
    static const char* const kF[] = {"f0",  "f1",  "f2",  "f3",  "f4",  "f5",  "f6",  "f7",
                                     "f8",  "f9",  "f10", "f11", "f12", "f13", "f14", "f15",
                                     "f16", "f17", "f18", "f19", "f20", "f21", "f22", "f23",
                                     "f24", "f25", "f26", "f27", "f28", "f29", "f30", "f31"};
    static const char* const kAbi[] = {"ft0", "ft1", "ft2",  "ft3",  "ft4", "ft5", "ft6",  "ft7",
                                       "fs0", "fs1", "fa0",  "fa1",  "fa2", "fa3", "fa4",  "fa5",
                                       "fa6", "fa7", "fs2",  "fs3",  "fs4", "fs5", "fs6",  "fs7",
                                       "fs8", "fs9", "fs10", "fs11", "ft8", "ft9", "ft10", "ft11"};
    for (unsigned i = 0; i < 32; ++i) {
      r.emplace(kF[i], i);
      r.emplace(kAbi[i], i);
    }
    return r;
  }();
  return m;
}

bool fits_signed(std::int64_t v, int bits) {
  return v >= -(std::int64_t{1} << (bits - 1)) && v < (std::int64_t{1} << (bits - 1));
}

// ---------------------------------------------------------------------------
// Assembler

struct Value {
  std::int64_t value = 0;
  bool symbolic = false;  // depends on at least one symbol
};

struct Statement {
  int line = 0;
  std::uint32_t addr = 0;
  std::string mnemonic;
  std::vector<std::string> operands;
  std::uint32_t size = 0;
};

class Assembler {
 public:
  explicit Assembler(std::string_view source) : source_(source) {}

  ProgramImage run() {
    pass1();
    pass2();
    std::uint32_t entry;
    if (auto it = symbols_.find("_start"); it != symbols_.end())
      entry = it->second;
    else if (first_emit_)
      entry = *first_emit_;
    else
      throw AsmError(1, "empty program");
    std::map<std::string, std::uint32_t> syms(symbols_.begin(), symbols_.end());
    try {
      return ProgramImage(entry, std::move(segments_), std::move(syms));
    } catch (const ImageError& e) {
      throw AsmError(0, e.what());
    }
  }

 private:
  // -- expression evaluation ----------------------------------------------
  Value eval(std::string_view expr, bool allow_undefined) const {
    expr = trim(expr);
    if (expr.empty()) throw AsmError(line_, "missing operand");
    Value total;
    std::size_t i = 0;
    int sign = 1;
    bool expect_term = true;
    while (i < expr.size()) {
      const char c = expr[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (expect_term) {
        if (c == '-' || c == '+') {
          if (c == '-') sign = -sign;
          ++i;
          continue;
        }
        std::size_t j = i;
        if (c == '\'') {
          // character literal
          std::int64_t ch;
          if (i + 2 < expr.size() && expr[i + 1] == '\\' && i + 3 < expr.size() && expr[i + 3] == '\'') {
            ch = unescape(expr[i + 2]);
            j = i + 4;
          } else if (i + 2 < expr.size() && expr[i + 2] == '\'') {
            ch = static_cast<unsigned char>(expr[i + 1]);
            j = i + 3;
          } else {
            throw AsmError(line_, "bad character literal");
          }
          total.value += sign * ch;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
          while (j < expr.size() && std::isalnum(static_cast<unsigned char>(expr[j]))) ++j;
          total.value += sign * parse_number(expr.substr(i, j - i));
        } else if (is_ident_start(c)) {
          while (j < expr.size() && is_ident_char(expr[j])) ++j;
          const std::string name(expr.substr(i, j - i));
          total.symbolic = true;
          auto it = symbols_.find(name);
          if (it == symbols_.end()) {
            if (!allow_undefined) throw AsmError(line_, "undefined label '" + name + "'");
          } else {
            total.value += sign * static_cast<std::int64_t>(it->second);
          }
        } else {
          throw AsmError(line_, "unexpected '" + std::string(1, c) + "' in expression");
        }
        i = j;
        sign = 1;
        expect_term = false;
      } else {
        if (c != '+' && c != '-') throw AsmError(line_, "expected operator in '" + std::string(expr) + "'");
        sign = c == '-' ? -1 : 1;
        expect_term = true;
        ++i;
      }
    }
    if (expect_term) throw AsmError(line_, "dangling operator in '" + std::string(expr) + "'");
    return total;
  }

  static char unescape(char c) {
    switch (c) {
      case 'n': return '\n';
      case 't': return '\t';
      case 'r': return '\r';
      case '0': return '\0';
      default: return c;
    }
  }

  std::int64_t parse_number(std::string_view tok) const {
    int base = 10;
    if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X')) {
      base = 16;
      tok.remove_prefix(2);
    } else if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'b' || tok[1] == 'B')) {
      base = 2;
      tok.remove_prefix(2);
    }
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, base);
    if (ec != std::errc{} || p != tok.data() + tok.size() || v > 0xFFFFFFFFull)
      throw AsmError(line_, "bad number '" + std::string(tok) + "'");
    return static_cast<std::int64_t>(v);
  }

  std::int64_t constant(std::string_view expr) const {
    return eval(expr, false).value;
  }

  unsigned xreg(std::string_view s) const {
    auto it = int_reg_names().find(trim(s));
    if (it == int_reg_names().end()) throw AsmError(line_, "expected integer register, got '" + std::string(s) + "'");
    return it->second;
  }

  unsigned freg(std::string_view s) const {
    auto it = fp_reg_names().find(trim(s));
    if (it == fp_reg_names().end()) throw AsmError(line_, "expected FP register, got '" + std::string(s) + "'");
    return it->second;
  }

  // "imm(reg)" or "(reg)"
  std::pair<std::string_view, unsigned> mem_operand(std::string_view s) const {
    s = trim(s);
    const auto open = s.find('(');
    if (open == std::string_view::npos || s.back() != ')')
      throw AsmError(line_, "expected offset(register), got '" + std::string(s) + "'");
    auto off = trim(s.substr(0, open));
    return {off.empty() ? std::string_view("0") : off, xreg(s.substr(open + 1, s.size() - open - 2))};
  }

  void expect_count(const Statement& st, std::size_t n) const {
    if (st.operands.size() != n)
      throw AsmError(line_, "'" + st.mnemonic + "' takes " + std::to_string(n) + " operand(s)");
  }

  std::int32_t imm12(std::string_view expr) const {
    const auto v = constant(expr);
    if (!fits_signed(v, 12)) throw AsmError(line_, "immediate " + std::to_string(v) + " out of range [-2048, 2047]");
    return static_cast<std::int32_t>(v);
  }

  // Branch/jump offset: a symbolic operand is an absolute target.
  std::int32_t pc_offset(std::string_view expr, std::uint32_t pc, int bits) const {
    const auto v = eval(expr, false);
    std::int64_t off = v.symbolic ? v.value - static_cast<std::int64_t>(pc) : v.value;
    if (v.symbolic && off > 0x7FFFFFFF) off -= 0x100000000LL;
    if (off & 1) throw AsmError(line_, "branch target not 2-byte aligned");
    if (!fits_signed(off, bits)) throw AsmError(line_, "branch target out of range");
    return static_cast<std::int32_t>(off);
  }

  // -- statement sizing ---------------------------------------------------
  std::uint32_t size_of(const Statement& st) {
    const auto& m = st.mnemonic;
    if (m == ".word") return 4 * static_cast<std::uint32_t>(st.operands.size());
    if (m == ".byte") return static_cast<std::uint32_t>(st.operands.size());
    if (m == ".ascii" || m == ".asciz") {
      expect_count(st, 1);
      return static_cast<std::uint32_t>(parse_string(st.operands[0]).size()) + (m == ".asciz" ? 1 : 0);
    }
    if (m == ".space") {
      if (st.operands.empty() || st.operands.size() > 2) throw AsmError(line_, ".space takes a size and optional fill");
      const auto n = constant(st.operands[0]);
      if (n < 0 || n > (1 << 30)) throw AsmError(line_, "bad .space size");
      return static_cast<std::uint32_t>(n);
    }
    if (m == ".align") {
      expect_count(st, 1);
      const auto p = constant(st.operands[0]);
      if (p < 0 || p > 16) throw AsmError(line_, "bad .align exponent");
      const std::uint32_t a = 1u << p;
      return (a - (pc_ % a)) % a;
    }
    if (m == "li") {
      expect_count(st, 2);
      const auto v = eval(st.operands[1], true);
      if (v.symbolic) return 8;
      if (v.value < -0x80000000LL || v.value > 0xFFFFFFFFLL) throw AsmError(line_, "li value out of 32-bit range");
      const auto sv = static_cast<std::int32_t>(static_cast<std::uint32_t>(v.value));
      if (fits_signed(sv, 12)) return 4;
      return (sv & 0xFFF) == 0 ? 4 : 8;
    }
    if (m == "la") return 8;
    if (m[0] == '.') throw AsmError(line_, "unknown directive '" + m + "'");
    return 4;
  }

  std::string parse_string(std::string_view s) const {
    s = trim(s);
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') throw AsmError(line_, "expected quoted string");
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        out.push_back(unescape(s[++i]));
      } else {
        out.push_back(s[i]);
      }
    }
    return out;
  }

  // -- pass 1: symbols and layout -------------------------------------------
  void pass1() {
    pc_ = kRamBase;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= source_.size()) {
      auto nl = source_.find('\n', pos);
      if (nl == std::string_view::npos) nl = source_.size();
      std::string_view text = trim(strip_comment(source_.substr(pos, nl - pos)));
      pos = nl + 1;
      line_ = ++lineno;

      // labels
      for (;;) {
        std::size_t j = 0;
        while (j < text.size() && is_ident_char(text[j])) ++j;
        if (j == 0 || j >= text.size() || text[j] != ':' || !is_ident_start(text[0])) break;
        const std::string name(text.substr(0, j));
        if (!symbols_.emplace(name, pc_).second) throw AsmError(line_, "duplicate label '" + name + "'");
        text = trim(text.substr(j + 1));
      }
      if (text.empty()) continue;

      Statement st;
      st.line = line_;
      std::size_t j = 0;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      st.mnemonic = std::string(text.substr(0, j));
      std::transform(st.mnemonic.begin(), st.mnemonic.end(), st.mnemonic.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      for (auto op : split_operands(trim(text.substr(j)))) st.operands.emplace_back(op);

      if (st.mnemonic == ".org") {
        expect_count(st, 1);
        const auto v = constant(st.operands[0]);
        if (v < 0 || v > 0xFFFFFFFFLL) throw AsmError(line_, ".org address out of range");
        pc_ = static_cast<std::uint32_t>(v);
        continue;
      }
      st.addr = pc_;
      st.size = size_of(st);
      if (std::uint64_t{pc_} + st.size > 0x100000000ull) throw AsmError(line_, "location counter overflow");
      pc_ += st.size;
      statements_.push_back(std::move(st));
    }
  }

  // -- pass 2: encoding -----------------------------------------------------
  void emit_bytes(std::uint32_t addr, const std::vector<std::uint8_t>& bytes) {
    if (bytes.empty()) return;
    if (!first_emit_) first_emit_ = addr;
    if (segments_.empty() ||
        std::uint64_t{segments_.back().base} + segments_.back().bytes.size() != addr)
      segments_.push_back(Segment{addr, {}});
    auto& seg = segments_.back().bytes;
    seg.insert(seg.end(), bytes.begin(), bytes.end());
  }

  void emit_words(std::uint32_t addr, std::initializer_list<Instruction> ins) {
    std::vector<std::uint8_t> out;
    for (const auto& i : ins) {
      const auto w = encode(i);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(w >> (8 * b)));
    }
    emit_bytes(addr, out);
  }

  void pass2() {
    for (const auto& st : statements_) {
      line_ = st.line;
      encode_statement(st);
    }
  }

  static Instruction I(Op op, unsigned rd, unsigned rs1, unsigned rs2, std::int32_t imm) {
    return Instruction{op, static_cast<std::uint8_t>(rd), static_cast<std::uint8_t>(rs1),
                       static_cast<std::uint8_t>(rs2), imm};
  }

  void encode_statement(const Statement& st) {
    const auto& m = st.mnemonic;
    const auto& ops = st.operands;
    const auto pc = st.addr;

    // directives
    if (m == ".word") {
      std::vector<std::uint8_t> out;
      for (const auto& o : ops) {
        const auto v = constant(o);
        if (v < -0x80000000LL || v > 0xFFFFFFFFLL) throw AsmError(line_, ".word value out of range");
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * b)));
      }
      return emit_bytes(pc, out);
    }
    if (m == ".byte") {
      std::vector<std::uint8_t> out;
      for (const auto& o : ops) {
        const auto v = constant(o);
        if (v < -128 || v > 255) throw AsmError(line_, ".byte value out of range");
        out.push_back(static_cast<std::uint8_t>(v));
      }
      return emit_bytes(pc, out);
    }
    if (m == ".ascii" || m == ".asciz") {
      auto s = parse_string(ops[0]);
      std::vector<std::uint8_t> out(s.begin(), s.end());
      if (m == ".asciz") out.push_back(0);
      return emit_bytes(pc, out);
    }
    if (m == ".space" || m == ".align") {
      std::uint8_t fill = 0;
      if (m == ".space" && ops.size() == 2) fill = static_cast<std::uint8_t>(constant(ops[1]));
      return emit_bytes(pc, std::vector<std::uint8_t>(st.size, fill));
    }

    // pseudo-instructions
    if (m == "nop") {
      expect_count(st, 0);
      return emit_words(pc, {I(Op::ADDI, 0, 0, 0, 0)});
    }
    if (m == "li" || m == "la") {
      expect_count(st, 2);
      const auto rd = xreg(ops[0]);
      const auto v = eval(ops[1], false);
      if (m == "la") {
        const auto off = static_cast<std::int32_t>(static_cast<std::uint32_t>(v.value) - pc);
        const std::int32_t hi = static_cast<std::int32_t>((static_cast<std::uint32_t>(off) + 0x800u) & 0xFFFFF000u);
        return emit_words(pc, {I(Op::AUIPC, rd, 0, 0, hi), I(Op::ADDI, rd, rd, 0, off - hi)});
      }
      const auto value = static_cast<std::int32_t>(static_cast<std::uint32_t>(v.value));
      if (st.size == 4 && fits_signed(value, 12)) return emit_words(pc, {I(Op::ADDI, rd, 0, 0, value)});
      const std::int32_t hi = static_cast<std::int32_t>((static_cast<std::uint32_t>(value) + 0x800u) & 0xFFFFF000u);
      const std::int32_t lo = static_cast<std::int32_t>(static_cast<std::uint32_t>(value) - static_cast<std::uint32_t>(hi));
      if (st.size == 4) return emit_words(pc, {I(Op::LUI, rd, 0, 0, hi)});
      return emit_words(pc, {I(Op::LUI, rd, 0, 0, hi), I(Op::ADDI, rd, rd, 0, lo)});
    }
    if (m == "mv") {
      expect_count(st, 2);
      return emit_words(pc, {I(Op::ADDI, xreg(ops[0]), xreg(ops[1]), 0, 0)});
    }
    if (m == "not") {
      expect_count(st, 2);
      return emit_words(pc, {I(Op::XORI, xreg(ops[0]), xreg(ops[1]), 0, -1)});
    }
    if (m == "neg") {
      expect_count(st, 2);
      return emit_words(pc, {I(Op::SUB, xreg(ops[0]), 0, xreg(ops[1]), 0)});
    }
    if (m == "j") {
      expect_count(st, 1);
      return emit_words(pc, {I(Op::JAL, 0, 0, 0, pc_offset(ops[0], pc, 21))});
    }
    if (m == "call") {
      expect_count(st, 1);
      return emit_words(pc, {I(Op::JAL, 1, 0, 0, pc_offset(ops[0], pc, 21))});
    }
    if (m == "ret") {
      expect_count(st, 0);
      return emit_words(pc, {I(Op::JALR, 0, 1, 0, 0)});
    }
    if (m == "beqz" || m == "bnez" || m == "bgez" || m == "bltz") {
      expect_count(st, 2);
      const Op op = m == "beqz" ? Op::BEQ : m == "bnez" ? Op::BNE : m == "bgez" ? Op::BGE : Op::BLT;
      return emit_words(pc, {I(op, 0, xreg(ops[0]), 0, pc_offset(ops[1], pc, 13))});
    }
    if (m == "bgt" || m == "ble") {
      expect_count(st, 3);
      const Op op = m == "bgt" ? Op::BLT : Op::BGE;
      return emit_words(pc, {I(op, 0, xreg(ops[1]), xreg(ops[0]), pc_offset(ops[2], pc, 13))});
    }

    const auto op = op_from_mnemonic(m);
    if (!op) throw AsmError(line_, "unknown mnemonic '" + m + "'");
    switch (format_of(*op)) {
      case Format::U: {
        expect_count(st, 2);
        const auto v = constant(ops[1]);
        if (v < -(1 << 19) || v > 0xFFFFF) throw AsmError(line_, "upper immediate out of range");
        return emit_words(pc, {I(*op, xreg(ops[0]), 0, 0, static_cast<std::int32_t>(static_cast<std::uint32_t>(v) << 12))});
      }
      case Format::J:
        if (ops.size() == 1) return emit_words(pc, {I(*op, 1, 0, 0, pc_offset(ops[0], pc, 21))});
        expect_count(st, 2);
        return emit_words(pc, {I(*op, xreg(ops[0]), 0, 0, pc_offset(ops[1], pc, 21))});
      case Format::Jalr:
        if (ops.size() == 1) return emit_words(pc, {I(*op, 1, xreg(ops[0]), 0, 0)});
        if (ops.size() == 3) return emit_words(pc, {I(*op, xreg(ops[0]), xreg(ops[1]), 0, imm12(ops[2]))});
        expect_count(st, 2);
        {
          const auto [off, base] = mem_operand(ops[1]);
          return emit_words(pc, {I(*op, xreg(ops[0]), base, 0, imm12(off))});
        }
      case Format::Branch:
        expect_count(st, 3);
        return emit_words(pc, {I(*op, 0, xreg(ops[0]), xreg(ops[1]), pc_offset(ops[2], pc, 13))});
      case Format::Load: {
        expect_count(st, 2);
        const auto rd = *op == Op::FLW ? freg(ops[0]) : xreg(ops[0]);
        const auto [off, base] = mem_operand(ops[1]);
        return emit_words(pc, {I(*op, rd, base, 0, imm12(off))});
      }
      case Format::Store: {
        expect_count(st, 2);
        const auto rs2 = *op == Op::FSW ? freg(ops[0]) : xreg(ops[0]);
        const auto [off, base] = mem_operand(ops[1]);
        return emit_words(pc, {I(*op, 0, base, rs2, imm12(off))});
      }
      case Format::I:
        expect_count(st, 3);
        return emit_words(pc, {I(*op, xreg(ops[0]), xreg(ops[1]), 0, imm12(ops[2]))});
      case Format::Shift: {
        expect_count(st, 3);
        const auto sh = constant(ops[2]);
        if (sh < 0 || sh > 31) throw AsmError(line_, "shift amount out of range [0, 31]");
        return emit_words(pc, {I(*op, xreg(ops[0]), xreg(ops[1]), 0, static_cast<std::int32_t>(sh))});
      }
      case Format::R:
        expect_count(st, 3);
        return emit_words(pc, {I(*op, xreg(ops[0]), xreg(ops[1]), xreg(ops[2]), 0)});
      case Format::Fence: {
        std::int32_t field = 0x0FF;
        if (ops.size() == 1) {
          const auto v = constant(ops[0]);
          if (v < 0 || v > 0xFFF) throw AsmError(line_, "fence field out of range");
          field = static_cast<std::int32_t>(v);
          if (field & 0x800) field -= 0x1000;
        } else {
          expect_count(st, 0);
        }
        return emit_words(pc, {I(*op, 0, 0, 0, field)});
      }
      case Format::Ecall:
        expect_count(st, 0);
        return emit_words(pc, {I(*op, 0, 0, 0, 0)});
      case Format::FMove:
        expect_count(st, 2);
        if (*op == Op::FMV_X_W) return emit_words(pc, {I(*op, xreg(ops[0]), freg(ops[1]), 0, 0)});
        return emit_words(pc, {I(*op, freg(ops[0]), xreg(ops[1]), 0, 0)});
    }
  }

  std::string_view source_;
  int line_ = 0;
  std::uint32_t pc_ = kRamBase;
  std::unordered_map<std::string, std::uint32_t> symbols_;
  std::vector<Statement> statements_;
  std::vector<Segment> segments_;
  std::optional<std::uint32_t> first_emit_;
};

}  // namespace

ProgramImage assemble(std::string_view source) { return Assembler(source).run(); }

void load(const ProgramImage& image, MemorySystem& mem, MachineState& state) {
  image.check_fits(mem.ram_base(), mem.ram_size());
  mem.reset_caches();
  for (const auto& s : image.segments()) mem.write_ram_bytes(s.base, s.bytes);
  state = MachineState{};
  state.pc = image.entry();
  state.xregs[2] = (mem.ram_base() + mem.ram_size()) & ~15u;
}

// ---------------------------------------------------------------------------
// JSON descriptor

namespace base64 = boost::beast::detail::base64;

std::string image_to_json(const ProgramImage& image) {
  nlohmann::ordered_json j;
  j["format"] = "rvfault-image";
  j["version"] = 1;
  j["entry"] = image.entry();
  auto& segs = j["segments"] = nlohmann::ordered_json::array();
  for (const auto& s : image.segments()) {
    std::string enc(base64::encoded_size(s.bytes.size()), '\0');
    enc.resize(base64::encode(enc.data(), s.bytes.data(), s.bytes.size()));
    segs.push_back({{"base", s.base}, {"data", enc}});
  }
  j["symbols"] = nlohmann::ordered_json::object();
  for (const auto& [name, addr] : image.symbols()) j["symbols"][name] = addr;
  return j.dump(2) + "\n";
}

ProgramImage image_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ImageError(std::string("image descriptor: ") + e.what());
  }
  try {
    if (j.at("format") != "rvfault-image" || j.at("version") != 1)
      throw ImageError("image descriptor: unsupported format or version");
    std::vector<Segment> segments;
    for (const auto& s : j.at("segments")) {
      const auto data = s.at("data").get<std::string>();
      Segment seg{s.at("base").get<std::uint32_t>(), {}};
      seg.bytes.resize(base64::decoded_size(data.size()));
      const auto written = base64::decode(seg.bytes.data(), data.data(), data.size()).first;
      seg.bytes.resize(written);
      std::string canon(base64::encoded_size(written), '\0');
      canon.resize(base64::encode(canon.data(), seg.bytes.data(), written));
      if (canon != data)
        throw ImageError("image descriptor: invalid base64 payload");
      segments.push_back(std::move(seg));
    }
    std::map<std::string, std::uint32_t> symbols;
    if (j.contains("symbols"))
      for (const auto& [name, addr] : j["symbols"].items()) symbols[name] = addr.get<std::uint32_t>();
    return ProgramImage(j.at("entry").get<std::uint32_t>(), std::move(segments), std::move(symbols));
  } catch (const nlohmann::json::exception& e) {
    throw ImageError(std::string("image descriptor: ") + e.what());
  }
}

}  // namespace rvfault
