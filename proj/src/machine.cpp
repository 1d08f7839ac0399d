#include "rvfault/machine.hpp"

#include <array>
#include <limits>

namespace rvfault {

namespace {

constexpr std::array<std::string_view, HpcVector::kSize> kHpcNames{
    "mcycle",        "mtime",         "minstret",      "mhpmcounter4",  "mhpmcounter5",
    "mhpmcounter7",  "mhpmcounter8",  "mhpmcounter9",  "mhpmcounter10", "mhpmcounter11",
    "mhpmcounter12", "mhpmcounter13", "mhpmcounter14", "mhpmcounter15", "mhpmcounter22",
    "mhpmcounter27", "mhpmcounter28", "mhpmcounter29", "mhpmcounter30", "mhpmcounter31",
};

constexpr unsigned kA0 = 10, kA1 = 11, kA2 = 12, kA7 = 17;

std::uint32_t read_freg(const MachineState& s, unsigned i, const PermanentFaultRegistry* f) {
  const auto v = s.fregs[i];
  return f && f->has_register_entries() ? f->enforce_reg(RegClass::Float, i, v) : v;
}

void write_freg(MachineState& s, unsigned i, std::uint32_t v, const PermanentFaultRegistry* f) {
  s.fregs[i] = f && f->has_register_entries() ? f->enforce_reg(RegClass::Float, i, v) : v;
}

std::uint32_t alu(Op op, std::uint32_t a, std::uint32_t b) {
  const auto sa = static_cast<std::int32_t>(a);
  const auto sb = static_cast<std::int32_t>(b);
  switch (op) {
    case Op::ADD: case Op::ADDI: return a + b;
    case Op::SUB: return a - b;
    case Op::SLL: case Op::SLLI: return a << (b & 31);
    case Op::SLT: case Op::SLTI: return sa < sb ? 1 : 0;
    case Op::SLTU: case Op::SLTIU: return a < b ? 1 : 0;
    case Op::XOR: case Op::XORI: return a ^ b;
    case Op::SRL: case Op::SRLI: return a >> (b & 31);
    case Op::SRA: case Op::SRAI: return static_cast<std::uint32_t>(sa >> (b & 31));
    case Op::OR: case Op::ORI: return a | b;
    case Op::AND: case Op::ANDI: return a & b;
    case Op::MUL: return a * b;
    case Op::MULH:
      return static_cast<std::uint32_t>((std::int64_t{sa} * std::int64_t{sb}) >> 32);
    case Op::MULHSU:
      return static_cast<std::uint32_t>((std::int64_t{sa} * static_cast<std::int64_t>(b)) >> 32);
    case Op::MULHU: return static_cast<std::uint32_t>((std::uint64_t{a} * b) >> 32);
    case Op::DIV:
      if (b == 0) return ~0u;
      if (sa == std::numeric_limits<std::int32_t>::min() && sb == -1) return a;
      return static_cast<std::uint32_t>(sa / sb);
    case Op::DIVU: return b == 0 ? ~0u : a / b;
    case Op::REM:
      if (b == 0) return a;
      if (sa == std::numeric_limits<std::int32_t>::min() && sb == -1) return 0;
      return static_cast<std::uint32_t>(sa % sb);
    case Op::REMU: return b == 0 ? a : a % b;
    default: return 0;
  }
}

bool branch_taken(Op op, std::uint32_t a, std::uint32_t b) {
  const auto sa = static_cast<std::int32_t>(a);
  const auto sb = static_cast<std::int32_t>(b);
  switch (op) {
    case Op::BEQ: return a == b;
    case Op::BNE: return a != b;
    case Op::BLT: return sa < sb;
    case Op::BGE: return sa >= sb;
    case Op::BLTU: return a < b;
    case Op::BGEU: return a >= b;
    default: return false;
  }
}

unsigned access_width(Op op) {
  switch (op) {
    case Op::LB: case Op::LBU: case Op::SB: return 1;
    case Op::LH: case Op::LHU: case Op::SH: return 2;
    default: return 4;
  }
}

std::uint32_t extend_load(Op op, std::uint32_t raw) {
  switch (op) {
    case Op::LB: return static_cast<std::uint32_t>(static_cast<std::int8_t>(raw));
    case Op::LH: return static_cast<std::uint32_t>(static_cast<std::int16_t>(raw));
    case Op::LBU: return raw & 0xFFu;
    case Op::LHU: return raw & 0xFFFFu;
    default: return raw;
  }
}

void sync_counters(MachineState& s, const MemorySystem& mem) {
  s.hpc[HpcVector::mcycle] = s.cycle;
  s.hpc[HpcVector::mtime] = s.cycle;
  s.hpc[HpcVector::hpm27_icache_miss] = mem.events().l1i_misses;
  s.hpc[HpcVector::hpm28_dcache_miss] = mem.events().l1d_misses;
  s.hpc[HpcVector::hpm29_dcache_writeback] = mem.events().l1d_writebacks;
}

StepOutcome trap(MachineState& s, const MemorySystem& mem, TrapKind kind, std::uint32_t pc,
                 std::uint32_t detail, std::uint32_t stall) {
  TrapCause cause{kind, pc, detail};
  s.cycle += 1 + stall;
  sync_counters(s, mem);
  s.status = cause;
  return cause;
}

}  // namespace

std::string_view HpcVector::name(std::size_t i) { return kHpcNames.at(i); }

HpcVector::Index counter_for(InstrClass cls) {
  switch (cls) {
    case InstrClass::IntLoad: return HpcVector::hpm4_int_load;
    case InstrClass::IntStore: return HpcVector::hpm5_int_store;
    case InstrClass::System: return HpcVector::hpm7_system;
    case InstrClass::IntArith: return HpcVector::hpm8_int_arith;
    case InstrClass::CondBranch: return HpcVector::hpm9_cond_branch;
    case InstrClass::Jal: return HpcVector::hpm10_jal;
    case InstrClass::Jalr: return HpcVector::hpm11_jalr;
    case InstrClass::Mul: return HpcVector::hpm12_mul;
    case InstrClass::Div: return HpcVector::hpm13_div;
    case InstrClass::FpLoadStore: return HpcVector::hpm14_fp_load_store;
    case InstrClass::FpOther: return HpcVector::hpm15_fp_other;
  }
  return HpcVector::hpm8_int_arith;
}

std::string_view to_string(TrapKind k) {
  switch (k) {
    case TrapKind::IllegalInstruction: return "IllegalInstruction";
    case TrapKind::MisalignedAccess: return "MisalignedAccess";
    case TrapKind::AccessOutOfBounds: return "AccessOutOfBounds";
    case TrapKind::MisalignedFetch: return "MisalignedFetch";
    case TrapKind::EcallUnknown: return "EcallUnknown";
  }
  return "?";
}

std::uint32_t read_xreg(const MachineState& s, unsigned i, const PermanentFaultRegistry* f) {
  if (i == 0) return 0;
  const auto v = s.xregs[i];
  return f && f->has_register_entries() ? f->enforce_reg(RegClass::Integer, i, v) : v;
}

void write_xreg(MachineState& s, unsigned i, std::uint32_t v, const PermanentFaultRegistry* f) {
  if (i == 0) return;
  s.xregs[i] = f && f->has_register_entries() ? f->enforce_reg(RegClass::Integer, i, v) : v;
}

StepOutcome syscall(MachineState& s, MemorySystem& mem, const PermanentFaultRegistry* f) {
  const auto number = read_xreg(s, kA7, f);
  if (number == 93) {
    Exited e{static_cast<int>(read_xreg(s, kA0, f) & 0xFFu)};
    return e;
  }
  if (number == 64) {
    const auto fd = read_xreg(s, kA0, f);
    const auto buf = read_xreg(s, kA1, f);
    const auto len = read_xreg(s, kA2, f);
    if (fd != 1) {
      write_xreg(s, kA0, static_cast<std::uint32_t>(-9), f);
      return Continue{};
    }
    if (len != 0 && !mem.in_ram(buf, len)) return TrapCause{TrapKind::AccessOutOfBounds, s.pc, buf};
    for (std::uint32_t i = 0; i < len && s.output.size() < kMaxOutputBytes; ++i)
      s.output.push_back(static_cast<char>(*mem.read_coherent(buf + i)));
    write_xreg(s, kA0, len, f);
    return Continue{};
  }
  return TrapCause{TrapKind::EcallUnknown, s.pc, number};
}

StepOutcome step(MachineState& s, MemorySystem& mem, const PermanentFaultRegistry* f,
                 const RetireObserver* observer) {
  const std::uint32_t pc = s.pc;
  if (pc & 3u) return trap(s, mem, TrapKind::MisalignedFetch, pc, pc, 0);
  const auto fetch = mem.access(AccessKind::Fetch, pc, 4);
  if (!fetch.ok) return trap(s, mem, TrapKind::AccessOutOfBounds, pc, pc, 0);
  std::uint32_t stall = fetch.stall;

  const auto decoded = decode(fetch.value);
  if (!decoded) return trap(s, mem, TrapKind::IllegalInstruction, pc, fetch.value, stall);
  const Instruction& in = *decoded;

  Retired info{pc, fetch.value};
  std::uint32_t next_pc = pc + 4;
  bool exited = false;
  int exit_code = 0;
  const auto imm = static_cast<std::uint32_t>(in.imm);

  switch (format_of(in.op)) {
    case Format::U:
      write_xreg(s, in.rd, in.op == Op::LUI ? imm : pc + imm, f);
      break;
    case Format::J:
      write_xreg(s, in.rd, pc + 4, f);
      next_pc = pc + imm;
      break;
    case Format::Jalr: {
      const auto target = (read_xreg(s, in.rs1, f) + imm) & ~1u;
      write_xreg(s, in.rd, pc + 4, f);
      next_pc = target;
      ++s.hpc[HpcVector::hpm22_mispredict];  // no target predictor
      break;
    }
    case Format::Branch: {
      const bool taken = branch_taken(in.op, read_xreg(s, in.rs1, f), read_xreg(s, in.rs2, f));
      const bool predicted = in.imm < 0;  // backward taken, forward not taken
      if (taken != predicted) ++s.hpc[HpcVector::hpm22_mispredict];
      if (taken) next_pc = pc + imm;
      break;
    }
    case Format::Load:
    case Format::Store: {
      const bool is_store = format_of(in.op) == Format::Store;
      const auto addr = read_xreg(s, in.rs1, f) + imm;
      const auto width = access_width(in.op);
      if (addr & (width - 1)) return trap(s, mem, TrapKind::MisalignedAccess, pc, addr, stall);
      if (!mem.in_ram(addr, width)) return trap(s, mem, TrapKind::AccessOutOfBounds, pc, addr, stall);
      info.has_data_access = true;
      info.data_kind = is_store ? AccessKind::Store : AccessKind::Load;
      info.data_addr = addr;
      if (is_store) {
        const auto v = in.op == Op::FSW ? read_freg(s, in.rs2, f) : read_xreg(s, in.rs2, f);
        stall += mem.access(AccessKind::Store, addr, width, v).stall;
      } else {
        const auto r = mem.access(AccessKind::Load, addr, width);
        stall += r.stall;
        if (in.op == Op::FLW)
          write_freg(s, in.rd, r.value, f);
        else
          write_xreg(s, in.rd, extend_load(in.op, r.value), f);
      }
      break;
    }
    case Format::I:
    case Format::Shift:
      write_xreg(s, in.rd, alu(in.op, read_xreg(s, in.rs1, f), imm), f);
      break;
    case Format::R:
      write_xreg(s, in.rd, alu(in.op, read_xreg(s, in.rs1, f), read_xreg(s, in.rs2, f)), f);
      break;
    case Format::Fence:
      break;
    case Format::Ecall: {
      const auto r = syscall(s, mem, f);
      if (const auto* t = std::get_if<TrapCause>(&r)) return trap(s, mem, t->kind, pc, t->detail, stall);
      if (const auto* e = std::get_if<Exited>(&r)) {
        exited = true;
        exit_code = e->code;
      }
      break;
    }
    case Format::FMove:
      if (in.op == Op::FMV_X_W)
        write_xreg(s, in.rd, read_freg(s, in.rs1, f), f);
      else
        write_freg(s, in.rd, read_xreg(s, in.rs1, f), f);
      break;
  }

  s.pc = next_pc;
  s.cycle += 1 + stall;
  ++s.hpc[HpcVector::minstret];
  ++s.hpc[counter_for(class_of(in.op))];
  sync_counters(s, mem);
  if (observer) (*observer)(info);
  if (exited) {
    s.status = Exited{exit_code};
    return Exited{exit_code};
  }
  return Continue{};
}

}  // namespace rvfault
