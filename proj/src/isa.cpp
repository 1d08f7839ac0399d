#include "rvfault/isa.hpp"

#include <array>
#include <cstdio>

namespace rvfault {
namespace {

struct OpInfo {
  std::string_view name;
  Format format;
  InstrClass cls;
};

constexpr std::array<OpInfo, kOpCount> kOps{{
    {"lui", Format::U, InstrClass::IntArith},
    {"auipc", Format::U, InstrClass::IntArith},
    {"jal", Format::J, InstrClass::Jal},
    {"jalr", Format::Jalr, InstrClass::Jalr},
    {"beq", Format::Branch, InstrClass::CondBranch},
    {"bne", Format::Branch, InstrClass::CondBranch},
    {"blt", Format::Branch, InstrClass::CondBranch},
    {"bge", Format::Branch, InstrClass::CondBranch},
    {"bltu", Format::Branch, InstrClass::CondBranch},
    {"bgeu", Format::Branch, InstrClass::CondBranch},
    {"lb", Format::Load, InstrClass::IntLoad},
    {"lh", Format::Load, InstrClass::IntLoad},
    {"lw", Format::Load, InstrClass::IntLoad},
    {"lbu", Format::Load, InstrClass::IntLoad},
    {"lhu", Format::Load, InstrClass::IntLoad},
    {"sb", Format::Store, InstrClass::IntStore},
    {"sh", Format::Store, InstrClass::IntStore},
    {"sw", Format::Store, InstrClass::IntStore},
    {"addi", Format::I, InstrClass::IntArith},
    {"slti", Format::I, InstrClass::IntArith},
    {"sltiu", Format::I, InstrClass::IntArith},
    {"xori", Format::I, InstrClass::IntArith},
    {"ori", Format::I, InstrClass::IntArith},
    {"andi", Format::I, InstrClass::IntArith},
    {"slli", Format::Shift, InstrClass::IntArith},
    {"srli", Format::Shift, InstrClass::IntArith},
    {"srai", Format::Shift, InstrClass::IntArith},
    {"add", Format::R, InstrClass::IntArith},
    {"sub", Format::R, InstrClass::IntArith},
    {"sll", Format::R, InstrClass::IntArith},
    {"slt", Format::R, InstrClass::IntArith},
    {"sltu", Format::R, InstrClass::IntArith},
    {"xor", Format::R, InstrClass::IntArith},
    {"srl", Format::R, InstrClass::IntArith},
    {"sra", Format::R, InstrClass::IntArith},
    {"or", Format::R, InstrClass::IntArith},
    {"and", Format::R, InstrClass::IntArith},
    {"fence", Format::Fence, InstrClass::System},
    {"ecall", Format::Ecall, InstrClass::System},
    {"mul", Format::R, InstrClass::Mul},
    {"mulh", Format::R, InstrClass::Mul},
    {"mulhsu", Format::R, InstrClass::Mul},
    {"mulhu", Format::R, InstrClass::Mul},
    {"div", Format::R, InstrClass::Div},
    {"divu", Format::R, InstrClass::Div},
    {"rem", Format::R, InstrClass::Div},
    {"remu", Format::R, InstrClass::Div},
    {"flw", Format::Load, InstrClass::FpLoadStore},
    {"fsw", Format::Store, InstrClass::FpLoadStore},
    {"fmv.x.w", Format::FMove, InstrClass::FpOther},
    {"fmv.w.x", Format::FMove, InstrClass::FpOther},
}};

constexpr const OpInfo& info(Op op) { return kOps[static_cast<std::size_t>(op)]; }

constexpr std::uint32_t bits(std::uint32_t w, int hi, int lo) {
  return (w >> lo) & ((1u << (hi - lo + 1)) - 1u);
}

constexpr std::int32_t sext(std::uint32_t v, int width) {
  const std::uint32_t m = 1u << (width - 1);
  return static_cast<std::int32_t>((v ^ m) - m);
}

constexpr std::int32_t imm_i(std::uint32_t w) { return sext(bits(w, 31, 20), 12); }
constexpr std::int32_t imm_s(std::uint32_t w) {
  return sext((bits(w, 31, 25) << 5) | bits(w, 11, 7), 12);
}
constexpr std::int32_t imm_b(std::uint32_t w) {
  return sext((bits(w, 31, 31) << 12) | (bits(w, 7, 7) << 11) | (bits(w, 30, 25) << 5) |
                  (bits(w, 11, 8) << 1),
              13);
}
constexpr std::int32_t imm_j(std::uint32_t w) {
  return sext((bits(w, 31, 31) << 20) | (bits(w, 19, 12) << 12) | (bits(w, 20, 20) << 11) |
                  (bits(w, 30, 21) << 1),
              21);
}

constexpr std::uint32_t r_type(std::uint32_t f7, std::uint32_t rs2, std::uint32_t rs1,
                               std::uint32_t f3, std::uint32_t rd, std::uint32_t opc) {
  return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc;
}
constexpr std::uint32_t i_type(std::int32_t imm, std::uint32_t rs1, std::uint32_t f3,
                               std::uint32_t rd, std::uint32_t opc) {
  return ((static_cast<std::uint32_t>(imm) & 0xFFFu) << 20) | (rs1 << 15) | (f3 << 12) |
         (rd << 7) | opc;
}
constexpr std::uint32_t s_type(std::int32_t imm, std::uint32_t rs2, std::uint32_t rs1,
                               std::uint32_t f3, std::uint32_t opc) {
  const auto u = static_cast<std::uint32_t>(imm);
  return (bits(u, 11, 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (bits(u, 4, 0) << 7) |
         opc;
}
constexpr std::uint32_t b_type(std::int32_t imm, std::uint32_t rs2, std::uint32_t rs1,
                               std::uint32_t f3) {
  const auto u = static_cast<std::uint32_t>(imm);
  return (bits(u, 12, 12) << 31) | (bits(u, 10, 5) << 25) | (rs2 << 20) | (rs1 << 15) |
         (f3 << 12) | (bits(u, 4, 1) << 8) | (bits(u, 11, 11) << 7) | 0x63u;
}
constexpr std::uint32_t j_type(std::int32_t imm, std::uint32_t rd) {
  const auto u = static_cast<std::uint32_t>(imm);
  return (bits(u, 20, 20) << 31) | (bits(u, 10, 1) << 21) | (bits(u, 11, 11) << 20) |
         (bits(u, 19, 12) << 12) | (rd << 7) | 0x6Fu;
}

// funct3 per opcode within its major opcode group
constexpr std::uint32_t funct3(Op op) {
  switch (op) {
    case Op::BEQ: return 0; case Op::BNE: return 1; case Op::BLT: return 4;
    case Op::BGE: return 5; case Op::BLTU: return 6; case Op::BGEU: return 7;
    case Op::LB: return 0; case Op::LH: return 1; case Op::LW: return 2;
    case Op::LBU: return 4; case Op::LHU: return 5;
    case Op::SB: return 0; case Op::SH: return 1; case Op::SW: return 2;
    case Op::ADDI: return 0; case Op::SLTI: return 2; case Op::SLTIU: return 3;
    case Op::XORI: return 4; case Op::ORI: return 6; case Op::ANDI: return 7;
    case Op::SLLI: return 1; case Op::SRLI: return 5; case Op::SRAI: return 5;
    case Op::ADD: case Op::SUB: return 0; case Op::SLL: return 1; case Op::SLT: return 2;
    case Op::SLTU: return 3; case Op::XOR: return 4; case Op::SRL: case Op::SRA: return 5;
    case Op::OR: return 6; case Op::AND: return 7;
    case Op::MUL: return 0; case Op::MULH: return 1; case Op::MULHSU: return 2;
    case Op::MULHU: return 3; case Op::DIV: return 4; case Op::DIVU: return 5;
    case Op::REM: return 6; case Op::REMU: return 7;
    case Op::FLW: case Op::FSW: return 2;
    default: return 0;
  }
}

constexpr std::uint32_t funct7(Op op) {
  switch (op) {
    case Op::SUB: case Op::SRA: case Op::SRAI: return 0x20;
    case Op::MUL: case Op::MULH: case Op::MULHSU: case Op::MULHU:
    case Op::DIV: case Op::DIVU: case Op::REM: case Op::REMU: return 0x01;
    case Op::FMV_X_W: return 0x70;
    case Op::FMV_W_X: return 0x78;
    default: return 0;
  }
}

Instruction make(Op op, std::uint32_t rd, std::uint32_t rs1, std::uint32_t rs2, std::int32_t imm) {
  return Instruction{op, static_cast<std::uint8_t>(rd), static_cast<std::uint8_t>(rs1),
                     static_cast<std::uint8_t>(rs2), imm};
}

}  // namespace

std::string_view mnemonic(Op op) { return info(op).name; }

std::optional<Op> op_from_mnemonic(std::string_view name) {
  for (int i = 0; i < kOpCount; ++i)
    if (kOps[i].name == name) return static_cast<Op>(i);
  return std::nullopt;
}

Format format_of(Op op) { return info(op).format; }
InstrClass class_of(Op op) { return info(op).cls; }

std::optional<Instruction> decode(std::uint32_t w) {
  const std::uint32_t opc = bits(w, 6, 0);
  const std::uint32_t rd = bits(w, 11, 7);
  const std::uint32_t f3 = bits(w, 14, 12);
  const std::uint32_t rs1 = bits(w, 19, 15);
  const std::uint32_t rs2 = bits(w, 24, 20);
  const std::uint32_t f7 = bits(w, 31, 25);

  switch (opc) {
    case 0x37: return make(Op::LUI, rd, 0, 0, static_cast<std::int32_t>(w & 0xFFFFF000u));
    case 0x17: return make(Op::AUIPC, rd, 0, 0, static_cast<std::int32_t>(w & 0xFFFFF000u));
    case 0x6F: return make(Op::JAL, rd, 0, 0, imm_j(w));
    case 0x67:
      if (f3 != 0) return std::nullopt;
      return make(Op::JALR, rd, rs1, 0, imm_i(w));
    case 0x63: {
      static constexpr std::array<std::optional<Op>, 8> kBr{
          Op::BEQ, Op::BNE, std::nullopt, std::nullopt, Op::BLT, Op::BGE, Op::BLTU, Op::BGEU};
      if (!kBr[f3]) return std::nullopt;
      return make(*kBr[f3], 0, rs1, rs2, imm_b(w));
    }
    case 0x03: {
      static constexpr std::array<std::optional<Op>, 8> kLd{
          Op::LB, Op::LH, Op::LW, std::nullopt, Op::LBU, Op::LHU, std::nullopt, std::nullopt};
      if (!kLd[f3]) return std::nullopt;
      return make(*kLd[f3], rd, rs1, 0, imm_i(w));
    }
    case 0x23: {
      static constexpr std::array<Op, 3> kSt{Op::SB, Op::SH, Op::SW};
      if (f3 > 2) return std::nullopt;
      return make(kSt[f3], 0, rs1, rs2, imm_s(w));
    }
    case 0x13:
      switch (f3) {
        case 0: return make(Op::ADDI, rd, rs1, 0, imm_i(w));
        case 2: return make(Op::SLTI, rd, rs1, 0, imm_i(w));
        case 3: return make(Op::SLTIU, rd, rs1, 0, imm_i(w));
        case 4: return make(Op::XORI, rd, rs1, 0, imm_i(w));
        case 6: return make(Op::ORI, rd, rs1, 0, imm_i(w));
        case 7: return make(Op::ANDI, rd, rs1, 0, imm_i(w));
        case 1:
          if (f7 != 0) return std::nullopt;
          return make(Op::SLLI, rd, rs1, 0, static_cast<std::int32_t>(rs2));
        case 5:
          if (f7 == 0) return make(Op::SRLI, rd, rs1, 0, static_cast<std::int32_t>(rs2));
          if (f7 == 0x20) return make(Op::SRAI, rd, rs1, 0, static_cast<std::int32_t>(rs2));
          return std::nullopt;
      }
      return std::nullopt;
    case 0x33: {
      if (f7 == 0x01) {
        static constexpr std::array<Op, 8> kM{Op::MUL, Op::MULH, Op::MULHSU, Op::MULHU,
                                              Op::DIV, Op::DIVU, Op::REM,    Op::REMU};
        return make(kM[f3], rd, rs1, rs2, 0);
      }
      if (f7 == 0x00) {
        static constexpr std::array<Op, 8> kR{Op::ADD, Op::SLL, Op::SLT, Op::SLTU,
                                              Op::XOR, Op::SRL, Op::OR,  Op::AND};
        return make(kR[f3], rd, rs1, rs2, 0);
      }
      if (f7 == 0x20) {
        if (f3 == 0) return make(Op::SUB, rd, rs1, rs2, 0);
        if (f3 == 5) return make(Op::SRA, rd, rs1, rs2, 0);
      }
      return std::nullopt;
    }
    case 0x0F:
      if (f3 != 0) return std::nullopt;
      return make(Op::FENCE, rd, rs1, 0, imm_i(w));
    case 0x73:
      if (w == 0x00000073u) return make(Op::ECALL, 0, 0, 0, 0);
      return std::nullopt;
    case 0x07:
      if (f3 != 2) return std::nullopt;
      return make(Op::FLW, rd, rs1, 0, imm_i(w));
    case 0x27:
      if (f3 != 2) return std::nullopt;
      return make(Op::FSW, 0, rs1, rs2, imm_s(w));
    case 0x53:
      if (f3 != 0 || rs2 != 0) return std::nullopt;
      if (f7 == 0x70) return make(Op::FMV_X_W, rd, rs1, 0, 0);
      if (f7 == 0x78) return make(Op::FMV_W_X, rd, rs1, 0, 0);
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

std::uint32_t encode(const Instruction& ins) {
  const std::uint32_t rd = ins.rd & 31u, rs1 = ins.rs1 & 31u, rs2 = ins.rs2 & 31u;
  const Op op = ins.op;
  switch (format_of(op)) {
    case Format::U:
      return (static_cast<std::uint32_t>(ins.imm) & 0xFFFFF000u) | (rd << 7) |
             (op == Op::LUI ? 0x37u : 0x17u);
    case Format::J: return j_type(ins.imm, rd);
    case Format::Jalr: return i_type(ins.imm, rs1, 0, rd, 0x67);
    case Format::Branch: return b_type(ins.imm, rs2, rs1, funct3(op));
    case Format::Load: return i_type(ins.imm, rs1, funct3(op), rd, op == Op::FLW ? 0x07 : 0x03);
    case Format::Store: return s_type(ins.imm, rs2, rs1, funct3(op), op == Op::FSW ? 0x27 : 0x23);
    case Format::I: return i_type(ins.imm, rs1, funct3(op), rd, 0x13);
    case Format::Shift:
      return r_type(funct7(op), static_cast<std::uint32_t>(ins.imm) & 31u, rs1, funct3(op), rd,
                    0x13);
    case Format::R: return r_type(funct7(op), rs2, rs1, funct3(op), rd, 0x33);
    case Format::Fence: return i_type(ins.imm, rs1, 0, rd, 0x0F);
    case Format::Ecall: return 0x00000073u;
    case Format::FMove: return r_type(funct7(op), 0, rs1, 0, rd, 0x53);
  }
  return 0;
}

std::string disassemble(const Instruction& ins) {
  char buf[64];
  const auto n = mnemonic(ins.op);
  const int nl = static_cast<int>(n.size());
  const char* name = n.data();
  const bool fp_rd = ins.op == Op::FLW || ins.op == Op::FMV_W_X;
  const char rdc = fp_rd ? 'f' : 'x';
  switch (format_of(ins.op)) {
    case Format::U:
      std::snprintf(buf, sizeof buf, "%.*s x%u, 0x%x", nl, name, ins.rd,
                    static_cast<std::uint32_t>(ins.imm) >> 12);
      break;
    case Format::J:
      std::snprintf(buf, sizeof buf, "%.*s x%u, %d", nl, name, ins.rd, ins.imm);
      break;
    case Format::Jalr:
    case Format::Load:
      std::snprintf(buf, sizeof buf, "%.*s %c%u, %d(x%u)", nl, name, rdc, ins.rd, ins.imm, ins.rs1);
      break;
    case Format::Store:
      std::snprintf(buf, sizeof buf, "%.*s %c%u, %d(x%u)", nl, name,
                    ins.op == Op::FSW ? 'f' : 'x', ins.rs2, ins.imm, ins.rs1);
      break;
    case Format::I:
    case Format::Shift:
      std::snprintf(buf, sizeof buf, "%.*s x%u, x%u, %d", nl, name, ins.rd, ins.rs1, ins.imm);
      break;
    case Format::Branch:
      std::snprintf(buf, sizeof buf, "%.*s x%u, x%u, %d", nl, name, ins.rs1, ins.rs2, ins.imm);
      break;
    case Format::R:
      std::snprintf(buf, sizeof buf, "%.*s x%u, x%u, x%u", nl, name, ins.rd, ins.rs1, ins.rs2);
      break;
    case Format::Fence:
      if (ins.rd == 0 && ins.rs1 == 0)
        std::snprintf(buf, sizeof buf, "fence 0x%x", static_cast<std::uint32_t>(ins.imm) & 0xFFFu);
      else
        std::snprintf(buf, sizeof buf, ".word 0x%08x", encode(ins));
      break;
    case Format::Ecall:
      std::snprintf(buf, sizeof buf, "ecall");
      break;
    case Format::FMove:
      if (ins.op == Op::FMV_X_W)
        std::snprintf(buf, sizeof buf, "fmv.x.w x%u, f%u", ins.rd, ins.rs1);
      else
        std::snprintf(buf, sizeof buf, "fmv.w.x f%u, x%u", ins.rd, ins.rs1);
      break;
  }
  return buf;
}

}  // namespace rvfault
