#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace rvfault {

// RV32I base, M extension, and the FP load/store/move subset.
enum class Op : std::uint8_t {
  LUI, AUIPC, JAL, JALR,
  BEQ, BNE, BLT, BGE, BLTU, BGEU,
  LB, LH, LW, LBU, LHU,
  SB, SH, SW,
  ADDI, SLTI, SLTIU, XORI, ORI, ANDI, SLLI, SRLI, SRAI,
  ADD, SUB, SLL, SLT, SLTU, XOR, SRL, SRA, OR, AND,
  FENCE, ECALL,
  MUL, MULH, MULHSU, MULHU, DIV, DIVU, REM, REMU,
  FLW, FSW, FMV_X_W, FMV_W_X,
};

inline constexpr int kOpCount = static_cast<int>(Op::FMV_W_X) + 1;

/// Operand layout of an opcode, as far as the assembler and disassembler care.
enum class Format : std::uint8_t {
  U,       // rd, imm20
  J,       // rd, offset
  I,       // rd, rs1, imm
  Shift,   // rd, rs1, shamt
  Load,    // rd, imm(rs1)
  Store,   // rs2, imm(rs1)
  Branch,  // rs1, rs2, offset
  R,       // rd, rs1, rs2
  Jalr,    // rd, imm(rs1)
  Fence,
  Ecall,
  FMove,   // rd, rs1 (register files differ per op)
};

/// Counter class an instruction retires into.
enum class InstrClass : std::uint8_t {
  IntLoad, IntStore, System, IntArith, CondBranch, Jal, Jalr, Mul, Div, FpLoadStore, FpOther,
};

/// A decoded instruction. Fields an opcode does not use are zero, which
/// makes the representation canonical: decode(encode(i)) == i.
struct Instruction {
  Op op = Op::ADDI;
  std::uint8_t rd = 0;
  std::uint8_t rs1 = 0;
  std::uint8_t rs2 = 0;
  // U-type: the upper 20 bits in place (low 12 bits zero).
  // Shifts: the shift amount. FENCE: the raw 12-bit field, sign-extended.
  std::int32_t imm = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

std::string_view mnemonic(Op op);
std::optional<Op> op_from_mnemonic(std::string_view name);
Format format_of(Op op);
InstrClass class_of(Op op);

/// Returns the unique decoding of `word`, or nullopt for an encoding
/// outside the supported set (the caller raises IllegalInstruction).
std::optional<Instruction> decode(std::uint32_t word);

/// Encodes a canonical instruction. Immediates are truncated to their
/// field width; range checking is the assembler's job.
std::uint32_t encode(const Instruction& ins);

/// Assembler-compatible text, e.g. "mul x6, x6, x10". Branch and jump
/// targets are printed as PC-relative byte offsets.
std::string disassemble(const Instruction& ins);

}  // namespace rvfault
