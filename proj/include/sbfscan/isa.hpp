#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sbfscan/common.hpp"

namespace sbfscan {

// eBPF slot layout: opcode(1) regs(1: dst lo nibble, src hi nibble)
// offset(2 LE, signed) imm(4 LE, signed). LD_IMM64 spans two slots.
enum class InsnClass { ALU64, ALU32, JMP, JMP32, LD_IMM64, LDX, ST, STX, CALL, EXIT };

enum class AluOp { ADD, SUB, MUL, DIV, OR, AND, LSH, RSH, NEG, MOD, XOR, MOV, ARSH, END_LE, END_BE };

enum class JmpOp { JA, JEQ, JNE, JGT, JGE, JLT, JLE, JSGT, JSGE, JSLT, JSLE, JSET };

struct Instruction {
  InsnClass klass = InsnClass::EXIT;
  AluOp alu_op = AluOp::ADD;
  JmpOp jmp_op = JmpOp::JA;
  uint8_t width = 0;      // memory access width in bytes (LDX/ST/STX): 1/2/4/8
  bool is_reg_src = false;  // second operand is src register rather than imm
  uint8_t dst = 0;
  uint8_t src = 0;
  int16_t offset = 0;
  int64_t imm = 0;
  uint8_t size_slots = 1;

  bool operator==(const Instruction&) const = default;
};

namespace isa_detail {

constexpr uint8_t kClassMask = 0x07;
constexpr uint8_t kClassLD = 0x00, kClassLDX = 0x01, kClassST = 0x02, kClassSTX = 0x03;
constexpr uint8_t kClassALU32 = 0x04, kClassJMP = 0x05, kClassJMP32 = 0x06, kClassALU64 = 0x07;
constexpr uint8_t kSrcReg = 0x08;

inline std::optional<AluOp> alu_op_from_code(uint8_t code) {
  switch (code) {
    case 0x0: return AluOp::ADD;
    case 0x1: return AluOp::SUB;
    case 0x2: return AluOp::MUL;
    case 0x3: return AluOp::DIV;
    case 0x4: return AluOp::OR;
    case 0x5: return AluOp::AND;
    case 0x6: return AluOp::LSH;
    case 0x7: return AluOp::RSH;
    case 0x8: return AluOp::NEG;
    case 0x9: return AluOp::MOD;
    case 0xa: return AluOp::XOR;
    case 0xb: return AluOp::MOV;
    case 0xc: return AluOp::ARSH;
    default: return std::nullopt;
  }
}

inline uint8_t alu_code(AluOp op) {
  switch (op) {
    case AluOp::ADD: return 0x0;
    case AluOp::SUB: return 0x1;
    case AluOp::MUL: return 0x2;
    case AluOp::DIV: return 0x3;
    case AluOp::OR: return 0x4;
    case AluOp::AND: return 0x5;
    case AluOp::LSH: return 0x6;
    case AluOp::RSH: return 0x7;
    case AluOp::NEG: return 0x8;
    case AluOp::MOD: return 0x9;
    case AluOp::XOR: return 0xa;
    case AluOp::MOV: return 0xb;
    case AluOp::ARSH: return 0xc;
    case AluOp::END_LE:
    case AluOp::END_BE: return 0xd;
  }
  return 0;
}

inline std::optional<JmpOp> jmp_op_from_code(uint8_t code) {
  switch (code) {
    case 0x0: return JmpOp::JA;
    case 0x1: return JmpOp::JEQ;
    case 0x2: return JmpOp::JGT;
    case 0x3: return JmpOp::JGE;
    case 0x4: return JmpOp::JSET;
    case 0x5: return JmpOp::JNE;
    case 0x6: return JmpOp::JSGT;
    case 0x7: return JmpOp::JSGE;
    case 0xa: return JmpOp::JLT;
    case 0xb: return JmpOp::JLE;
    case 0xc: return JmpOp::JSLT;
    case 0xd: return JmpOp::JSLE;
    default: return std::nullopt;
  }
}

inline uint8_t jmp_code(JmpOp op) {
  switch (op) {
    case JmpOp::JA: return 0x0;
    case JmpOp::JEQ: return 0x1;
    case JmpOp::JGT: return 0x2;
    case JmpOp::JGE: return 0x3;
    case JmpOp::JSET: return 0x4;
    case JmpOp::JNE: return 0x5;
    case JmpOp::JSGT: return 0x6;
    case JmpOp::JSGE: return 0x7;
    case JmpOp::JLT: return 0xa;
    case JmpOp::JLE: return 0xb;
    case JmpOp::JSLT: return 0xc;
    case JmpOp::JSLE: return 0xd;
  }
  return 0;
}

inline std::optional<uint8_t> mem_width(uint8_t opcode) {
  switch (opcode & 0x18) {
    case 0x00: return 4;
    case 0x08: return 2;
    case 0x10: return 1;
    case 0x18: return 8;
  }
  return std::nullopt;
}

inline uint8_t size_bits(uint8_t width) {
  switch (width) {
    case 4: return 0x00;
    case 2: return 0x08;
    case 1: return 0x10;
    default: return 0x18;
  }
}

}  // namespace isa_detail

inline bool is_lddw_opcode(uint8_t opcode) { return opcode == 0x18; }

// Decode one slot (plus the continuation slot for lddw). Throws IllegalOpcode
// on bytes outside the supported set and TruncatedWide when a lddw lacks its
// second slot.
inline Instruction decode(const uint8_t slot[8], const uint8_t* next_slot = nullptr) {
  using namespace isa_detail;
  Instruction insn;
  uint8_t opcode = slot[0];
  insn.dst = slot[1] & 0x0f;
  insn.src = slot[1] >> 4;
  insn.offset = static_cast<int16_t>(read_u16le(slot + 2));
  int32_t imm32 = static_cast<int32_t>(read_u32le(slot + 4));
  insn.imm = imm32;
  if (insn.dst > 10 || insn.src > 10)
    throw ScanError(ErrKind::IllegalOpcode, "register index out of range");

  uint8_t klass = opcode & kClassMask;
  switch (klass) {
    case kClassALU64:
    case kClassALU32: {
      insn.klass = (klass == kClassALU64) ? InsnClass::ALU64 : InsnClass::ALU32;
      auto op = alu_op_from_code(opcode >> 4);
      insn.is_reg_src = (opcode & kSrcReg) != 0;
      if ((opcode >> 4) == 0xd) {
        // Byte-swap lives in the ALU32 class; the source bit picks endianness.
        if (klass != kClassALU32) throw ScanError(ErrKind::IllegalOpcode, "bswap in ALU64");
        if (imm32 != 16 && imm32 != 32 && imm32 != 64)
          throw ScanError(ErrKind::IllegalOpcode, "bad bswap width");
        insn.alu_op = insn.is_reg_src ? AluOp::END_BE : AluOp::END_LE;
        insn.is_reg_src = false;
      } else {
        if (!op) throw ScanError(ErrKind::IllegalOpcode, "bad ALU code");
        insn.alu_op = *op;
        if (*op == AluOp::NEG && insn.is_reg_src)
          throw ScanError(ErrKind::IllegalOpcode, "neg has no reg form");
      }
      return insn;
    }
    case kClassJMP: {
      if (opcode == 0x85) {
        insn.klass = InsnClass::CALL;
        return insn;
      }
      if (opcode == 0x95) {
        insn.klass = InsnClass::EXIT;
        return insn;
      }
      if (opcode == 0x8d) throw ScanError(ErrKind::IllegalOpcode, "callx unsupported");
      [[fallthrough]];
    }
    case kClassJMP32: {
      insn.klass = (klass == kClassJMP) ? InsnClass::JMP : InsnClass::JMP32;
      auto op = jmp_op_from_code(opcode >> 4);
      if (!op) throw ScanError(ErrKind::IllegalOpcode, "bad JMP code");
      insn.is_reg_src = (opcode & kSrcReg) != 0;
      if (*op == JmpOp::JA && (insn.is_reg_src || klass == kClassJMP32))
        throw ScanError(ErrKind::IllegalOpcode, "bad ja form");
      insn.jmp_op = *op;
      return insn;
    }
    case kClassLDX: {
      if ((opcode & 0xe0) != 0x60) throw ScanError(ErrKind::IllegalOpcode, "bad LDX mode");
      insn.klass = InsnClass::LDX;
      insn.width = *mem_width(opcode);
      return insn;
    }
    case kClassST:
    case kClassSTX: {
      if ((opcode & 0xe0) != 0x60) throw ScanError(ErrKind::IllegalOpcode, "bad ST mode");
      insn.klass = (klass == kClassST) ? InsnClass::ST : InsnClass::STX;
      insn.width = *mem_width(opcode);
      return insn;
    }
    case kClassLD: {
      if (!is_lddw_opcode(opcode)) throw ScanError(ErrKind::IllegalOpcode, "bad LD opcode");
      if (!next_slot) throw ScanError(ErrKind::TruncatedWide, "lddw needs a second slot");
      insn.klass = InsnClass::LD_IMM64;
      insn.size_slots = 2;
      uint64_t lo = read_u32le(slot + 4);
      uint64_t hi = read_u32le(next_slot + 4);
      insn.imm = static_cast<int64_t>(lo | (hi << 32));
      return insn;
    }
  }
  throw ScanError(ErrKind::IllegalOpcode, "unreachable class");
}

inline Bytes encode(const Instruction& insn) {
  using namespace isa_detail;
  Bytes out(insn.size_slots * 8, 0);
  uint8_t opcode = 0;
  int32_t imm32 = static_cast<int32_t>(insn.imm);
  switch (insn.klass) {
    case InsnClass::ALU64:
    case InsnClass::ALU32: {
      opcode = (insn.klass == InsnClass::ALU64) ? kClassALU64 : kClassALU32;
      opcode |= static_cast<uint8_t>(alu_code(insn.alu_op) << 4);
      if (insn.alu_op == AluOp::END_BE)
        opcode |= kSrcReg;
      else if (insn.alu_op != AluOp::END_LE && insn.is_reg_src)
        opcode |= kSrcReg;
      break;
    }
    case InsnClass::JMP:
    case InsnClass::JMP32: {
      opcode = (insn.klass == InsnClass::JMP) ? kClassJMP : kClassJMP32;
      opcode |= static_cast<uint8_t>(jmp_code(insn.jmp_op) << 4);
      if (insn.is_reg_src) opcode |= kSrcReg;
      break;
    }
    case InsnClass::CALL: opcode = 0x85; break;
    case InsnClass::EXIT: opcode = 0x95; break;
    case InsnClass::LDX: opcode = 0x61 | size_bits(insn.width); break;
    case InsnClass::ST: opcode = 0x62 | size_bits(insn.width); break;
    case InsnClass::STX: opcode = 0x63 | size_bits(insn.width); break;
    case InsnClass::LD_IMM64: {
      out[0] = 0x18;
      out[1] = static_cast<uint8_t>(insn.dst & 0x0f);
      write_u32le(out.data() + 4, static_cast<uint32_t>(insn.imm & 0xffffffffull));
      write_u32le(out.data() + 12, static_cast<uint32_t>(static_cast<uint64_t>(insn.imm) >> 32));
      return out;
    }
  }
  if (insn.klass != InsnClass::LD_IMM64 && insn.imm != imm32)
    throw ScanError(ErrKind::Unencodable, "imm out of 32-bit range");
  out[0] = opcode;
  out[1] = static_cast<uint8_t>((insn.dst & 0x0f) | (insn.src << 4));
  write_u16le(out.data() + 2, static_cast<uint16_t>(insn.offset));
  write_u32le(out.data() + 4, static_cast<uint32_t>(imm32));
  return out;
}

inline bool is_terminator(const Instruction& insn) {
  return insn.klass == InsnClass::JMP || insn.klass == InsnClass::JMP32 ||
         insn.klass == InsnClass::EXIT;
}

inline bool is_branch(const Instruction& insn) {
  return (insn.klass == InsnClass::JMP || insn.klass == InsnClass::JMP32);
}

inline bool is_unconditional_jump(const Instruction& insn) {
  return insn.klass == InsnClass::JMP && insn.jmp_op == JmpOp::JA;
}

}  // namespace sbfscan
