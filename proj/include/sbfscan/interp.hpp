#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sbfscan/image.hpp"
#include "sbfscan/isa.hpp"
#include "sbfscan/memmap.hpp"

namespace sbfscan {

struct MemWrite {
  uint64_t addr;
  uint8_t width;
  uint64_t value;
  bool operator==(const MemWrite&) const = default;
};

enum class ExecOutcome { Exit, Abort, Fault, BudgetExhausted };

struct ExecResult {
  uint64_t r0_final = 0;
  uint64_t steps = 0;
  ExecOutcome outcome = ExecOutcome::Exit;
  FaultKind fault_kind = FaultKind::None;
  size_t fault_pc = 0;
  std::vector<MemWrite> memory_writes;
};

// Concrete reference interpreter. One instance per thread; deterministic
// given (image, input, handlers, budget). Serves as the differential oracle
// for the symbolic engine.
class Interpreter {
 public:
  using Handler = std::function<uint64_t(Interpreter&)>;
  using HandlerTable = std::map<std::string, Handler>;

  Interpreter(const ProgramImage& image, Bytes input_region, HandlerTable handlers,
              uint64_t budget)
      : image_(image),
        input_(std::move(input_region)),
        handlers_(std::move(handlers)),
        budget_(budget),
        stack_(mm::kFrameSize * mm::kMaxCallDepth, 0),
        heap_(mm::kHeapSize, 0) {
    regs_.fill(0);
    regs_[1] = mm::kInputBase;
    regs_[10] = mm::kStackBase + mm::kFrameSize;
  }

  ExecResult run() {
    ExecResult res;
    pc_ = image_.entry_offset;
    while (true) {
      if (res.steps >= budget_) {
        res.outcome = ExecOutcome::BudgetExhausted;
        break;
      }
      Instruction insn;
      try {
        insn = image_.decode_at(pc_);
      } catch (const ScanError&) {
        res.outcome = ExecOutcome::Fault;
        res.fault_kind = FaultKind::IllegalInsn;
        res.fault_pc = pc_;
        break;
      }
      ++res.steps;
      StepStatus st = exec_one(insn, &res);
      if (st != StepStatus::Continue) break;
    }
    res.r0_final = regs_[0];
    res.memory_writes = std::move(writes_);
    return res;
  }

  uint64_t reg(int i) const { return regs_[static_cast<size_t>(i)]; }
  void set_reg(int i, uint64_t v) { regs_[static_cast<size_t>(i)] = v; }

  // Memory access helpers, also used by syscall handlers. Return false on an
  // access fault.
  bool read(uint64_t addr, uint8_t width, uint64_t* out) {
    uint64_t v = 0;
    for (uint8_t i = 0; i < width; ++i) {
      uint8_t b;
      if (!read_byte(addr + i, &b)) return false;
      v |= static_cast<uint64_t>(b) << (8 * i);
    }
    *out = v;
    return true;
  }

  bool write(uint64_t addr, uint8_t width, uint64_t value) {
    for (uint8_t i = 0; i < width; ++i)
      if (!write_byte(addr + i, static_cast<uint8_t>(value >> (8 * i)))) return false;
    return true;
  }

  bool read_byte(uint64_t addr, uint8_t* out) {
    if (auto b = image_.byte_at(addr)) {
      *out = *b;
      return true;
    }
    if (addr >= mm::kInputBase && addr - mm::kInputBase < input_.size()) {
      *out = input_[addr - mm::kInputBase];
      return true;
    }
    if (addr >= mm::kStackBase && addr < stack_top()) {
      *out = stack_[addr - mm::kStackBase];
      return true;
    }
    if (addr >= mm::kHeapBase && addr - mm::kHeapBase < heap_.size()) {
      *out = heap_[addr - mm::kHeapBase];
      return true;
    }
    return false;
  }

  bool write_byte(uint64_t addr, uint8_t v) {
    if (addr >= mm::kInputBase && addr - mm::kInputBase < input_.size()) {
      input_[addr - mm::kInputBase] = v;
      return true;
    }
    if (addr >= mm::kStackBase && addr < stack_top()) {
      stack_[addr - mm::kStackBase] = v;
      return true;
    }
    if (addr >= mm::kHeapBase && addr - mm::kHeapBase < heap_.size()) {
      heap_[addr - mm::kHeapBase] = v;
      return true;
    }
    return false;
  }

  uint64_t heap_alloc(uint64_t size) {
    uint64_t addr = mm::kHeapBase + heap_cursor_;
    heap_cursor_ += (size + 7) & ~7ull;
    if (heap_cursor_ > heap_.size()) return 0;
    return addr;
  }

  void request_abort() { abort_requested_ = true; }

  const Bytes& input() const { return input_; }

 private:
  enum class StepStatus { Continue, Stop };

  uint64_t stack_top() const { return mm::kStackBase + (depth_ + 1) * mm::kFrameSize; }

  StepStatus fault(ExecResult* res, FaultKind kind) {
    res->outcome = ExecOutcome::Fault;
    res->fault_kind = kind;
    res->fault_pc = pc_;
    return StepStatus::Stop;
  }

  StepStatus exec_one(const Instruction& insn, ExecResult* res) {
    switch (insn.klass) {
      case InsnClass::ALU64:
      case InsnClass::ALU32: {
        bool is64 = insn.klass == InsnClass::ALU64;
        uint64_t a = regs_[insn.dst];
        uint64_t b = insn.is_reg_src ? regs_[insn.src] : static_cast<uint64_t>(insn.imm);
        if (!is64) {
          a &= 0xffffffffull;
          b &= 0xffffffffull;
        }
        uint64_t r = 0;
        switch (insn.alu_op) {
          case AluOp::ADD: r = a + b; break;
          case AluOp::SUB: r = a - b; break;
          case AluOp::MUL: r = a * b; break;
          case AluOp::DIV:
            if (b == 0) return fault(res, FaultKind::DivByZero);
            r = a / b;
            break;
          case AluOp::MOD:
            if (b == 0) return fault(res, FaultKind::DivByZero);
            r = a % b;
            break;
          case AluOp::OR: r = a | b; break;
          case AluOp::AND: r = a & b; break;
          case AluOp::XOR: r = a ^ b; break;
          case AluOp::LSH: r = a << (b & (is64 ? 63 : 31)); break;
          case AluOp::RSH: r = a >> (b & (is64 ? 63 : 31)); break;
          case AluOp::ARSH: {
            uint64_t sh = b & (is64 ? 63 : 31);
            if (is64) {
              r = static_cast<uint64_t>(static_cast<int64_t>(a) >> sh);
            } else {
              r = static_cast<uint64_t>(
                  static_cast<uint32_t>(static_cast<int32_t>(static_cast<uint32_t>(a)) >>
                                        static_cast<int>(sh)));
            }
            break;
          }
          case AluOp::NEG: r = ~a + 1; break;
          case AluOp::MOV: r = b; break;
          case AluOp::END_LE: {
            // Data is stored little-endian; le<w> masks to width.
            uint64_t mask = insn.imm == 16 ? 0xffffull : insn.imm == 32 ? 0xffffffffull : ~0ull;
            r = regs_[insn.dst] & mask;
            break;
          }
          case AluOp::END_BE: {
            uint64_t x = regs_[insn.dst];
            if (insn.imm == 16)
              r = ((x & 0xff) << 8) | ((x >> 8) & 0xff);
            else if (insn.imm == 32)
              r = __builtin_bswap32(static_cast<uint32_t>(x));
            else
              r = __builtin_bswap64(x);
            break;
          }
        }
        if (!is64 && insn.alu_op != AluOp::END_LE && insn.alu_op != AluOp::END_BE)
          r &= 0xffffffffull;
        regs_[insn.dst] = r;
        ++pc_;
        return StepStatus::Continue;
      }
      case InsnClass::LD_IMM64:
        regs_[insn.dst] = static_cast<uint64_t>(insn.imm);
        pc_ += 2;
        return StepStatus::Continue;
      case InsnClass::LDX: {
        uint64_t addr = regs_[insn.src] + static_cast<uint64_t>(static_cast<int64_t>(insn.offset));
        uint64_t v;
        if (!read(addr, insn.width, &v)) return fault(res, FaultKind::OutOfBounds);
        regs_[insn.dst] = v;
        ++pc_;
        return StepStatus::Continue;
      }
      case InsnClass::ST:
      case InsnClass::STX: {
        uint64_t addr = regs_[insn.dst] + static_cast<uint64_t>(static_cast<int64_t>(insn.offset));
        uint64_t v = insn.klass == InsnClass::ST ? static_cast<uint64_t>(insn.imm)
                                                 : regs_[insn.src];
        if (image_.byte_at(addr)) return fault(res, FaultKind::WriteToRodata);
        if (!write(addr, insn.width, v)) return fault(res, FaultKind::OutOfBounds);
        writes_.push_back({addr, insn.width, v & width_mask(insn.width)});
        ++pc_;
        return StepStatus::Continue;
      }
      case InsnClass::JMP:
      case InsnClass::JMP32: {
        bool is32 = insn.klass == InsnClass::JMP32;
        uint64_t a = regs_[insn.dst];
        uint64_t b = insn.is_reg_src ? regs_[insn.src] : static_cast<uint64_t>(insn.imm);
        if (is32) {
          a &= 0xffffffffull;
          b = insn.is_reg_src ? (b & 0xffffffffull)
                              : static_cast<uint64_t>(static_cast<uint32_t>(insn.imm));
        }
        bool taken;
        if (insn.jmp_op == JmpOp::JA) {
          taken = true;
        } else {
          taken = eval_cond(insn.jmp_op, a, b, is32);
        }
        pc_ = taken ? static_cast<size_t>(static_cast<int64_t>(pc_) + 1 + insn.offset) : pc_ + 1;
        if (pc_ >= image_.slot_count()) return fault(res, FaultKind::OutOfBounds);
        return StepStatus::Continue;
      }
      case InsnClass::CALL: {
        if (insn.src == 1) {
          if (depth_ + 1 >= mm::kMaxCallDepth) return fault(res, FaultKind::StackOverflow);
          int64_t target = static_cast<int64_t>(pc_) + 1 + insn.imm;
          if (target < 0 || static_cast<size_t>(target) >= image_.slot_count())
            return fault(res, FaultKind::OutOfBounds);
          call_stack_.push_back(pc_ + 1);
          ++depth_;
          regs_[10] = mm::kStackBase + (depth_ + 1) * mm::kFrameSize;
          pc_ = static_cast<size_t>(target);
          return StepStatus::Continue;
        }
        uint32_t hash = static_cast<uint32_t>(insn.imm);
        std::string name;
        auto it = image_.syscall_names.find(hash);
        if (it != image_.syscall_names.end()) {
          name = it->second;
        } else {
          auto git = syscall_hash_table().find(hash);
          if (git == syscall_hash_table().end()) return fault(res, FaultKind::BadCall);
          name = git->second;
        }
        auto hit = handlers_.find(name);
        if (hit == handlers_.end()) return fault(res, FaultKind::BadCall);
        abort_requested_ = false;
        regs_[0] = hit->second(*this);
        if (abort_requested_) {
          res->outcome = ExecOutcome::Abort;
          return StepStatus::Stop;
        }
        ++pc_;
        return StepStatus::Continue;
      }
      case InsnClass::EXIT: {
        if (call_stack_.empty()) {
          res->outcome = ExecOutcome::Exit;
          return StepStatus::Stop;
        }
        pc_ = call_stack_.back();
        call_stack_.pop_back();
        --depth_;
        regs_[10] = mm::kStackBase + (depth_ + 1) * mm::kFrameSize;
        return StepStatus::Continue;
      }
    }
    return fault(res, FaultKind::IllegalInsn);
  }

  static uint64_t width_mask(uint8_t width) {
    return width == 8 ? ~0ull : ((1ull << (8 * width)) - 1);
  }

  static bool eval_cond(JmpOp op, uint64_t a, uint64_t b, bool is32) {
    int64_t sa = is32 ? static_cast<int32_t>(static_cast<uint32_t>(a)) : static_cast<int64_t>(a);
    int64_t sb = is32 ? static_cast<int32_t>(static_cast<uint32_t>(b)) : static_cast<int64_t>(b);
    switch (op) {
      case JmpOp::JA: return true;
      case JmpOp::JEQ: return a == b;
      case JmpOp::JNE: return a != b;
      case JmpOp::JGT: return a > b;
      case JmpOp::JGE: return a >= b;
      case JmpOp::JLT: return a < b;
      case JmpOp::JLE: return a <= b;
      case JmpOp::JSGT: return sa > sb;
      case JmpOp::JSGE: return sa >= sb;
      case JmpOp::JSLT: return sa < sb;
      case JmpOp::JSLE: return sa <= sb;
      case JmpOp::JSET: return (a & b) != 0;
    }
    return false;
  }

  const ProgramImage& image_;
  Bytes input_;
  HandlerTable handlers_;
  uint64_t budget_;
  Bytes stack_;
  Bytes heap_;
  uint64_t heap_cursor_ = 0;
  std::array<uint64_t, 11> regs_{};
  size_t pc_ = 0;
  size_t depth_ = 0;
  std::vector<size_t> call_stack_;
  std::vector<MemWrite> writes_;
  bool abort_requested_ = false;
};

// Default concrete models for the runtime syscalls the corpus uses. CPI
// syscalls return 0 so differential runs line up with the symbolic engine's
// continue-past-CPI mode.
inline Interpreter::HandlerTable default_syscall_handlers() {
  Interpreter::HandlerTable t;
  auto noop = [](Interpreter&) -> uint64_t { return 0; };
  t["sol_log_"] = noop;
  t["sol_log_64_"] = noop;
  t["sol_log_pubkey"] = noop;
  t["sol_log_compute_units_"] = noop;
  t["sol_log_data"] = noop;
  t["sol_set_return_data"] = noop;
  t["sol_invoke_signed_c"] = noop;
  t["sol_invoke_signed_rust"] = noop;
  t["abort"] = [](Interpreter& vm) -> uint64_t {
    vm.request_abort();
    return 0;
  };
  t["sol_panic_"] = t["abort"];
  t["sol_memcpy_"] = [](Interpreter& vm) -> uint64_t {
    uint64_t dst = vm.reg(1), src = vm.reg(2), n = vm.reg(3);
    for (uint64_t i = 0; i < n; ++i) {
      uint8_t b;
      if (!vm.read_byte(src + i, &b) || !vm.write_byte(dst + i, b)) break;
    }
    return 0;
  };
  t["sol_memmove_"] = t["sol_memcpy_"];
  t["sol_memset_"] = [](Interpreter& vm) -> uint64_t {
    uint64_t dst = vm.reg(1), n = vm.reg(3);
    uint8_t v = static_cast<uint8_t>(vm.reg(2));
    for (uint64_t i = 0; i < n; ++i)
      if (!vm.write_byte(dst + i, v)) break;
    return 0;
  };
  t["sol_memcmp_"] = [](Interpreter& vm) -> uint64_t {
    uint64_t a = vm.reg(1), b = vm.reg(2), n = vm.reg(3), out = vm.reg(4);
    int32_t result = 0;
    for (uint64_t i = 0; i < n; ++i) {
      uint8_t x = 0, y = 0;
      vm.read_byte(a + i, &x);
      vm.read_byte(b + i, &y);
      if (x != y) {
        result = static_cast<int32_t>(x) - static_cast<int32_t>(y);
        break;
      }
    }
    vm.write(out, 4, static_cast<uint32_t>(result));
    return 0;
  };
  t["sol_alloc_free_"] = [](Interpreter& vm) -> uint64_t {
    if (vm.reg(2) != 0) return 0;  // free is a no-op in the bump allocator
    return vm.heap_alloc(vm.reg(1));
  };
  return t;
}

// Run a program image with the default handler set.
inline ExecResult interpret(const ProgramImage& image, Bytes input_region,
                            Interpreter::HandlerTable handlers, uint64_t budget) {
  Interpreter vm(image, std::move(input_region), std::move(handlers), budget);
  return vm.run();
}

}  // namespace sbfscan
