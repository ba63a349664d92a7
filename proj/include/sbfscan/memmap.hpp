#pragma once

#include <cstdint>

namespace sbfscan {

// Virtual memory map used by both the concrete interpreter and the symbolic
// engine. Matches the ecosystem VM's region bases.
namespace mm {
constexpr uint64_t kStackBase = 0x200000000ull;
constexpr uint64_t kHeapBase = 0x300000000ull;
constexpr uint64_t kInputBase = 0x400000000ull;
constexpr uint64_t kFrameSize = 4096;
constexpr uint64_t kMaxCallDepth = 64;
constexpr uint64_t kHeapSize = 0x8000;
}  // namespace mm

enum class FaultKind {
  None,
  OutOfBounds,
  DivByZero,
  BadCall,
  StackOverflow,
  IllegalInsn,
  WriteToRodata,
  UnresolvedPointer,
  LoopBound,
};

inline const char* fault_kind_name(FaultKind k) {
  switch (k) {
    case FaultKind::None: return "none";
    case FaultKind::OutOfBounds: return "out-of-bounds";
    case FaultKind::DivByZero: return "div-by-zero";
    case FaultKind::BadCall: return "bad-call";
    case FaultKind::StackOverflow: return "stack-overflow";
    case FaultKind::IllegalInsn: return "illegal-insn";
    case FaultKind::WriteToRodata: return "write-to-rodata";
    case FaultKind::UnresolvedPointer: return "unresolved-pointer";
    case FaultKind::LoopBound: return "loop-bound";
  }
  return "?";
}

}  // namespace sbfscan
