#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sbfscan/cfg.hpp"
#include "sbfscan/expr.hpp"
#include "sbfscan/image.hpp"
#include "sbfscan/interp.hpp"
#include "sbfscan/memmap.hpp"
#include "sbfscan/solver.hpp"
#include "sbfscan/state.hpp"
#include "sbfscan/syscalls.hpp"

namespace sbfscan {

struct ExplorationConfig {
  double per_contract_timeout_secs = 1800.0;
  size_t max_states = 4096;
  uint64_t step_budget = 1 << 20;  // per path
  uint32_t loop_bound = 64;
  uint64_t accounts_min = 1;
  uint64_t accounts_max = 8;
  uint64_t data_len_per_account = 1024;
  uint64_t instr_data_len = 256;
  int pointer_fanout = 4;
  std::set<std::string> cpi_syscalls = default_cpi_syscalls();
  bool no_prune = false;
  bool stop_at_cpi = true;  // false: CPI returns 0 and the path continues
  bool trace = false;
  std::ostream* trace_out = nullptr;
  uint64_t solver_conflict_budget = 200000;
};

enum class CpiAbi { C, Rust };

inline const char* cpi_abi_name(CpiAbi a) { return a == CpiAbi::C ? "c" : "rust"; }

struct CpiObservation {
  size_t callsite = 0;
  CpiAbi abi = CpiAbi::C;
  ExprRef target;                   // 256-bit program id, null on parse failure
  std::set<Origin> target_origins;
  std::vector<ExprRef> constraints;
  Journal journal;
  uint64_t account_count = 0;
  bool abi_parse_failed = false;
  std::string diagnostic;
};

struct ExploreStats {
  uint64_t states_explored = 0;
  uint64_t states_pruned = 0;
  uint64_t paths_completed = 0;
  bool timeout_hit = false;
  bool state_cap_hit = false;
  std::map<std::string, uint64_t> faults;           // fault kind -> count
  std::map<std::string, uint64_t> unknown_syscalls;  // name -> count
};

enum class Guide { GuideToSite, GuideToCallee, GuideToReturn, Prune };

enum class PathEnd { Running, Exit, Abort, Fault, Budget, CpiStop };

struct PathState {
  MachineState m;
  std::vector<int> fn_stack;  // function index per live frame; -1 = unknown
  std::vector<MemWrite> writes;  // concrete store log (differential oracle)
  PathEnd end = PathEnd::Running;
};

namespace explore_detail {

struct Ctx {
  const ProgramImage& image;
  const ExplorationConfig& config;
  Solver solver;
  ExploreStats* stats;
  std::vector<CpiObservation>* observations;

  Ctx(const ProgramImage& img, const ExplorationConfig& cfg, ExploreStats* st,
      std::vector<CpiObservation>* obs)
      : image(img), config(cfg), solver(cfg.solver_conflict_budget), stats(st),
        observations(obs) {}
};

inline void trace_line(Ctx& ctx, const PathState& ps, const std::string& what) {
  if (!ctx.config.trace) return;
  std::ostream& os = ctx.config.trace_out ? *ctx.config.trace_out : std::cerr;
  os << "pc=" << ps.m.pc << " depth=" << ps.m.call_depth() << " " << what << "\n";
}

inline void end_path(Ctx& ctx, PathState& ps, PathEnd end) {
  ps.end = end;
  ++ctx.stats->paths_completed;
  if (end == PathEnd::Fault) ++ctx.stats->faults[fault_kind_name(ps.m.fault)];
  if (end == PathEnd::Budget) ++ctx.stats->faults["step_budget"];
}

inline void fault_path(Ctx& ctx, PathState& ps, FaultKind kind) {
  ps.m.set_fault(kind);
  end_path(ctx, ps, PathEnd::Fault);
}

// Feasible concrete values of e under the path condition, up to
// config.pointer_fanout. Faults UnresolvedPointer past the fanout or on an
// inconclusive solver answer.
inline std::vector<uint64_t> concretize(Ctx& ctx, PathState& ps, const ExprRef& e) {
  if (e->is_const()) return {e->cval};
  Solver::Session s = ctx.solver.open(ps.m.constraints, e);
  if (s.verdict.unsat()) {
    fault_path(ctx, ps, FaultKind::UnresolvedPointer);
    return {};
  }
  std::vector<uint64_t> vals;
  ExprRef rewritten = s.presolver.apply(e);
  int fanout = ctx.config.pointer_fanout;
  while (static_cast<int>(vals.size()) <= fanout) {
    if (s.verdict.unknown()) {
      fault_path(ctx, ps, FaultKind::UnresolvedPointer);
      return {};
    }
    vals.push_back(ctx.solver.model_of(s, e).low());
    if (rewritten->is_const()) return vals;
    s.bb->block_value(rewritten, WideVal::of(rewritten->width, vals.back()));
    if (ctx.solver.recheck(s).unsat()) return vals;
  }
  fault_path(ctx, ps, FaultKind::UnresolvedPointer);
  return {};
}

// Single representative value (first enumerated model); adds no constraint.
inline std::optional<uint64_t> concretize_one(Ctx& ctx, PathState& ps, const ExprRef& e) {
  if (e->is_const()) return e->cval;
  Solver::Session s = ctx.solver.open(ps.m.constraints, e);
  if (!s.verdict.sat()) {
    fault_path(ctx, ps, FaultKind::UnresolvedPointer);
    return std::nullopt;
  }
  return ctx.solver.model_of(s, e).low();
}

inline ExprRef reg32(const MachineState& m, uint8_t r) { return mk_extract(m.regs[r], 31, 0); }

inline ExprRef alu_operand(const MachineState& m, const Instruction& insn, bool is64) {
  if (insn.is_reg_src) return is64 ? m.regs[insn.src] : reg32(m, insn.src);
  uint64_t imm = static_cast<uint64_t>(insn.imm);
  return is64 ? mk_const(64, imm) : mk_const(32, imm & 0xffffffffull);
}

inline ExprRef byte_swap(const ExprRef& x, int bytes) {
  // Result: the low `bytes` bytes of x in reversed order, zero-extended to 64.
  ExprRef acc = extract_byte(x, static_cast<uint16_t>(bytes - 1));
  for (int i = bytes - 2; i >= 0; --i) acc = mk_concat(extract_byte(x, static_cast<uint16_t>(i)), acc);
  return mk_zext(acc, 64);
}

inline ExprRef jump_condition(const MachineState& m, const Instruction& insn) {
  bool is32 = insn.klass == InsnClass::JMP32;
  ExprRef a = is32 ? reg32(m, insn.dst) : m.regs[insn.dst];
  ExprRef b;
  if (insn.is_reg_src)
    b = is32 ? reg32(m, insn.src) : m.regs[insn.src];
  else
    b = is32 ? mk_const(32, static_cast<uint32_t>(insn.imm))
             : mk_const(64, static_cast<uint64_t>(insn.imm));
  switch (insn.jmp_op) {
    case JmpOp::JA: return mk_bool(true);
    case JmpOp::JEQ: return mk_eq(a, b);
    case JmpOp::JNE: return mk_ne(a, b);
    case JmpOp::JGT: return mk_binop(ExprKind::CmpULt, b, a);
    case JmpOp::JGE: return mk_binop(ExprKind::CmpULe, b, a);
    case JmpOp::JLT: return mk_binop(ExprKind::CmpULt, a, b);
    case JmpOp::JLE: return mk_binop(ExprKind::CmpULe, a, b);
    case JmpOp::JSGT: return mk_binop(ExprKind::CmpSLt, b, a);
    case JmpOp::JSGE: return mk_binop(ExprKind::CmpSLe, b, a);
    case JmpOp::JSLT: return mk_binop(ExprKind::CmpSLt, a, b);
    case JmpOp::JSLE: return mk_binop(ExprKind::CmpSLe, a, b);
    case JmpOp::JSET:
      return mk_ne(mk_binop(ExprKind::And, a, b), mk_const(a->width, 0));
  }
  return mk_bool(false);
}

// Counts a taken jump edge; terminates the path past the loop bound.
inline bool count_back_edge(Ctx& ctx, PathState& ps, size_t from, size_t to) {
  if (to > from) return true;
  uint64_t key = (static_cast<uint64_t>(from) << 32) | static_cast<uint64_t>(to);
  uint32_t& n = ps.m.back_edge_counts[key];
  if (++n > ctx.config.loop_bound) {
    fault_path(ctx, ps, FaultKind::LoopBound);
    return false;
  }
  return true;
}

struct TargetExtraction {
  bool ok = false;
  ExprRef target;  // 256-bit
  std::string diag;
};

// Reads the 32-byte CPI program id from the instruction descriptor: C ABI
// stores a pointer to it at descriptor offset 0, the Rust stable ABI inlines
// it at offset 48.
inline TargetExtraction extract_call_target(Ctx& ctx, PathState& ps, CpiAbi abi) {
  TargetExtraction out;
  FaultKind saved_fault = ps.m.fault;
  auto bail = [&](const std::string& why) {
    ps.m.fault = saved_fault;  // extraction failures do not fault the path
    out.ok = false;
    out.diag = why;
    return out;
  };
  auto desc = concretize_one(ctx, ps, ps.m.regs[1]);
  if (!desc) return bail("instruction descriptor pointer not concretizable");
  uint64_t id_addr = 0;
  if (abi == CpiAbi::C) {
    ExprRef p = read_mem(ps.m, *desc, 8);
    if (ps.m.fault != saved_fault) return bail("descriptor out of bounds");
    auto pv = concretize_one(ctx, ps, p);
    if (!pv) return bail("program id pointer not concretizable");
    id_addr = *pv;
  } else {
    id_addr = *desc + 48;
  }
  std::vector<ExprRef> bytes;
  for (unsigned i = 0; i < 32; ++i) {
    auto b = try_read_byte(ps.m, id_addr + i);
    if (!b) return bail("program id bytes out of bounds");
    bytes.push_back(*b);
  }
  out.ok = true;
  out.target = concat_bytes_le(bytes);
  return out;
}

inline void emit_observation(Ctx& ctx, PathState& ps, size_t callsite, CpiAbi abi) {
  CpiObservation obs;
  obs.callsite = callsite;
  obs.abi = abi;
  obs.account_count = ps.m.layout.account_count;
  obs.constraints = ps.m.constraints;
  obs.journal = ps.m.journal;
  TargetExtraction t = extract_call_target(ctx, ps, abi);
  if (t.ok) {
    obs.target = t.target;
    obs.target_origins = origins(t.target);
  } else {
    obs.abi_parse_failed = true;
    obs.diagnostic = t.diag;
  }
  ctx.observations->push_back(std::move(obs));
}

// Byte-level copy mirroring the reference interpreter's sol_memcpy_: stops at
// the first invalid byte without faulting.
inline void model_memcpy(PathState& ps, uint64_t dst, uint64_t src, uint64_t n) {
  for (uint64_t i = 0; i < n; ++i) {
    auto b = try_read_byte(ps.m, src + i);
    if (!b || !try_write_byte(ps.m, dst + i, *b)) break;
  }
}

inline void write_derived_bytes(PathState& ps, uint64_t addr, unsigned count) {
  int id = ps.m.derived_counter++;
  for (unsigned i = 0; i < count; ++i)
    try_write_byte(ps.m, addr + i,
                   mk_input({Origin::Src::Derived, -1, Origin::Field::None,
                             static_cast<int>(i), id}));
}

// Applies one syscall model. Returns false when the path ended.
inline bool model_syscall(Ctx& ctx, PathState& ps, const std::string& name) {
  MachineState& m = ps.m;
  auto set_r0 = [&](uint64_t v) { m.regs[0] = mk_const(64, v); };

  static const std::set<std::string> noops = {
      "sol_log_", "sol_log_64_", "sol_log_pubkey", "sol_log_compute_units_",
      "sol_log_data", "sol_set_return_data"};
  if (noops.count(name)) {
    set_r0(0);
    return true;
  }
  if (name == "abort" || name == "sol_panic_") {
    end_path(ctx, ps, PathEnd::Abort);
    return false;
  }
  if (ctx.config.cpi_syscalls.count(name)) {
    CpiAbi abi = name == "sol_invoke_signed_rust" ? CpiAbi::Rust : CpiAbi::C;
    emit_observation(ctx, ps, m.pc, abi);
    if (ctx.config.stop_at_cpi) {
      end_path(ctx, ps, PathEnd::CpiStop);
      return false;
    }
    set_r0(0);
    return true;
  }
  if (name == "sol_memcpy_" || name == "sol_memmove_") {
    auto dst = concretize_one(ctx, ps, m.regs[1]);
    auto src = concretize_one(ctx, ps, m.regs[2]);
    auto n = concretize_one(ctx, ps, m.regs[3]);
    if (!dst || !src || !n) return false;
    model_memcpy(ps, *dst, *src, *n);
    set_r0(0);
    return true;
  }
  if (name == "sol_memset_") {
    auto dst = concretize_one(ctx, ps, m.regs[1]);
    auto n = concretize_one(ctx, ps, m.regs[3]);
    if (!dst || !n) return false;
    ExprRef v = extract_byte(m.regs[2], 0);
    for (uint64_t i = 0; i < *n; ++i)
      if (!try_write_byte(m, *dst + i, v)) break;
    set_r0(0);
    return true;
  }
  if (name == "sol_memcmp_") {
    auto a = concretize_one(ctx, ps, m.regs[1]);
    auto b = concretize_one(ctx, ps, m.regs[2]);
    auto n = concretize_one(ctx, ps, m.regs[3]);
    auto out = concretize_one(ctx, ps, m.regs[4]);
    if (!a || !b || !n || !out) return false;
    ExprRef result = mk_const(32, 0);
    for (uint64_t i = *n; i-- > 0;) {
      auto xb = try_read_byte(m, *a + i);
      auto yb = try_read_byte(m, *b + i);
      ExprRef x = xb ? *xb : mk_const(8, 0);
      ExprRef y = yb ? *yb : mk_const(8, 0);
      result = mk_ite(mk_eq(x, y), result, mk_sub(mk_zext(x, 32), mk_zext(y, 32)));
    }
    write_mem(m, *out, 4, mk_zext(result, 64));
    m.fault = FaultKind::None;  // mirror the interpreter: cmp write never traps
    set_r0(0);
    return true;
  }
  if (name == "sol_alloc_free_") {
    auto free_addr = concretize_one(ctx, ps, m.regs[2]);
    if (!free_addr) return false;
    if (*free_addr != 0) {
      set_r0(0);
      return true;
    }
    auto size = concretize_one(ctx, ps, m.regs[1]);
    if (!size) return false;
    uint64_t addr = m.heap_next;
    m.heap_next += (*size + 7) & ~7ull;
    set_r0(m.heap_next - mm::kHeapBase > mm::kHeapSize ? 0 : addr);
    return true;
  }
  if (name == "sol_sha256" || name == "sol_keccak256" || name == "sol_blake3") {
    auto out = concretize_one(ctx, ps, m.regs[3]);
    if (!out) return false;
    write_derived_bytes(ps, *out, 32);
    set_r0(0);
    return true;
  }
  if (name == "sol_create_program_address" || name == "sol_try_find_program_address") {
    auto out = concretize_one(ctx, ps, m.regs[4]);
    if (!out) return false;
    write_derived_bytes(ps, *out, 32);
    if (name == "sol_try_find_program_address") {
      auto bump = concretize_one(ctx, ps, m.regs[5]);
      if (!bump) return false;
      try_write_byte(m, *bump,
                     mk_input({Origin::Src::Derived, -1, Origin::Field::None, 0,
                               m.derived_counter++}));
    }
    set_r0(0);
    return true;
  }
  // Known name, no model: fresh unconstrained result, path continues.
  ++ctx.stats->unknown_syscalls[name];
  m.regs[0] =
      mk_input({Origin::Src::Derived, -1, Origin::Field::None, 0, m.derived_counter++}, 64);
  return true;
}

// Executes the instruction at ps.m.pc. All successors are appended to `out`,
// including ended paths (end != Running), which are already tallied in stats
// (and, for CPI stops, recorded in observations).
inline void step(Ctx& ctx, PathState ps, std::vector<PathState>& out) {
  MachineState& m = ps.m;
  Instruction insn;
  try {
    insn = ctx.image.decode_at(m.pc);
  } catch (const ScanError&) {
    fault_path(ctx, ps, FaultKind::IllegalInsn);
    out.push_back(std::move(ps));
    return;
  }
  ++m.journal.step_count;
  ++ctx.stats->states_explored;

  switch (insn.klass) {
    case InsnClass::ALU64:
    case InsnClass::ALU32: {
      bool is64 = insn.klass == InsnClass::ALU64;
      uint16_t w = is64 ? 64 : 32;
      ExprRef a = is64 ? m.regs[insn.dst] : reg32(m, insn.dst);
      ExprRef b = alu_operand(m, insn, is64);
      ExprRef r;
      switch (insn.alu_op) {
        case AluOp::ADD: r = mk_binop(ExprKind::Add, a, b); break;
        case AluOp::SUB: r = mk_binop(ExprKind::Sub, a, b); break;
        case AluOp::MUL: r = mk_binop(ExprKind::Mul, a, b); break;
        case AluOp::DIV:
        case AluOp::MOD: {
          ExprRef zero_cond = mk_eq(b, mk_const(w, 0));
          if (zero_cond->is_const()) {
            if (zero_cond->cval) {
              fault_path(ctx, ps, FaultKind::DivByZero);
              out.push_back(std::move(ps));
              return;
            }
          } else {
            Verdict can_zero = ctx.solver.check([&] {
              auto c = m.constraints;
              c.push_back(zero_cond);
              return c;
            }());
            if (!can_zero.unsat()) {
              PathState faulted = ps;
              faulted.m.constraints.push_back(zero_cond);
              fault_path(ctx, faulted, FaultKind::DivByZero);
              out.push_back(std::move(faulted));
              m.constraints.push_back(mk_not(zero_cond));
              Verdict nz = ctx.solver.check(m.constraints);
              if (nz.unsat()) return;  // divisor provably zero: only the fault arm
            }
          }
          r = mk_binop(insn.alu_op == AluOp::DIV ? ExprKind::Div : ExprKind::Mod, a, b);
          break;
        }
        case AluOp::OR: r = mk_binop(ExprKind::Or, a, b); break;
        case AluOp::AND: r = mk_binop(ExprKind::And, a, b); break;
        case AluOp::XOR: r = mk_binop(ExprKind::Xor, a, b); break;
        case AluOp::LSH:
        case AluOp::RSH:
        case AluOp::ARSH: {
          ExprRef amt = mk_binop(ExprKind::And, b, mk_const(w, is64 ? 63 : 31));
          ExprKind k = insn.alu_op == AluOp::LSH ? ExprKind::Shl
                       : insn.alu_op == AluOp::RSH ? ExprKind::LShr
                                                   : ExprKind::AShr;
          r = mk_binop(k, a, amt);
          break;
        }
        case AluOp::NEG: r = mk_neg(a); break;
        case AluOp::MOV: r = b; break;
        case AluOp::END_LE: {
          uint64_t mask = insn.imm == 16 ? 0xffffull : insn.imm == 32 ? 0xffffffffull : ~0ull;
          m.regs[insn.dst] = mk_binop(ExprKind::And, m.regs[insn.dst], mk_const(64, mask));
          ++m.pc;
          out.push_back(std::move(ps));
          return;
        }
        case AluOp::END_BE: {
          m.regs[insn.dst] = byte_swap(m.regs[insn.dst], static_cast<int>(insn.imm / 8));
          ++m.pc;
          out.push_back(std::move(ps));
          return;
        }
      }
      m.regs[insn.dst] = is64 ? r : mk_zext(r, 64);
      ++m.pc;
      out.push_back(std::move(ps));
      return;
    }
    case InsnClass::LD_IMM64:
      m.regs[insn.dst] = mk_const(64, static_cast<uint64_t>(insn.imm));
      m.pc += 2;
      out.push_back(std::move(ps));
      return;
    case InsnClass::LDX: {
      ExprRef addr = mk_add(m.regs[insn.src],
                            mk_const(64, static_cast<uint64_t>(static_cast<int64_t>(insn.offset))));
      std::vector<uint64_t> vals = concretize(ctx, ps, addr);
      if (vals.empty()) {
        out.push_back(std::move(ps));
        return;
      }
      for (size_t i = 0; i < vals.size(); ++i) {
        PathState child = (i + 1 == vals.size()) ? std::move(ps) : ps;
        if (!addr->is_const())
          child.m.constraints.push_back(mk_eq(addr, mk_const(64, vals[i])));
        ExprRef v = read_mem(child.m, vals[i], insn.width);
        if (child.m.fault != FaultKind::None) {
          end_path(ctx, child, PathEnd::Fault);
          out.push_back(std::move(child));
          continue;
        }
        child.m.regs[insn.dst] = mk_zext(v, 64);
        ++child.m.pc;
        out.push_back(std::move(child));
      }
      return;
    }
    case InsnClass::ST:
    case InsnClass::STX: {
      ExprRef addr = mk_add(m.regs[insn.dst],
                            mk_const(64, static_cast<uint64_t>(static_cast<int64_t>(insn.offset))));
      ExprRef value = insn.klass == InsnClass::ST
                          ? mk_const(64, static_cast<uint64_t>(insn.imm))
                          : m.regs[insn.src];
      std::vector<uint64_t> vals = concretize(ctx, ps, addr);
      if (vals.empty()) {
        out.push_back(std::move(ps));
        return;
      }
      for (size_t i = 0; i < vals.size(); ++i) {
        PathState child = (i + 1 == vals.size()) ? std::move(ps) : ps;
        if (!addr->is_const())
          child.m.constraints.push_back(mk_eq(addr, mk_const(64, vals[i])));
        write_mem(child.m, vals[i], insn.width, value);
        if (child.m.fault != FaultKind::None) {
          end_path(ctx, child, PathEnd::Fault);
          out.push_back(std::move(child));
          continue;
        }
        if (value->is_const()) {
          uint64_t mask = insn.width == 8 ? ~0ull : ((1ull << (8 * insn.width)) - 1);
          child.writes.push_back({vals[i], insn.width, value->cval & mask});
        }
        ++child.m.pc;
        out.push_back(std::move(child));
      }
      return;
    }
    case InsnClass::JMP:
    case InsnClass::JMP32: {
      size_t slot = m.pc;
      size_t target = static_cast<size_t>(static_cast<int64_t>(slot) + 1 + insn.offset);
      auto land = [&](PathState child, size_t to) {
        child.m.pc = to;
        if (to >= ctx.image.slot_count()) fault_path(ctx, child, FaultKind::OutOfBounds);
        out.push_back(std::move(child));
      };
      if (insn.jmp_op == JmpOp::JA) {
        if (!count_back_edge(ctx, ps, slot, target)) {
          out.push_back(std::move(ps));
          return;
        }
        land(std::move(ps), target);
        return;
      }
      ExprRef cond = jump_condition(m, insn);
      if (cond->is_const()) {
        if (cond->cval) {
          if (!count_back_edge(ctx, ps, slot, target)) {
            out.push_back(std::move(ps));
            return;
          }
          land(std::move(ps), target);
        } else {
          land(std::move(ps), slot + 1);
        }
        return;
      }
      auto [taken, fall] = fork(m, cond);
      PathState t = ps, f = std::move(ps);
      t.m = std::move(taken);
      f.m = std::move(fall);
      bool t_ok = !ctx.solver.check(t.m.constraints).unsat();
      bool f_ok = !ctx.solver.check(f.m.constraints).unsat();
      if (t_ok) {
        if (count_back_edge(ctx, t, slot, target))
          land(std::move(t), target);
        else
          out.push_back(std::move(t));
      }
      if (f_ok) land(std::move(f), slot + 1);
      return;
    }
    case InsnClass::CALL: {
      if (insn.src == 1) {
        if (m.call_depth() + 1 >= mm::kMaxCallDepth) {
          fault_path(ctx, ps, FaultKind::StackOverflow);
          out.push_back(std::move(ps));
          return;
        }
        int64_t target = static_cast<int64_t>(m.pc) + 1 + insn.imm;
        if (target < 0 || static_cast<size_t>(target) >= ctx.image.slot_count()) {
          fault_path(ctx, ps, FaultKind::OutOfBounds);
          out.push_back(std::move(ps));
          return;
        }
        m.call_stack.push_back({m.pc + 1});
        ps.fn_stack.push_back(-1);  // resolved by the caller via the cfg
        m.regs[10] = mk_const(64, m.frame_top());
        m.pc = static_cast<size_t>(target);
        out.push_back(std::move(ps));
        return;
      }
      uint32_t hash = static_cast<uint32_t>(insn.imm);
      std::string name;
      auto it = ctx.image.syscall_names.find(hash);
      if (it != ctx.image.syscall_names.end()) {
        name = it->second;
      } else {
        auto git = syscall_hash_table().find(hash);
        if (git == syscall_hash_table().end()) {
          fault_path(ctx, ps, FaultKind::BadCall);
          out.push_back(std::move(ps));
          return;
        }
        name = git->second;
      }
      trace_line(ctx, ps, "syscall " + name);
      if (!model_syscall(ctx, ps, name)) {
        out.push_back(std::move(ps));
        return;
      }
      ++m.pc;
      out.push_back(std::move(ps));
      return;
    }
    case InsnClass::EXIT: {
      if (m.call_stack.empty()) {
        end_path(ctx, ps, PathEnd::Exit);
        out.push_back(std::move(ps));
        return;
      }
      m.pc = m.call_stack.back().return_pc;
      m.call_stack.pop_back();
      ps.fn_stack.pop_back();
      m.regs[10] = mk_const(64, m.frame_top());
      out.push_back(std::move(ps));
      return;
    }
  }
  fault_path(ctx, ps, FaultKind::IllegalInsn);
  out.push_back(std::move(ps));
}

}  // namespace explore_detail

// §-style guidance: toward an in-function CPI site, toward a callee that
// reaches one, toward a return whose caller reaches one — otherwise prune.
inline Guide should_continue(const PathState& ps, const Cfg& cfg, const CpiReachability& reach,
                             const std::set<int>& site_functions) {
  int block = cfg.block_containing(ps.m.pc);
  bool in_reach = block >= 0 && reach.block_reaches.count(static_cast<size_t>(block)) > 0;
  int cur_fn = ps.fn_stack.empty() ? -1 : ps.fn_stack.back();
  if (in_reach && cur_fn >= 0 && site_functions.count(cur_fn)) return Guide::GuideToSite;
  if (in_reach) return Guide::GuideToCallee;
  for (size_t i = ps.m.call_stack.size(); i-- > 0;) {
    int rb = cfg.block_containing(ps.m.call_stack[i].return_pc);
    if (rb >= 0 && reach.block_reaches.count(static_cast<size_t>(rb))) return Guide::GuideToReturn;
  }
  return Guide::Prune;
}

struct ExploreResult {
  std::vector<CpiObservation> observations;
  ExploreStats stats;
};

inline ExploreResult explore(const ProgramImage& image, const Cfg& cfg,
                             const CpiReachability& reach, const ExplorationConfig& config) {
  using namespace explore_detail;
  ExploreResult result;
  Ctx ctx(image, config, &result.stats, &result.observations);

  // Functions that directly contain a CPI callsite.
  std::set<int> site_functions;
  for (size_t site : reach.cpi_sites) {
    int b = cfg.block_containing(site);
    if (b < 0) continue;
    for (size_t f = 0; f < cfg.functions.size(); ++f)
      for (size_t fb : cfg.functions[f].blocks)
        if (fb == static_cast<size_t>(b)) site_functions.insert(static_cast<int>(f));
  }
  auto fn_of_entry = [&](size_t slot) -> int {
    auto it = cfg.function_of_entry.find(slot);
    return it == cfg.function_of_entry.end() ? -1 : static_cast<int>(it->second);
  };

  auto start = std::chrono::steady_clock::now();
  auto expired = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >
           config.per_contract_timeout_secs;
  };

  for (uint64_t accounts = config.accounts_min; accounts <= config.accounts_max; ++accounts) {
    PathState init;
    try {
      init.m = init_state(image, accounts, config.data_len_per_account, config.instr_data_len);
    } catch (const ScanError&) {
      continue;
    }
    init.fn_stack.push_back(fn_of_entry(image.entry_offset));

    // Buckets in guidance-priority order; FIFO within a bucket.
    std::array<std::deque<PathState>, 4> buckets;
    auto enqueue = [&](PathState ps) {
      if (ps.end != PathEnd::Running) return;  // already tallied by step()
      // Resolve the function of a just-entered frame lazily.
      if (!ps.fn_stack.empty() && ps.fn_stack.back() == -1) {
        int f = fn_of_entry(ps.m.pc);
        ps.fn_stack.back() = f;
      }
      Guide g = should_continue(ps, cfg, reach, site_functions);
      if (g == Guide::Prune && !config.no_prune) {
        ++result.stats.states_pruned;
        return;
      }
      buckets[static_cast<size_t>(g)].push_back(std::move(ps));
    };
    enqueue(std::move(init));

    bool stop = false;
    while (!stop) {
      PathState cur;
      bool found = false;
      for (auto& b : buckets)
        if (!b.empty()) {
          cur = std::move(b.front());
          b.pop_front();
          found = true;
          break;
        }
      if (!found) break;
      if (expired()) {
        result.stats.timeout_hit = true;
        return result;
      }
      if (result.stats.states_explored >= config.max_states) {
        result.stats.state_cap_hit = true;
        stop = true;
        break;
      }
      if (cur.m.journal.step_count >= config.step_budget) {
        end_path(ctx, cur, PathEnd::Budget);
        continue;
      }
      std::vector<PathState> succ;
      step(ctx, std::move(cur), succ);
      for (auto& s : succ) enqueue(std::move(s));
    }
    if (result.stats.state_cap_hit) break;
  }
  return result;
}

// Drives the symbolic stepper over a fully concrete input, producing the same
// observable record as the reference interpreter (differential harness).
inline ExecResult run_symbolic_concrete(const ProgramImage& image, const InputLayout& layout,
                                        const Bytes& input_region, uint64_t budget) {
  using namespace explore_detail;
  ExplorationConfig config;
  config.stop_at_cpi = false;
  ExploreStats stats;
  std::vector<CpiObservation> observations;
  Ctx ctx(image, config, &stats, &observations);

  PathState ps;
  ps.m = init_state(image, layout.account_count, layout.accounts.empty()
                                                     ? 0
                                                     : layout.accounts[0].data_len,
                    layout.instr_data_len);
  ps.fn_stack.push_back(-1);
  for (uint64_t off = 0; off < layout.total_size && off < input_region.size(); ++off)
    ps.m.memory[mm::kInputBase + off] = mk_const(8, input_region[off]);

  ExecResult res;
  bool budget_hit = false;
  while (ps.end == PathEnd::Running) {
    if (ps.m.journal.step_count >= budget) {
      budget_hit = true;
      break;
    }
    std::vector<PathState> succ;
    step(ctx, std::move(ps), succ);
    if (succ.size() != 1)
      throw ScanError(ErrKind::CapExceeded, "concrete run forked unexpectedly");
    ps = std::move(succ[0]);
  }

  Evaluator zero_model([](const Origin&) -> uint64_t { return 0; });
  res.r0_final = zero_model.eval(ps.m.regs[0]).low();
  res.steps = ps.m.journal.step_count;
  res.memory_writes = std::move(ps.writes);
  if (budget_hit) {
    res.outcome = ExecOutcome::BudgetExhausted;
    return res;
  }
  switch (ps.end) {
    case PathEnd::Exit: res.outcome = ExecOutcome::Exit; break;
    case PathEnd::Abort: res.outcome = ExecOutcome::Abort; break;
    case PathEnd::Budget: res.outcome = ExecOutcome::BudgetExhausted; break;
    case PathEnd::Fault:
      res.outcome = ExecOutcome::Fault;
      res.fault_kind = ps.m.fault;
      res.fault_pc = ps.m.fault_pc;
      break;
    default: res.outcome = ExecOutcome::Exit; break;
  }
  return res;
}

}  // namespace sbfscan
