#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sbfscan/image.hpp"
#include "sbfscan/isa.hpp"
#include "sbfscan/syscalls.hpp"

namespace sbfscan {

enum class Terminator { FallThrough, Jump, CondJump, Call, Exit };
enum class EdgeKind { Flow, TrueBranch, FalseBranch, CallReturn };

struct CfgBlock {
  size_t start = 0;  // slot index of first instruction
  size_t end = 0;    // one past the last slot
  Terminator term = Terminator::FallThrough;
};

struct CfgEdge {
  size_t from = 0;
  size_t to = 0;
  EdgeKind kind = EdgeKind::Flow;
};

struct CfgFunction {
  size_t entry_block = 0;
  std::vector<size_t> blocks;
};

struct CallEdge {
  size_t callsite = 0;        // slot of the CALL instruction
  int callee_function = -1;   // index into functions, or -1 for syscalls
  std::string syscall;        // syscall name when callee_function < 0
};

struct Cfg {
  std::vector<CfgBlock> blocks;  // sorted by start
  std::vector<CfgEdge> edges;
  std::vector<CfgFunction> functions;
  std::vector<CallEdge> call_edges;

  // slot -> block index; only instruction-start slots are present.
  std::map<size_t, size_t> block_of_slot;
  // function entry slot -> function index
  std::map<size_t, size_t> function_of_entry;

  int block_containing(size_t slot) const {
    auto it = block_of_slot.upper_bound(slot);
    if (it == block_of_slot.begin()) return -1;
    --it;
    size_t b = it->second;
    if (slot >= blocks[b].start && slot < blocks[b].end) return static_cast<int>(b);
    return -1;
  }
};

struct CpiReachability {
  std::set<size_t> cpi_sites;
  std::set<size_t> block_reaches;
  std::set<size_t> function_reaches;
};

// Recover blocks, functions and the call graph for everything reachable from
// the entrypoint and the symbol-table function seeds. Throws IllegalOpcode
// (with the offending pc) when a reachable slot does not decode; callers
// surface that as an Unsupported verdict.
inline Cfg build_cfg(const ProgramImage& image) {
  const size_t nslots = image.slot_count();
  std::map<size_t, Instruction> decoded;  // reachable instruction starts
  std::set<size_t> leaders;
  std::set<size_t> func_entries;
  std::deque<size_t> work;

  auto push = [&](size_t slot) {
    if (slot < nslots && !decoded.count(slot)) work.push_back(slot);
  };

  func_entries.insert(image.entry_offset);
  push(image.entry_offset);
  for (const auto& [slot, name] : image.symbols) {
    func_entries.insert(slot);
    push(slot);
  }
  leaders.insert(func_entries.begin(), func_entries.end());

  while (!work.empty()) {
    size_t slot = work.front();
    work.pop_front();
    if (slot >= nslots || decoded.count(slot)) continue;
    Instruction insn;
    try {
      insn = image.decode_at(slot);
    } catch (const ScanError& e) {
      throw ScanError(ErrKind::IllegalOpcode,
                      "decode failure at pc " + std::to_string(slot) + ": " + e.what());
    }
    decoded.emplace(slot, insn);
    size_t next = slot + insn.size_slots;
    switch (insn.klass) {
      case InsnClass::JMP:
      case InsnClass::JMP32: {
        size_t target =
            static_cast<size_t>(static_cast<int64_t>(slot) + 1 + insn.offset);
        leaders.insert(target);
        push(target);
        if (!is_unconditional_jump(insn)) {
          leaders.insert(next);
          push(next);
        }
        break;
      }
      case InsnClass::EXIT:
        break;
      case InsnClass::CALL: {
        if (insn.src == 1) {
          size_t target = static_cast<size_t>(static_cast<int64_t>(slot) + 1 + insn.imm);
          func_entries.insert(target);
          leaders.insert(target);
          push(target);
        }
        leaders.insert(next);
        push(next);
        break;
      }
      default:
        push(next);
        break;
    }
  }

  Cfg cfg;
  if (decoded.empty()) return cfg;

  // Blocks: contiguous decoded runs split at leaders and after terminators.
  auto flush_block = [&](size_t start, size_t end, Terminator term) {
    cfg.block_of_slot[start] = cfg.blocks.size();
    cfg.blocks.push_back({start, end, term});
  };
  size_t block_start = SIZE_MAX;
  size_t prev_end = 0;
  for (auto it = decoded.begin(); it != decoded.end(); ++it) {
    size_t slot = it->first;
    const Instruction& insn = it->second;
    if (block_start == SIZE_MAX) {
      block_start = slot;
    } else if (slot != prev_end || leaders.count(slot)) {
      flush_block(block_start, prev_end, Terminator::FallThrough);
      block_start = slot;
    }
    prev_end = slot + insn.size_slots;
    Terminator term;
    bool ends = true;
    switch (insn.klass) {
      case InsnClass::EXIT: term = Terminator::Exit; break;
      case InsnClass::CALL: term = Terminator::Call; break;
      case InsnClass::JMP:
      case InsnClass::JMP32:
        term = is_unconditional_jump(insn) ? Terminator::Jump : Terminator::CondJump;
        break;
      default:
        ends = false;
        term = Terminator::FallThrough;
        break;
    }
    if (ends) {
      flush_block(block_start, prev_end, term);
      block_start = SIZE_MAX;
    }
  }
  if (block_start != SIZE_MAX) flush_block(block_start, prev_end, Terminator::FallThrough);

  auto block_at = [&](size_t slot) -> int {
    auto it = cfg.block_of_slot.find(slot);
    return it == cfg.block_of_slot.end() ? -1 : static_cast<int>(it->second);
  };

  // Edges.
  for (size_t b = 0; b < cfg.blocks.size(); ++b) {
    const CfgBlock& blk = cfg.blocks[b];
    size_t last = blk.start;
    for (auto it = decoded.find(blk.start); it != decoded.end() && it->first < blk.end;
         it = decoded.find(it->first + it->second.size_slots))
      last = it->first;
    const Instruction& term_insn = decoded.at(last);
    switch (blk.term) {
      case Terminator::FallThrough:
      case Terminator::Call: {
        int nb = block_at(blk.end);
        if (nb >= 0)
          cfg.edges.push_back({b, static_cast<size_t>(nb),
                               blk.term == Terminator::Call ? EdgeKind::CallReturn
                                                            : EdgeKind::Flow});
        break;
      }
      case Terminator::Jump: {
        int tb = block_at(static_cast<size_t>(static_cast<int64_t>(last) + 1 + term_insn.offset));
        if (tb >= 0) cfg.edges.push_back({b, static_cast<size_t>(tb), EdgeKind::Flow});
        break;
      }
      case Terminator::CondJump: {
        int tb = block_at(static_cast<size_t>(static_cast<int64_t>(last) + 1 + term_insn.offset));
        int fb = block_at(blk.end);
        if (tb >= 0) cfg.edges.push_back({b, static_cast<size_t>(tb), EdgeKind::TrueBranch});
        if (fb >= 0) cfg.edges.push_back({b, static_cast<size_t>(fb), EdgeKind::FalseBranch});
        break;
      }
      case Terminator::Exit:
        break;
    }
  }

  // Functions: intra-procedural closure from each entry, not crossing into
  // other entries.
  std::vector<std::vector<size_t>> succs(cfg.blocks.size());
  for (const auto& e : cfg.edges) succs[e.from].push_back(e.to);
  for (size_t entry : func_entries) {
    int eb = block_at(entry);
    if (eb < 0) continue;
    CfgFunction fn;
    fn.entry_block = static_cast<size_t>(eb);
    std::set<size_t> seen;
    std::deque<size_t> q{fn.entry_block};
    while (!q.empty()) {
      size_t b = q.front();
      q.pop_front();
      if (seen.count(b)) continue;
      if (b != fn.entry_block && func_entries.count(cfg.blocks[b].start)) continue;
      seen.insert(b);
      for (size_t s : succs[b]) q.push_back(s);
    }
    fn.blocks.assign(seen.begin(), seen.end());
    cfg.function_of_entry[entry] = cfg.functions.size();
    cfg.functions.push_back(std::move(fn));
  }

  // Call edges.
  for (const auto& [slot, insn] : decoded) {
    if (insn.klass != InsnClass::CALL) continue;
    CallEdge ce;
    ce.callsite = slot;
    if (insn.src == 1) {
      size_t target = static_cast<size_t>(static_cast<int64_t>(slot) + 1 + insn.imm);
      auto it = cfg.function_of_entry.find(target);
      ce.callee_function = it != cfg.function_of_entry.end() ? static_cast<int>(it->second) : -1;
    } else {
      uint32_t hash = static_cast<uint32_t>(insn.imm);
      auto it = image.syscall_names.find(hash);
      if (it != image.syscall_names.end()) {
        ce.syscall = it->second;
      } else {
        auto git = syscall_hash_table().find(hash);
        if (git != syscall_hash_table().end()) {
          ce.syscall = git->second;
        } else {
          std::ostringstream os;
          os << "?0x" << std::hex << hash;
          ce.syscall = os.str();
        }
      }
    }
    cfg.call_edges.push_back(std::move(ce));
  }
  return cfg;
}

// All CALL instructions whose resolved syscall name is in cpi_syscalls.
inline std::set<size_t> find_cpi_sites(const Cfg& cfg, const ProgramImage& /*image*/,
                                       const std::set<std::string>& cpi_syscalls) {
  std::set<size_t> sites;
  for (const auto& ce : cfg.call_edges)
    if (ce.callee_function < 0 && cpi_syscalls.count(ce.syscall)) sites.insert(ce.callsite);
  return sites;
}

// Minimal backward closure: a block reaches a CPI site if the site is in the
// block, a successor reaches, or a callee called from the block reaches.
inline CpiReachability compute_reachability(const Cfg& cfg, const std::set<size_t>& sites) {
  CpiReachability r;
  r.cpi_sites = sites;
  if (cfg.blocks.empty()) return r;

  std::vector<std::vector<size_t>> preds(cfg.blocks.size());
  for (const auto& e : cfg.edges) preds[e.to].push_back(e.from);

  // callsite block -> callee function
  std::vector<std::pair<size_t, size_t>> internal_calls;  // (block, callee fn)
  for (const auto& ce : cfg.call_edges) {
    if (ce.callee_function < 0) continue;
    int b = cfg.block_containing(ce.callsite);
    if (b >= 0) internal_calls.emplace_back(static_cast<size_t>(b),
                                            static_cast<size_t>(ce.callee_function));
  }
  std::vector<std::vector<size_t>> fn_of_block(cfg.blocks.size());
  for (size_t f = 0; f < cfg.functions.size(); ++f)
    for (size_t b : cfg.functions[f].blocks) fn_of_block[b].push_back(f);

  std::deque<size_t> work;
  auto mark_block = [&](size_t b) {
    if (r.block_reaches.insert(b).second) work.push_back(b);
  };
  for (size_t site : sites) {
    int b = cfg.block_containing(site);
    if (b >= 0) mark_block(static_cast<size_t>(b));
  }
  while (true) {
    while (!work.empty()) {
      size_t b = work.front();
      work.pop_front();
      for (size_t p : preds[b]) mark_block(p);
    }
    // Lift to functions, then propagate through callers.
    bool changed = false;
    for (size_t b : r.block_reaches)
      for (size_t f : fn_of_block[b])
        if (r.function_reaches.insert(f).second) changed = true;
    for (const auto& [block, callee] : internal_calls) {
      if (r.function_reaches.count(callee) && !r.block_reaches.count(block)) {
        mark_block(block);
        changed = true;
      }
    }
    if (!changed && work.empty()) break;
  }
  return r;
}

// DOT rendering of blocks and edges for --dump-cfg.
inline std::string dump_cfg_dot(const Cfg& cfg) {
  std::ostringstream os;
  os << "digraph cfg {\n";
  for (size_t b = 0; b < cfg.blocks.size(); ++b)
    os << "  b" << b << " [label=\"[" << cfg.blocks[b].start << ", " << cfg.blocks[b].end
       << ")\"];\n";
  for (const auto& e : cfg.edges) {
    const char* k = e.kind == EdgeKind::Flow ? "flow"
                    : e.kind == EdgeKind::TrueBranch ? "true"
                    : e.kind == EdgeKind::FalseBranch ? "false"
                                                      : "call-return";
    os << "  b" << e.from << " -> b" << e.to << " [label=\"" << k << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace sbfscan
