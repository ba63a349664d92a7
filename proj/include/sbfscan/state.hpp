#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sbfscan/expr.hpp"
#include "sbfscan/image.hpp"
#include "sbfscan/memmap.hpp"

namespace sbfscan {

// Serialized program-input layout. All offsets are relative to the input
// region base. See docs/input-abi.md; frozen by a golden test.
struct AccountSlot {
  uint64_t record_off = 0;   // duplicate marker byte
  uint64_t is_signer_off = 0;
  uint64_t is_writable_off = 0;
  uint64_t executable_off = 0;
  uint64_t key_off = 0;      // 32 bytes
  uint64_t owner_off = 0;    // 32 bytes
  uint64_t lamports_off = 0; // 8 bytes
  uint64_t data_len_off = 0; // 8 bytes
  uint64_t data_off = 0;
  uint64_t data_len = 0;
  uint64_t rent_epoch_off = 0;
};

struct InputLayout {
  uint64_t account_count = 0;
  uint64_t instr_data_len = 0;
  std::vector<AccountSlot> accounts;
  uint64_t instr_len_off = 0;
  uint64_t instr_data_off = 0;
  uint64_t program_id_off = 0;  // 32 bytes
  uint64_t total_size = 0;

  static constexpr uint64_t kReallocPadding = 10240;

  static InputLayout build(uint64_t account_count, uint64_t data_len_per_account,
                           uint64_t instr_data_len, uint64_t max_accounts = 64,
                           uint64_t max_data_len = 64 * 1024) {
    if (account_count < 1 || account_count > max_accounts)
      throw ScanError(ErrKind::CapExceeded,
                      "account count out of range: " + std::to_string(account_count));
    if (data_len_per_account > max_data_len || instr_data_len > max_data_len)
      throw ScanError(ErrKind::CapExceeded, "input length exceeds cap");
    InputLayout l;
    l.account_count = account_count;
    l.instr_data_len = instr_data_len;
    uint64_t off = 8;  // 8-byte LE account count
    for (uint64_t i = 0; i < account_count; ++i) {
      AccountSlot s;
      s.record_off = off;
      s.is_signer_off = off + 1;
      s.is_writable_off = off + 2;
      s.executable_off = off + 3;
      // 4 bytes padding after the flag bytes
      s.key_off = off + 8;
      s.owner_off = s.key_off + 32;
      s.lamports_off = s.owner_off + 32;
      s.data_len_off = s.lamports_off + 8;
      s.data_off = s.data_len_off + 8;
      s.data_len = data_len_per_account;
      off = s.data_off + data_len_per_account + kReallocPadding;
      off = (off + 7) & ~7ull;  // align to 8
      s.rent_epoch_off = off;
      off += 8;
      l.accounts.push_back(s);
    }
    l.instr_len_off = off;
    l.instr_data_off = off + 8;
    off += 8 + instr_data_len;
    l.program_id_off = off;
    l.total_size = off + 32;
    return l;
  }

  // Account whose data byte range contains the given input-relative offset.
  std::optional<int> account_of_data_offset(uint64_t off) const {
    for (size_t i = 0; i < accounts.size(); ++i)
      if (off >= accounts[i].data_off && off < accounts[i].data_off + accounts[i].data_len)
        return static_cast<int>(i);
    return std::nullopt;
  }

  // Default content of an input-region byte: a fresh symbol for every
  // attacker-controllable field, a constant for runtime-trusted metadata.
  ExprRef default_byte(uint64_t off) const {
    if (off < 8) return mk_const(8, (account_count >> (8 * off)) & 0xff);
    for (size_t i = 0; i < accounts.size(); ++i) {
      const AccountSlot& s = accounts[i];
      int ai = static_cast<int>(i);
      if (off == s.record_off) return mk_const(8, 0xff);  // never a duplicate
      if (off == s.is_signer_off)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::IsSigner, 0, -1});
      if (off == s.is_writable_off)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::IsWritable, 0, -1});
      if (off == s.executable_off)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::Executable, 0, -1});
      if (off >= s.executable_off + 1 && off < s.key_off) return mk_const(8, 0);  // padding
      if (off >= s.key_off && off < s.key_off + 32)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::KeyByte,
                         static_cast<int>(off - s.key_off), -1});
      if (off >= s.owner_off && off < s.owner_off + 32)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::OwnerByte,
                         static_cast<int>(off - s.owner_off), -1});
      if (off >= s.lamports_off && off < s.lamports_off + 8)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::Lamports,
                         static_cast<int>(off - s.lamports_off), -1});
      if (off >= s.data_len_off && off < s.data_len_off + 8)
        return mk_const(8, (s.data_len >> (8 * (off - s.data_len_off))) & 0xff);
      if (off >= s.data_off && off < s.data_off + s.data_len)
        return mk_input({Origin::Src::AccountField, ai, Origin::Field::DataByte,
                         static_cast<int>(off - s.data_off), -1});
      if (off >= s.data_off + s.data_len && off < s.rent_epoch_off)
        return mk_const(8, 0);  // realloc padding + alignment
      if (off >= s.rent_epoch_off && off < s.rent_epoch_off + 8) return mk_const(8, 0);
    }
    if (off >= instr_len_off && off < instr_len_off + 8)
      return mk_const(8, (instr_data_len >> (8 * (off - instr_len_off))) & 0xff);
    if (off >= instr_data_off && off < instr_data_off + instr_data_len)
      return mk_input(
          {Origin::Src::InstructionData, -1, Origin::Field::None,
           static_cast<int>(off - instr_data_off), -1});
    if (off >= program_id_off && off < program_id_off + 32)
      return mk_input({Origin::Src::ProgramId, -1, Origin::Field::None,
                       static_cast<int>(off - program_id_off), -1});
    return mk_const(8, 0);
  }

  // Raw bytes of the input region under a concrete model of the input
  // symbols, in the exact serialized form the concrete interpreter consumes.
  Bytes concretize(const std::function<uint64_t(const Origin&)>& model) const {
    Bytes out(total_size);
    for (uint64_t off = 0; off < total_size; ++off) {
      ExprRef b = default_byte(off);
      out[off] = b->is_const() ? static_cast<uint8_t>(b->cval)
                               : static_cast<uint8_t>(model(b->origin));
    }
    return out;
  }
};

// Per-account authorization evidence gathered along one path, plus path
// statistics. Flags are monotone: set, never cleared.
struct Journal {
  std::vector<bool> signer_checked;
  std::vector<bool> key_checked;
  std::vector<bool> owner_field_checked;
  std::vector<bool> data_written;
  uint64_t step_count = 0;
  uint64_t fork_count = 0;

  explicit Journal(size_t accounts = 0)
      : signer_checked(accounts, false),
        key_checked(accounts, false),
        owner_field_checked(accounts, false),
        data_written(accounts, false) {}

  bool any_signer_checked() const {
    for (bool b : signer_checked)
      if (b) return true;
    return false;
  }
};

struct CallFrame {
  uint64_t return_pc = 0;
};

struct MachineState {
  const ProgramImage* image = nullptr;
  InputLayout layout;

  uint64_t pc = 0;
  std::array<ExprRef, 11> regs{};
  std::vector<CallFrame> call_stack;
  std::map<uint64_t, ExprRef> memory;  // sparse written/materialized bytes
  std::vector<ExprRef> constraints;
  Journal journal;

  FaultKind fault = FaultKind::None;
  uint64_t fault_pc = 0;
  bool exited = false;
  bool metadata_write_flagged = false;  // wrote over key/owner bytes in-memory
  uint64_t heap_next = mm::kHeapBase;
  int derived_counter = 0;              // ids for hash/PDA output symbols
  std::map<uint64_t, uint32_t> back_edge_counts;  // (from<<32|to) -> count

  size_t call_depth() const { return call_stack.size(); }
  uint64_t frame_top() const { return mm::kStackBase + (call_depth() + 1) * mm::kFrameSize; }

  void set_fault(FaultKind k) {
    if (fault == FaultKind::None) {
      fault = k;
      fault_pc = pc;
    }
  }

  bool halted() const { return exited || fault != FaultKind::None; }
};

inline MachineState init_state(const ProgramImage& image, uint64_t account_count,
                               uint64_t data_len_per_account, uint64_t instr_data_len) {
  MachineState st;
  st.image = &image;
  st.layout = InputLayout::build(account_count, data_len_per_account, instr_data_len);
  st.pc = image.entry_offset;
  for (auto& r : st.regs) r = mk_const(64, 0);
  st.regs[1] = mk_const(64, mm::kInputBase);
  st.regs[10] = mk_const(64, st.frame_top());
  st.journal = Journal(account_count);
  return st;
}

namespace state_detail {

enum class Region { Input, Stack, Heap, Image, Invalid };

inline Region region_of(const MachineState& st, uint64_t addr, uint64_t width_bytes) {
  uint64_t end = addr + width_bytes;
  if (end < addr) return Region::Invalid;
  if (addr >= mm::kInputBase && end <= mm::kInputBase + st.layout.total_size)
    return Region::Input;
  if (addr >= mm::kStackBase && end <= st.frame_top()) return Region::Stack;
  if (addr >= mm::kHeapBase && end <= mm::kHeapBase + mm::kHeapSize) return Region::Heap;
  bool in_image = true;
  for (uint64_t a = addr; a < end; ++a)
    if (!st.image->byte_at(a)) {
      in_image = false;
      break;
    }
  if (in_image && width_bytes > 0) return Region::Image;
  return Region::Invalid;
}

// Byte cell content at a concrete address, materializing the layout default
// for never-written input bytes and zeros elsewhere.
inline ExprRef byte_cell(MachineState& st, uint64_t addr) {
  auto it = st.memory.find(addr);
  if (it != st.memory.end()) return it->second;
  ExprRef v;
  if (addr >= mm::kInputBase && addr < mm::kInputBase + st.layout.total_size)
    v = st.layout.default_byte(addr - mm::kInputBase);
  else if (auto ib = st.image->byte_at(addr))
    v = mk_const(8, *ib);
  else
    v = mk_const(8, 0);
  st.memory.emplace(addr, v);
  return v;
}

}  // namespace state_detail

// Fault-free single-byte accessors used by syscall models, which mirror the
// reference interpreter's stop-on-invalid (rather than trap) behavior.
inline std::optional<ExprRef> try_read_byte(MachineState& st, uint64_t addr) {
  if (state_detail::region_of(st, addr, 1) == state_detail::Region::Invalid) return std::nullopt;
  return state_detail::byte_cell(st, addr);
}

inline bool try_write_byte(MachineState& st, uint64_t addr, const ExprRef& byte) {
  auto region = state_detail::region_of(st, addr, 1);
  if (region == state_detail::Region::Invalid || region == state_detail::Region::Image)
    return false;
  st.memory[addr] = byte;
  if (region == state_detail::Region::Input) {
    uint64_t off = addr - mm::kInputBase;
    if (auto acct = st.layout.account_of_data_offset(off))
      st.journal.data_written[static_cast<size_t>(*acct)] = true;
    for (const auto& s : st.layout.accounts)
      if ((off >= s.key_off && off < s.key_off + 32) ||
          (off >= s.owner_off && off < s.owner_off + 32))
        st.metadata_write_flagged = true;
  }
  return true;
}

// Little-endian read of `width_bytes` at a concrete address. Faults set
// state.fault and return Const(0); the caller terminates the path.
inline ExprRef read_mem(MachineState& st, uint64_t addr, unsigned width_bytes) {
  auto region = state_detail::region_of(st, addr, width_bytes);
  if (region == state_detail::Region::Invalid) {
    st.set_fault(FaultKind::OutOfBounds);
    return mk_const(static_cast<uint16_t>(width_bytes * 8), 0);
  }
  std::vector<ExprRef> bytes;
  for (unsigned i = 0; i < width_bytes; ++i)
    bytes.push_back(state_detail::byte_cell(st, addr + i));
  return concat_bytes_le(bytes);
}

// Little-endian write at a concrete address. Updates data_written when the
// range intersects an account's data bytes; in-memory writes over key/owner
// metadata are permitted but flagged for diagnostics.
inline void write_mem(MachineState& st, uint64_t addr, unsigned width_bytes,
                      const ExprRef& value) {
  auto region = state_detail::region_of(st, addr, width_bytes);
  if (region == state_detail::Region::Invalid) {
    st.set_fault(FaultKind::OutOfBounds);
    return;
  }
  if (region == state_detail::Region::Image) {
    st.set_fault(FaultKind::WriteToRodata);
    return;
  }
  for (unsigned i = 0; i < width_bytes; ++i)
    try_write_byte(st, addr + i, extract_byte(value, static_cast<uint16_t>(i)));
}

// Records which authorization-relevant fields a branch condition inspected.
inline void journal_condition(MachineState& st, const ExprRef& cond) {
  for (const Origin& o : origins(cond)) {
    if (o.src != Origin::Src::AccountField) continue;
    size_t i = static_cast<size_t>(o.account);
    if (i >= st.journal.signer_checked.size()) continue;
    switch (o.field) {
      case Origin::Field::IsSigner: st.journal.signer_checked[i] = true; break;
      case Origin::Field::KeyByte: st.journal.key_checked[i] = true; break;
      case Origin::Field::OwnerByte: st.journal.owner_field_checked[i] = true; break;
      default: break;
    }
  }
}

// Both children extend the path condition; journal flags derive from the
// condition's provenance in both children. Feasibility is the caller's job.
inline std::pair<MachineState, MachineState> fork(const MachineState& st, const ExprRef& cond) {
  MachineState t = st, f = st;
  t.constraints.push_back(cond);
  f.constraints.push_back(mk_not(cond));
  journal_condition(t, cond);
  journal_condition(f, cond);
  ++t.journal.fork_count;
  ++f.journal.fork_count;
  return {std::move(t), std::move(f)};
}

}  // namespace sbfscan
