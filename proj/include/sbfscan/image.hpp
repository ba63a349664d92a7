#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sbfscan/common.hpp"
#include "sbfscan/isa.hpp"
#include "sbfscan/syscalls.hpp"

namespace sbfscan {

struct RodataSegment {
  uint64_t vaddr = 0;
  Bytes bytes;
};

// Loaded, relocated SBF program. Immutable after construction.
struct ProgramImage {
  Bytes text;
  uint64_t text_vaddr = 0;
  std::vector<RodataSegment> rodata_segments;
  size_t entry_offset = 0;  // instruction slot index
  std::map<size_t, std::string> symbols;  // function-start slot -> name
  std::map<uint32_t, std::string> syscall_names;

  size_t slot_count() const { return text.size() / 8; }

  Instruction decode_at(size_t slot) const {
    if (slot >= slot_count()) throw ScanError(ErrKind::IllegalOpcode, "pc out of text");
    const uint8_t* p = text.data() + slot * 8;
    const uint8_t* next = (slot + 1 < slot_count()) ? p + 8 : nullptr;
    if (is_lddw_opcode(p[0]) && !next) throw ScanError(ErrKind::TruncatedWide, "lddw at end");
    return decode(p, next);
  }

  // Byte at a program virtual address, if it falls in text or rodata.
  std::optional<uint8_t> byte_at(uint64_t vaddr) const {
    if (vaddr >= text_vaddr && vaddr - text_vaddr < text.size())
      return text[vaddr - text_vaddr];
    for (const auto& seg : rodata_segments)
      if (vaddr >= seg.vaddr && vaddr - seg.vaddr < seg.bytes.size())
        return seg.bytes[vaddr - seg.vaddr];
    return std::nullopt;
  }

  bool in_rodata(uint64_t vaddr) const {
    for (const auto& seg : rodata_segments)
      if (vaddr >= seg.vaddr && vaddr - seg.vaddr < seg.bytes.size()) return true;
    return false;
  }
};

namespace elf_detail {

constexpr uint16_t kEmBpf = 247, kEmSbf = 263;
constexpr uint32_t kShtProgbits = 1, kShtSymtab = 2, kShtRel = 9, kShtRela = 4, kShtDynsym = 11;
constexpr uint64_t kShfWrite = 0x1, kShfAlloc = 0x2, kShfExec = 0x4;
constexpr uint32_t kRBpf64_64 = 1, kRBpf64_Relative = 8, kRBpf64_32 = 10;

struct Shdr {
  uint32_t name = 0;
  uint32_t type = 0;
  uint64_t flags = 0;
  uint64_t addr = 0;
  uint64_t offset = 0;
  uint64_t size = 0;
  uint32_t link = 0;
  uint64_t entsize = 0;
};

struct SymEntry {
  std::string name;
  uint8_t info = 0;
  uint16_t shndx = 0;
  uint64_t value = 0;
};

}  // namespace elf_detail

// Load a Solana SBF shared object and apply load-relevant relocations.
// Pure: identical bytes yield an identical ProgramImage.
inline ProgramImage load_elf(const Bytes& bytes) {
  using namespace elf_detail;
  auto malformed = [](const std::string& m) -> ScanError {
    return ScanError(ErrKind::MalformedElf, m);
  };

  if (bytes.size() < 64) throw malformed("too short for an ELF header");
  if (bytes[0] != 0x7f || bytes[1] != 'E' || bytes[2] != 'L' || bytes[3] != 'F')
    throw malformed("bad magic");
  if (bytes[4] != 2 || bytes[5] != 1) throw malformed("not ELF64 little-endian");
  uint16_t machine = read_u16le(bytes.data() + 18);
  if (machine != kEmBpf && machine != kEmSbf)
    throw ScanError(ErrKind::UnsupportedMachine, "e_machine " + std::to_string(machine));

  uint64_t e_entry = read_u64le(bytes.data() + 24);
  uint64_t shoff = read_u64le(bytes.data() + 40);
  uint16_t shentsize = read_u16le(bytes.data() + 58);
  uint16_t shnum = read_u16le(bytes.data() + 60);
  uint16_t shstrndx = read_u16le(bytes.data() + 62);
  if (shentsize != 64 || shnum == 0) throw malformed("bad section header table");
  if (shoff + static_cast<uint64_t>(shnum) * 64 > bytes.size())
    throw malformed("section headers out of bounds");

  std::vector<Shdr> shdrs(shnum);
  for (uint16_t i = 0; i < shnum; ++i) {
    const uint8_t* p = bytes.data() + shoff + i * 64;
    Shdr& s = shdrs[i];
    s.name = read_u32le(p);
    s.type = read_u32le(p + 4);
    s.flags = read_u64le(p + 8);
    s.addr = read_u64le(p + 16);
    s.offset = read_u64le(p + 24);
    s.size = read_u64le(p + 32);
    s.link = read_u32le(p + 40);
    s.entsize = read_u64le(p + 56);
    if (s.type != 8 /* NOBITS */ && s.type != 0 && s.offset + s.size > bytes.size())
      throw malformed("section payload out of bounds");
  }
  if (shstrndx >= shnum) throw malformed("bad shstrndx");
  const Shdr& shstr = shdrs[shstrndx];
  auto sec_name = [&](const Shdr& s) -> std::string {
    uint64_t off = shstr.offset + s.name;
    std::string out;
    while (off < bytes.size() && bytes[off]) out.push_back(static_cast<char>(bytes[off++]));
    return out;
  };

  ProgramImage img;
  int text_idx = -1;
  for (uint16_t i = 0; i < shnum; ++i) {
    const Shdr& s = shdrs[i];
    if (s.type != kShtProgbits || !(s.flags & kShfAlloc)) continue;
    if (s.flags & kShfExec) {
      if (text_idx >= 0) throw malformed("multiple executable sections");
      text_idx = i;
      img.text.assign(bytes.begin() + static_cast<long>(s.offset),
                      bytes.begin() + static_cast<long>(s.offset + s.size));
      img.text_vaddr = s.addr;
    } else if (!(s.flags & kShfWrite)) {
      if (s.size == 0) continue;
      RodataSegment seg;
      seg.vaddr = s.addr;
      seg.bytes.assign(bytes.begin() + static_cast<long>(s.offset),
                       bytes.begin() + static_cast<long>(s.offset + s.size));
      img.rodata_segments.push_back(std::move(seg));
    }
    // Writable PROGBITS is ignored: Solana programs are stateless.
  }
  if (text_idx < 0) throw malformed("no executable section");
  if (img.text.size() % 8 != 0) throw malformed("text size not a multiple of 8");
  std::sort(img.rodata_segments.begin(), img.rodata_segments.end(),
            [](const RodataSegment& a, const RodataSegment& b) { return a.vaddr < b.vaddr; });
  // Overlap checks (rodata vs rodata and vs text).
  uint64_t prev_end = 0;
  bool first = true;
  for (const auto& seg : img.rodata_segments) {
    if (!first && seg.vaddr < prev_end) throw malformed("overlapping rodata segments");
    if (seg.vaddr < img.text_vaddr + img.text.size() &&
        img.text_vaddr < seg.vaddr + seg.bytes.size())
      throw malformed("rodata overlaps text");
    prev_end = seg.vaddr + seg.bytes.size();
    first = false;
  }

  // Symbol tables: prefer .dynsym, fall back to .symtab.
  std::vector<SymEntry> syms;
  for (uint16_t i = 0; i < shnum; ++i) {
    const Shdr& s = shdrs[i];
    if (s.type != kShtDynsym && s.type != kShtSymtab) continue;
    if (s.entsize != 24 || s.link >= shnum) throw malformed("bad symbol table");
    const Shdr& str = shdrs[s.link];
    size_t count = s.size / 24;
    for (size_t j = 0; j < count; ++j) {
      const uint8_t* p = bytes.data() + s.offset + j * 24;
      SymEntry e;
      uint32_t noff = read_u32le(p);
      e.info = p[4];
      e.shndx = read_u16le(p + 6);
      e.value = read_u64le(p + 8);
      uint64_t off = str.offset + noff;
      while (off < bytes.size() && bytes[off]) e.name.push_back(static_cast<char>(bytes[off++]));
      syms.push_back(std::move(e));
    }
    if (s.type == kShtDynsym) break;  // .dynsym wins when both exist
  }

  const uint64_t text_end = img.text_vaddr + img.text.size();
  auto text_off_of = [&](uint64_t r_offset) -> uint64_t {
    if (r_offset >= img.text_vaddr && r_offset < text_end) return r_offset - img.text_vaddr;
    // Some emitters record file offsets instead of vaddrs.
    const Shdr& ts = shdrs[text_idx];
    if (r_offset >= ts.offset && r_offset < ts.offset + ts.size) return r_offset - ts.offset;
    throw ScanError(ErrKind::RelocationError, "relocation outside text");
  };

  // Apply relocations. The two deployed SBF call encodings are told apart by
  // the relocation's symbol: undefined symbols are syscalls resolved by the
  // murmur32 name hash, defined ones are internal calls rewritten to
  // slot-relative form.
  for (uint16_t i = 0; i < shnum; ++i) {
    const Shdr& s = shdrs[i];
    if (s.type != kShtRel && s.type != kShtRela) continue;
    size_t entsz = s.type == kShtRel ? 16 : 24;
    if (s.entsize != entsz) throw malformed("bad relocation entsize");
    size_t count = s.size / entsz;
    for (size_t j = 0; j < count; ++j) {
      const uint8_t* p = bytes.data() + s.offset + j * entsz;
      uint64_t r_offset = read_u64le(p);
      uint64_t r_info = read_u64le(p + 8);
      uint32_t type = static_cast<uint32_t>(r_info & 0xffffffffu);
      uint32_t symidx = static_cast<uint32_t>(r_info >> 32);
      switch (type) {
        case kRBpf64_64: {
          uint64_t off = text_off_of(r_offset);
          if (off + 16 > img.text.size() || !is_lddw_opcode(img.text[off]))
            throw ScanError(ErrKind::RelocationError, "64_64 target is not lddw");
          if (symidx >= syms.size())
            throw ScanError(ErrKind::RelocationError, "bad symbol index");
          uint64_t addend = read_u32le(img.text.data() + off + 4) |
                            (static_cast<uint64_t>(read_u32le(img.text.data() + off + 12)) << 32);
          uint64_t value = syms[symidx].value + addend;
          write_u32le(img.text.data() + off + 4, static_cast<uint32_t>(value));
          write_u32le(img.text.data() + off + 12, static_cast<uint32_t>(value >> 32));
          break;
        }
        case kRBpf64_Relative: {
          // lddw address fixup without a symbol: rebase the packed immediate.
          uint64_t off;
          try {
            off = text_off_of(r_offset);
          } catch (const ScanError&) {
            break;  // rodata-side RELATIVE entries don't affect analysis
          }
          if (off + 16 > img.text.size() || !is_lddw_opcode(img.text[off])) break;
          uint64_t va = read_u32le(img.text.data() + off + 4) |
                        (static_cast<uint64_t>(read_u32le(img.text.data() + off + 12)) << 32);
          if (va < img.text_vaddr) va += img.text_vaddr & ~0xffffffffull;
          write_u32le(img.text.data() + off + 4, static_cast<uint32_t>(va));
          write_u32le(img.text.data() + off + 12, static_cast<uint32_t>(va >> 32));
          break;
        }
        case kRBpf64_32: {
          uint64_t off = text_off_of(r_offset);
          if (off + 8 > img.text.size() || img.text[off] != 0x85)
            throw ScanError(ErrKind::RelocationError, "64_32 target is not a call");
          if (symidx >= syms.size())
            throw ScanError(ErrKind::RelocationError, "bad symbol index");
          const SymEntry& sym = syms[symidx];
          if (sym.shndx == 0) {
            uint32_t hash = murmur3_32(sym.name);
            write_u32le(img.text.data() + off + 4, hash);
            img.syscall_names[hash] = sym.name;
          } else {
            if (sym.value < img.text_vaddr || sym.value >= text_end || (sym.value % 8) != 0)
              throw ScanError(ErrKind::RelocationError, "call target outside text");
            int64_t target_slot = static_cast<int64_t>((sym.value - img.text_vaddr) / 8);
            int64_t insn_slot = static_cast<int64_t>(off / 8);
            write_u32le(img.text.data() + off + 4,
                        static_cast<uint32_t>(static_cast<int32_t>(target_slot - insn_slot - 1)));
            // Canonicalize to the relative-call form (src = 1).
            img.text[off + 1] = static_cast<uint8_t>((img.text[off + 1] & 0x0f) | 0x10);
          }
          break;
        }
        default:
          break;  // other relocation types are not load-relevant
      }
    }
  }

  // Known syscall hashes already present as immediates (pre-relocated
  // binaries, including our own assembler output) are recognized too.
  for (size_t slot = 0; slot < img.slot_count(); ++slot) {
    const uint8_t* p = img.text.data() + slot * 8;
    if (p[0] == 0x85 && (p[1] >> 4) == 0) {
      uint32_t imm = read_u32le(p + 4);
      auto it = syscall_hash_table().find(imm);
      if (it != syscall_hash_table().end()) img.syscall_names.emplace(it->first, it->second);
    }
    if (is_lddw_opcode(p[0])) ++slot;
  }

  // Function symbols defined in text.
  for (const auto& sym : syms) {
    if (sym.name.empty() || sym.shndx == 0) continue;
    if ((sym.info & 0xf) != 2 /* STT_FUNC */) continue;
    if (sym.value < img.text_vaddr || sym.value >= text_end || (sym.value % 8) != 0) continue;
    img.symbols.emplace((sym.value - img.text_vaddr) / 8, sym.name);
  }

  // Entry: the "entrypoint" symbol when present, e_entry otherwise.
  std::optional<uint64_t> entry_vaddr;
  for (const auto& sym : syms)
    if (sym.name == "entrypoint" && sym.shndx != 0) entry_vaddr = sym.value;
  if (!entry_vaddr) entry_vaddr = e_entry;
  if (*entry_vaddr < img.text_vaddr || *entry_vaddr >= text_end || (*entry_vaddr % 8) != 0)
    throw malformed("entry outside text");
  img.entry_offset = (*entry_vaddr - img.text_vaddr) / 8;
  return img;
}

// Every maximal run of printable bytes of length >= min_len in rodata, in
// strictly increasing address order.
inline std::vector<std::pair<uint64_t, std::string>> iter_strings(const ProgramImage& image,
                                                                  size_t min_len) {
  std::vector<std::pair<uint64_t, std::string>> out;
  for (const auto& seg : image.rodata_segments) {
    size_t i = 0;
    while (i < seg.bytes.size()) {
      if (!is_printable_ascii(seg.bytes[i])) {
        ++i;
        continue;
      }
      size_t j = i;
      while (j < seg.bytes.size() && is_printable_ascii(seg.bytes[j])) ++j;
      if (j - i >= min_len)
        out.emplace_back(seg.vaddr + i,
                         std::string(seg.bytes.begin() + static_cast<long>(i),
                                     seg.bytes.begin() + static_cast<long>(j)));
      i = j;
    }
  }
  return out;
}

}  // namespace sbfscan
