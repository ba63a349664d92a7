#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sbfscan/asm.hpp"
#include "sbfscan/common.hpp"

namespace sbfscan {

// Wraps an assembled object into a minimal SBF shared object: .text, .rodata,
// .dynsym/.dynstr, .rel.dyn with call-by-hash and lddw address relocations.
// This mirrors the section layout the Solana toolchain emits closely enough
// for the loader under test.
struct ElfGenOptions {
  bool strip_function_symbols = false;
  uint64_t base_vaddr = 0x100000000ull;
};

namespace elfgen_detail {

constexpr uint16_t kEtDyn = 3;
constexpr uint16_t kEmSbf = 263;
constexpr uint32_t kShtProgbits = 1, kShtStrtab = 3, kShtRel = 9, kShtDynsym = 11;
constexpr uint64_t kShfAlloc = 0x2, kShfExec = 0x4;
constexpr uint32_t kRBpf64_64 = 1, kRBpf64_32 = 10;

struct Section {
  std::string name;
  uint32_t type = 0;
  uint64_t flags = 0;
  uint64_t addr = 0;
  uint64_t offset = 0;
  Bytes data;
  uint32_t link = 0;
  uint32_t info = 0;
  uint64_t addralign = 8;
  uint64_t entsize = 0;
};

struct Sym {
  uint32_t name_off = 0;
  uint8_t info = 0;
  uint16_t shndx = 0;
  uint64_t value = 0;
  uint64_t size = 0;
};

inline void append_sym(Bytes& out, const Sym& s) {
  size_t base = out.size();
  out.resize(base + 24, 0);
  write_u32le(out.data() + base, s.name_off);
  out[base + 4] = s.info;
  out[base + 5] = 0;
  write_u16le(out.data() + base + 6, s.shndx);
  write_u64le(out.data() + base + 8, s.value);
  write_u64le(out.data() + base + 16, s.size);
}

}  // namespace elfgen_detail

inline Bytes emit_elf(const AsmObject& obj, const ElfGenOptions& opts = {}) {
  using namespace elfgen_detail;

  const uint64_t text_off = 0x1000;
  const uint64_t text_vaddr = opts.base_vaddr + text_off;
  uint64_t rodata_off = text_off + obj.text.size();
  rodata_off = (rodata_off + 15) & ~15ull;
  const uint64_t rodata_vaddr = opts.base_vaddr + rodata_off;

  // String table for .dynsym
  Bytes dynstr{0};
  auto add_str = [&](const std::string& s) {
    uint32_t off = static_cast<uint32_t>(dynstr.size());
    dynstr.insert(dynstr.end(), s.begin(), s.end());
    dynstr.push_back(0);
    return off;
  };

  Bytes dynsym;
  append_sym(dynsym, Sym{});  // null symbol
  std::map<std::string, uint32_t> sym_index;
  uint32_t next_index = 1;
  auto intern_sym = [&](const std::string& name, uint8_t info, uint16_t shndx, uint64_t value) {
    auto it = sym_index.find(name);
    if (it != sym_index.end()) return it->second;
    Sym s;
    s.name_off = add_str(name);
    s.info = info;
    s.shndx = shndx;
    s.value = value;
    append_sym(dynsym, s);
    sym_index[name] = next_index;
    return next_index++;
  };

  // Defined function symbols (text labels). Section index of .text is 1.
  if (!opts.strip_function_symbols) {
    for (const auto& [name, slot] : obj.labels)
      intern_sym(name, 0x12 /* GLOBAL FUNC */, 1, text_vaddr + slot * 8);
  }
  for (const auto& [name, off] : obj.rodata_syms)
    intern_sym(name, 0x11 /* GLOBAL OBJECT */, 2, rodata_vaddr + off);

  // Relocations against the text section.
  Bytes reldyn;
  auto append_rel = [&](uint64_t r_offset, uint32_t type, uint32_t symidx) {
    size_t base = reldyn.size();
    reldyn.resize(base + 16, 0);
    write_u64le(reldyn.data() + base, r_offset);
    write_u64le(reldyn.data() + base + 8,
                (static_cast<uint64_t>(symidx) << 32) | type);
  };
  for (const auto& rel : obj.relocs) {
    uint64_t at = text_vaddr + rel.text_byte_offset;
    if (rel.kind == AsmReloc::Kind::SyscallHash) {
      uint32_t idx = intern_sym(rel.symbol, 0x12, 0 /* SHN_UNDEF */, 0);
      append_rel(at, kRBpf64_32, idx);
    } else {
      uint32_t idx = sym_index.at(rel.symbol);
      append_rel(at, kRBpf64_64, idx);
    }
  }

  std::vector<Section> sections(1);  // index 0: SHT_NULL
  Section text{".text", kShtProgbits, kShfAlloc | kShfExec, text_vaddr, text_off,
               obj.text, 0, 0, 8, 0};
  sections.push_back(text);
  Section rodata{".rodata", kShtProgbits, kShfAlloc, rodata_vaddr, rodata_off,
                 obj.rodata, 0, 0, 16, 0};
  sections.push_back(rodata);
  Section dynstr_sec{".dynstr", kShtStrtab, kShfAlloc, 0, 0, dynstr, 0, 0, 1, 0};
  sections.push_back(dynstr_sec);
  Section dynsym_sec{".dynsym", kShtDynsym, kShfAlloc, 0, 0, dynsym, 3 /* .dynstr */, 1, 8, 24};
  sections.push_back(dynsym_sec);
  Section rel_sec{".rel.dyn", kShtRel, kShfAlloc, 0, 0, reldyn, 4 /* .dynsym */, 1, 8, 16};
  sections.push_back(rel_sec);

  // .shstrtab
  Bytes shstr{0};
  std::vector<uint32_t> name_offsets(sections.size() + 1, 0);
  for (size_t i = 1; i < sections.size(); ++i) {
    name_offsets[i] = static_cast<uint32_t>(shstr.size());
    shstr.insert(shstr.end(), sections[i].name.begin(), sections[i].name.end());
    shstr.push_back(0);
  }
  uint32_t shstrtab_name = static_cast<uint32_t>(shstr.size());
  const std::string shstrtab_str = ".shstrtab";
  shstr.insert(shstr.end(), shstrtab_str.begin(), shstrtab_str.end());
  shstr.push_back(0);
  Section shstrtab_sec{".shstrtab", kShtStrtab, 0, 0, 0, shstr, 0, 0, 1, 0};
  sections.push_back(shstrtab_sec);
  name_offsets[sections.size() - 1] = shstrtab_name;

  // Lay out file: ehdr, phdr, section payloads, section header table.
  uint64_t cursor = text_off;
  for (size_t i = 1; i < sections.size(); ++i) {
    Section& s = sections[i];
    if (i == 1) {
      s.offset = text_off;
    } else if (i == 2) {
      s.offset = rodata_off;
    } else {
      cursor = (cursor + 7) & ~7ull;
      s.offset = cursor;
    }
    cursor = std::max<uint64_t>(cursor, s.offset + s.data.size());
  }
  uint64_t shoff = (cursor + 7) & ~7ull;
  uint64_t total = shoff + 64 * sections.size();

  Bytes out(total, 0);
  // ELF header
  out[0] = 0x7f;
  out[1] = 'E';
  out[2] = 'L';
  out[3] = 'F';
  out[4] = 2;  // ELFCLASS64
  out[5] = 1;  // little endian
  out[6] = 1;  // EV_CURRENT
  write_u16le(out.data() + 16, kEtDyn);
  write_u16le(out.data() + 18, kEmSbf);
  write_u32le(out.data() + 20, 1);
  write_u64le(out.data() + 24, text_vaddr + obj.entry_slot * 8);  // e_entry
  write_u64le(out.data() + 32, 64);                               // e_phoff
  write_u64le(out.data() + 40, shoff);                            // e_shoff
  write_u16le(out.data() + 52, 64);                               // e_ehsize
  write_u16le(out.data() + 54, 56);                               // e_phentsize
  write_u16le(out.data() + 56, 1);                                // e_phnum
  write_u16le(out.data() + 58, 64);                               // e_shentsize
  write_u16le(out.data() + 60, static_cast<uint16_t>(sections.size()));
  write_u16le(out.data() + 62, static_cast<uint16_t>(sections.size() - 1));  // shstrndx

  // One PT_LOAD mapping the file at base_vaddr.
  uint8_t* ph = out.data() + 64;
  write_u32le(ph, 1);                       // PT_LOAD
  write_u32le(ph + 4, 5);                   // R+X
  write_u64le(ph + 8, 0);                   // offset
  write_u64le(ph + 16, opts.base_vaddr);    // vaddr
  write_u64le(ph + 24, opts.base_vaddr);    // paddr
  write_u64le(ph + 32, total);              // filesz
  write_u64le(ph + 40, total);              // memsz
  write_u64le(ph + 48, 0x1000);             // align

  for (size_t i = 1; i < sections.size(); ++i) {
    const Section& s = sections[i];
    std::copy(s.data.begin(), s.data.end(), out.begin() + static_cast<long>(s.offset));
  }
  for (size_t i = 0; i < sections.size(); ++i) {
    const Section& s = sections[i];
    uint8_t* sh = out.data() + shoff + 64 * i;
    write_u32le(sh, name_offsets[i]);
    write_u32le(sh + 4, s.type);
    write_u64le(sh + 8, s.flags);
    write_u64le(sh + 16, s.addr);
    write_u64le(sh + 24, s.offset);
    write_u64le(sh + 32, s.data.size());
    write_u32le(sh + 40, s.link);
    write_u32le(sh + 44, s.info);
    write_u64le(sh + 48, s.addralign);
    write_u64le(sh + 56, s.entsize);
  }
  return out;
}

// Convenience for tests: assemble and wrap in one step.
inline Bytes assemble_to_elf(const std::string& source, const ElfGenOptions& opts = {}) {
  return emit_elf(assemble(source), opts);
}

}  // namespace sbfscan
