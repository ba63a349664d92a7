#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sbfscan/common.hpp"
#include "sbfscan/isa.hpp"
#include "sbfscan/syscalls.hpp"

namespace sbfscan {

// Output of the micro-assembler: relocatable text plus rodata blobs. The
// mini-syntax is documented in docs/asm.md and frozen by golden files.
struct AsmReloc {
  enum class Kind { SyscallHash, RodataAddr };
  Kind kind;
  size_t text_byte_offset;  // start of the instruction the reloc patches
  std::string symbol;
};

struct AsmObject {
  Bytes text;
  Bytes rodata;
  std::map<std::string, size_t> labels;       // name -> slot index in text
  std::map<std::string, size_t> rodata_syms;  // name -> byte offset in rodata
  std::vector<AsmReloc> relocs;
  size_t entry_slot = 0;
};

namespace asm_detail {

inline std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cur = strip(cur);
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::optional<int64_t> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  size_t pos = 0;
  bool neg = false;
  if (s[0] == '-') {
    neg = true;
    pos = 1;
  }
  if (pos >= s.size()) return std::nullopt;
  uint64_t v = 0;
  if (s.compare(pos, 2, "0x") == 0 || s.compare(pos, 2, "0X") == 0) {
    pos += 2;
    if (pos >= s.size()) return std::nullopt;
    for (; pos < s.size(); ++pos) {
      char c = static_cast<char>(std::tolower(s[pos]));
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else return std::nullopt;
      v = v * 16 + static_cast<uint64_t>(d);
    }
  } else {
    for (; pos < s.size(); ++pos) {
      if (!std::isdigit(static_cast<unsigned char>(s[pos]))) return std::nullopt;
      v = v * 10 + static_cast<uint64_t>(s[pos] - '0');
    }
  }
  int64_t sv = static_cast<int64_t>(v);
  return neg ? -sv : sv;
}

inline std::optional<uint8_t> parse_reg(const std::string& s) {
  if (s.size() < 2 || s[0] != 'r') return std::nullopt;
  auto n = parse_int(s.substr(1));
  if (!n || *n < 0 || *n > 10) return std::nullopt;
  return static_cast<uint8_t>(*n);
}

// "[rX+off]" / "[rX-off]" / "[rX]"
inline bool parse_memref(const std::string& s, uint8_t* reg, int16_t* off) {
  if (s.size() < 4 || s.front() != '[' || s.back() != ']') return false;
  std::string inner = strip(s.substr(1, s.size() - 2));
  size_t sep = inner.find_first_of("+-", 1);
  std::string regpart = sep == std::string::npos ? inner : strip(inner.substr(0, sep));
  auto r = parse_reg(regpart);
  if (!r) return false;
  *reg = *r;
  *off = 0;
  if (sep != std::string::npos) {
    std::string offpart = strip(inner.substr(sep));
    if (offpart.size() > 1 && offpart[0] == '+') offpart = strip(offpart.substr(1));
    auto o = parse_int(offpart);
    if (!o || *o < -32768 || *o > 32767) return false;
    *off = static_cast<int16_t>(*o);
  }
  return true;
}

struct PendingInsn {
  Instruction insn;
  size_t slot;          // slot index within text
  int line;
  std::string branch_target;  // non-empty for label-relative jumps/calls
  std::string reloc_symbol;   // non-empty for $syscall or =rodata refs
  AsmReloc::Kind reloc_kind = AsmReloc::Kind::SyscallHash;
};

inline std::optional<std::pair<AluOp, InsnClass>> alu_mnemonic(const std::string& m) {
  auto mk = [&](const std::string& base, AluOp op) -> std::optional<std::pair<AluOp, InsnClass>> {
    if (m == base + "64") return std::make_pair(op, InsnClass::ALU64);
    if (m == base + "32") return std::make_pair(op, InsnClass::ALU32);
    return std::nullopt;
  };
  for (auto& [name, op] : std::initializer_list<std::pair<const char*, AluOp>>{
           {"add", AluOp::ADD}, {"sub", AluOp::SUB}, {"mul", AluOp::MUL}, {"div", AluOp::DIV},
           {"or", AluOp::OR},   {"and", AluOp::AND}, {"lsh", AluOp::LSH}, {"rsh", AluOp::RSH},
           {"mod", AluOp::MOD}, {"xor", AluOp::XOR}, {"mov", AluOp::MOV}, {"arsh", AluOp::ARSH},
           {"neg", AluOp::NEG}}) {
    if (auto r = mk(name, op)) return r;
  }
  return std::nullopt;
}

inline std::optional<JmpOp> jmp_mnemonic(const std::string& m, bool* is32) {
  std::string base = m;
  *is32 = false;
  if (base.size() > 2 && base.compare(base.size() - 2, 2, "32") == 0) {
    *is32 = true;
    base = base.substr(0, base.size() - 2);
  }
  if (base == "jeq") return JmpOp::JEQ;
  if (base == "jne") return JmpOp::JNE;
  if (base == "jgt") return JmpOp::JGT;
  if (base == "jge") return JmpOp::JGE;
  if (base == "jlt") return JmpOp::JLT;
  if (base == "jle") return JmpOp::JLE;
  if (base == "jsgt") return JmpOp::JSGT;
  if (base == "jsge") return JmpOp::JSGE;
  if (base == "jslt") return JmpOp::JSLT;
  if (base == "jsle") return JmpOp::JSLE;
  if (base == "jset") return JmpOp::JSET;
  return std::nullopt;
}

inline std::optional<uint8_t> width_suffix(const std::string& m, const std::string& base) {
  if (m == base + "b") return 1;
  if (m == base + "h") return 2;
  if (m == base + "w") return 4;
  if (m == base + "dw") return 8;
  return std::nullopt;
}

}  // namespace asm_detail

// Assemble the repo's mini-syntax into text bytes, a label map, rodata blobs,
// and relocation records for syscalls and rodata address references.
inline AsmObject assemble(const std::string& source) {
  using namespace asm_detail;
  AsmObject obj;
  std::vector<PendingInsn> pending;
  size_t slot = 0;
  bool in_rodata = false;
  int lineno = 0;

  auto fail = [&](const std::string& msg) -> void {
    throw ScanError(ErrKind::ParseError, "line " + std::to_string(lineno) + ": " + msg);
  };

  std::istringstream in(source);
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    // Strip comments, but not inside string literals.
    std::string line;
    bool instr = false;
    for (char c : raw) {
      if (c == '"') instr = !instr;
      if (!instr && (c == ';' || c == '#')) break;
      line.push_back(c);
    }
    line = strip(line);
    if (line.empty()) continue;

    if (line == ".text") {
      in_rodata = false;
      continue;
    }
    if (line == ".rodata") {
      in_rodata = true;
      continue;
    }

    // Labels may share a line with the following content.
    while (true) {
      size_t colon = line.find(':');
      if (colon == std::string::npos) break;
      std::string name = strip(line.substr(0, colon));
      if (name.empty() || name.find(' ') != std::string::npos) break;
      if (in_rodata) {
        if (obj.rodata_syms.count(name)) fail("duplicate rodata label " + name);
        obj.rodata_syms[name] = obj.rodata.size();
      } else {
        if (obj.labels.count(name)) fail("duplicate label " + name);
        obj.labels[name] = slot;
      }
      line = strip(line.substr(colon + 1));
      if (line.empty()) break;
    }
    if (line.empty()) continue;

    if (in_rodata) {
      std::istringstream ls(line);
      std::string directive;
      ls >> directive;
      std::string rest = strip(line.substr(directive.size()));
      if (directive == ".ascii" || directive == ".asciz") {
        if (rest.size() < 2 || rest.front() != '"' || rest.back() != '"') fail("bad string literal");
        std::string body = rest.substr(1, rest.size() - 2);
        for (size_t i = 0; i < body.size(); ++i) {
          if (body[i] == '\\' && i + 1 < body.size()) {
            ++i;
            switch (body[i]) {
              case 'n': obj.rodata.push_back('\n'); break;
              case 't': obj.rodata.push_back('\t'); break;
              case '0': obj.rodata.push_back(0); break;
              case '\\': obj.rodata.push_back('\\'); break;
              case '"': obj.rodata.push_back('"'); break;
              default: fail("bad escape");
            }
          } else {
            obj.rodata.push_back(static_cast<uint8_t>(body[i]));
          }
        }
        if (directive == ".asciz") obj.rodata.push_back(0);
      } else if (directive == ".bytes") {
        std::string tok;
        while (ls >> tok) {
          auto v = parse_int(tok.size() > 2 && tok[0] == '0' ? tok : "0x" + tok);
          if (!v || *v < 0 || *v > 255) fail("bad byte " + tok);
          obj.rodata.push_back(static_cast<uint8_t>(*v));
        }
      } else if (directive == ".zero") {
        auto n = parse_int(rest);
        if (!n || *n < 0) fail("bad .zero count");
        obj.rodata.insert(obj.rodata.end(), static_cast<size_t>(*n), 0);
      } else if (directive == ".u64") {
        auto v = parse_int(rest);
        if (!v) fail("bad .u64 value");
        uint8_t buf[8];
        write_u64le(buf, static_cast<uint64_t>(*v));
        obj.rodata.insert(obj.rodata.end(), buf, buf + 8);
      } else {
        fail("unknown rodata directive " + directive);
      }
      continue;
    }

    std::istringstream ls(line);
    std::string mnem;
    ls >> mnem;
    std::string rest = strip(line.substr(mnem.size()));
    auto ops = split_operands(rest);

    PendingInsn pi;
    pi.slot = slot;
    pi.line = lineno;
    Instruction& insn = pi.insn;

    if (mnem == "exit") {
      if (!ops.empty()) fail("exit takes no operands");
      insn.klass = InsnClass::EXIT;
    } else if (mnem == "call") {
      if (ops.size() != 1) fail("call takes one operand");
      insn.klass = InsnClass::CALL;
      const std::string& t = ops[0];
      if (!t.empty() && t[0] == '$') {
        std::string name = t.substr(1);
        bool known = false;
        for (const auto& n : known_syscall_names())
          if (n == name) known = true;
        if (!known) throw ScanError(ErrKind::UnknownSyscall, name);
        insn.src = 0;
        insn.imm = -1;
        pi.reloc_symbol = name;
        pi.reloc_kind = AsmReloc::Kind::SyscallHash;
      } else {
        insn.src = 1;  // bpf-to-bpf call, slot-relative imm
        pi.branch_target = t;
      }
    } else if (auto alu = alu_mnemonic(mnem)) {
      insn.klass = alu->second;
      insn.alu_op = alu->first;
      if (insn.alu_op == AluOp::NEG) {
        if (ops.size() != 1) fail("neg takes one register");
        auto d = parse_reg(ops[0]);
        if (!d) fail("bad register");
        insn.dst = *d;
      } else {
        if (ops.size() != 2) fail(mnem + " takes two operands");
        auto d = parse_reg(ops[0]);
        if (!d) fail("bad destination register");
        insn.dst = *d;
        if (auto s = parse_reg(ops[1])) {
          insn.is_reg_src = true;
          insn.src = *s;
        } else if (auto v = parse_int(ops[1])) {
          insn.imm = *v;
        } else {
          fail("bad source operand " + ops[1]);
        }
      }
    } else if (mnem == "be16" || mnem == "be32" || mnem == "be64" || mnem == "le16" ||
               mnem == "le32" || mnem == "le64") {
      if (ops.size() != 1) fail(mnem + " takes one register");
      auto d = parse_reg(ops[0]);
      if (!d) fail("bad register");
      insn.klass = InsnClass::ALU32;
      insn.alu_op = mnem[0] == 'b' ? AluOp::END_BE : AluOp::END_LE;
      insn.dst = *d;
      insn.imm = parse_int(mnem.substr(2)).value();
    } else if (mnem == "lddw") {
      if (ops.size() != 2) fail("lddw takes two operands");
      auto d = parse_reg(ops[0]);
      if (!d) fail("bad register");
      insn.klass = InsnClass::LD_IMM64;
      insn.size_slots = 2;
      insn.dst = *d;
      if (!ops[1].empty() && ops[1][0] == '=') {
        pi.reloc_symbol = ops[1].substr(1);
        pi.reloc_kind = AsmReloc::Kind::RodataAddr;
        insn.imm = 0;
      } else if (auto v = parse_int(ops[1])) {
        insn.imm = *v;
      } else {
        fail("bad lddw operand " + ops[1]);
      }
    } else if (auto w = width_suffix(mnem, "ldx")) {
      if (ops.size() != 2) fail("ldx takes two operands");
      auto d = parse_reg(ops[0]);
      uint8_t base;
      int16_t off;
      if (!d || !parse_memref(ops[1], &base, &off)) fail("bad ldx operands");
      insn.klass = InsnClass::LDX;
      insn.width = *w;
      insn.dst = *d;
      insn.src = base;
      insn.offset = off;
    } else if (auto w2 = width_suffix(mnem, "stx")) {
      if (ops.size() != 2) fail("stx takes two operands");
      uint8_t base;
      int16_t off;
      auto s = parse_reg(ops[1]);
      if (!s || !parse_memref(ops[0], &base, &off)) fail("bad stx operands");
      insn.klass = InsnClass::STX;
      insn.width = *w2;
      insn.dst = base;
      insn.src = *s;
      insn.offset = off;
    } else if (auto w3 = width_suffix(mnem, "st")) {
      if (ops.size() != 2) fail("st takes two operands");
      uint8_t base;
      int16_t off;
      auto v = parse_int(ops[1]);
      if (!v || !parse_memref(ops[0], &base, &off)) fail("bad st operands");
      insn.klass = InsnClass::ST;
      insn.width = *w3;
      insn.dst = base;
      insn.offset = off;
      insn.imm = *v;
    } else if (mnem == "ja") {
      if (ops.size() != 1) fail("ja takes a label");
      insn.klass = InsnClass::JMP;
      insn.jmp_op = JmpOp::JA;
      pi.branch_target = ops[0];
    } else {
      bool is32 = false;
      if (auto j = jmp_mnemonic(mnem, &is32)) {
        if (ops.size() != 3) fail(mnem + " takes reg, operand, label");
        insn.klass = is32 ? InsnClass::JMP32 : InsnClass::JMP;
        insn.jmp_op = *j;
        auto d = parse_reg(ops[0]);
        if (!d) fail("bad register");
        insn.dst = *d;
        if (auto s = parse_reg(ops[1])) {
          insn.is_reg_src = true;
          insn.src = *s;
        } else if (auto v = parse_int(ops[1])) {
          insn.imm = *v;
        } else {
          fail("bad jump operand " + ops[1]);
        }
        pi.branch_target = ops[2];
      } else {
        fail("unknown mnemonic " + mnem);
      }
    }

    slot += insn.size_slots;
    pending.push_back(std::move(pi));
  }

  // Second pass: resolve labels to slot displacements, emit bytes.
  for (auto& pi : pending) {
    if (!pi.branch_target.empty()) {
      auto it = obj.labels.find(pi.branch_target);
      if (it == obj.labels.end())
        throw ScanError(ErrKind::UnknownLabel,
                        pi.branch_target + " (line " + std::to_string(pi.line) + ")");
      int64_t disp = static_cast<int64_t>(it->second) -
                     static_cast<int64_t>(pi.slot + pi.insn.size_slots);
      if (pi.insn.klass == InsnClass::CALL) {
        pi.insn.imm = disp;
      } else {
        if (disp < -32768 || disp > 32767)
          throw ScanError(ErrKind::Unencodable, "branch displacement too large");
        pi.insn.offset = static_cast<int16_t>(disp);
      }
    }
    if (!pi.reloc_symbol.empty()) {
      if (pi.reloc_kind == AsmReloc::Kind::RodataAddr &&
          !obj.rodata_syms.count(pi.reloc_symbol))
        throw ScanError(ErrKind::UnknownLabel, pi.reloc_symbol);
      obj.relocs.push_back({pi.reloc_kind, pi.slot * 8, pi.reloc_symbol});
    }
    Bytes enc = encode(pi.insn);
    obj.text.insert(obj.text.end(), enc.begin(), enc.end());
  }

  auto entry_it = obj.labels.find("entrypoint");
  obj.entry_slot = entry_it != obj.labels.end() ? entry_it->second : 0;
  return obj;
}

}  // namespace sbfscan
