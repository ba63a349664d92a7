#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "sbfscan/common.hpp"

namespace sbfscan {

// Where an input symbol came from. AccountField and InstructionData bytes are
// attacker-controlled; ProgramId is runtime-trusted; Derived marks outputs of
// hashing/PDA syscalls.
struct Origin {
  enum class Src { AccountField, InstructionData, ProgramId, Derived };
  enum class Field {
    None,
    IsSigner,
    IsWritable,
    Executable,
    KeyByte,
    OwnerByte,
    Lamports,
    DataLen,
    DataByte,
  };

  Src src = Src::InstructionData;
  int account = -1;   // for AccountField
  Field field = Field::None;
  int index = -1;     // byte index within the field / data
  int derived_id = -1;

  auto tie() const { return std::tie(src, account, field, index, derived_id); }
  bool operator==(const Origin& o) const { return tie() == o.tie(); }
  bool operator<(const Origin& o) const { return tie() < o.tie(); }

  bool attacker_controlled() const {
    return src == Src::AccountField || src == Src::InstructionData;
  }

  std::string to_string() const {
    switch (src) {
      case Src::InstructionData: return "instr_data[" + std::to_string(index) + "]";
      case Src::ProgramId: return "program_id[" + std::to_string(index) + "]";
      case Src::Derived:
        return "derived" + std::to_string(derived_id) + "[" + std::to_string(index) + "]";
      case Src::AccountField: {
        std::string f;
        switch (field) {
          case Field::IsSigner: f = "is_signer"; break;
          case Field::IsWritable: f = "is_writable"; break;
          case Field::Executable: f = "executable"; break;
          case Field::KeyByte: f = "key[" + std::to_string(index) + "]"; break;
          case Field::OwnerByte: f = "owner[" + std::to_string(index) + "]"; break;
          case Field::Lamports: f = "lamports[" + std::to_string(index) + "]"; break;
          case Field::DataLen: f = "data_len[" + std::to_string(index) + "]"; break;
          case Field::DataByte: f = "data[" + std::to_string(index) + "]"; break;
          default: f = "?"; break;
        }
        return "account" + std::to_string(account) + "." + f;
      }
    }
    return "?";
  }
};

enum class ExprKind {
  Const,
  Input,
  Add,
  Sub,
  Mul,
  Div,
  Mod,
  And,
  Or,
  Xor,
  Shl,
  LShr,
  AShr,
  Neg,
  ZExt,
  SExt,
  Extract,
  Concat,  // Concat(hi, lo)
  Ite,
  CmpEq,
  CmpNe,
  CmpULt,
  CmpULe,
  CmpSLt,
  CmpSLe,
};

struct Expr;
using ExprRef = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind;
  uint16_t width;       // bits
  uint64_t cval = 0;    // Const (width <= 64)
  Origin origin;        // Input
  uint16_t hi = 0, lo = 0;  // Extract
  ExprRef a, b, c;      // children

  bool is_const() const { return kind == ExprKind::Const; }
  bool is_const(uint64_t v) const { return kind == ExprKind::Const && cval == v; }
};

// Value of a (possibly wide) expression under a concrete assignment.
struct WideVal {
  uint16_t width = 0;
  std::array<uint64_t, 4> limbs{};  // little-endian 64-bit limbs

  uint64_t low() const { return limbs[0]; }
  bool operator==(const WideVal&) const = default;

  static WideVal of(uint16_t w, uint64_t v) {
    WideVal r;
    r.width = w;
    r.limbs[0] = w >= 64 ? v : (v & ((w == 0 ? 0 : (~0ull >> (64 - w)))));
    return r;
  }

  bool bit(uint16_t i) const { return (limbs[i / 64] >> (i % 64)) & 1; }
  void set_bit(uint16_t i, bool v) {
    if (v)
      limbs[i / 64] |= 1ull << (i % 64);
    else
      limbs[i / 64] &= ~(1ull << (i % 64));
  }

  Bytes bytes() const {
    Bytes out(width / 8);
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<uint8_t>(limbs[i / 8] >> (8 * (i % 8)));
    return out;
  }
};

namespace expr_detail {

inline uint64_t mask_of(uint16_t w) { return w >= 64 ? ~0ull : ((1ull << w) - 1); }

inline ExprRef make(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

}  // namespace expr_detail

inline ExprRef mk_const(uint16_t width, uint64_t v) {
  Expr e;
  e.kind = ExprKind::Const;
  e.width = width;
  e.cval = width <= 64 ? (v & expr_detail::mask_of(width)) : v;
  return expr_detail::make(std::move(e));
}

inline ExprRef mk_bool(bool v) { return mk_const(1, v ? 1 : 0); }

inline ExprRef mk_input(const Origin& origin, uint16_t width = 8) {
  Expr e;
  e.kind = ExprKind::Input;
  e.width = width;
  e.origin = origin;
  return expr_detail::make(std::move(e));
}

inline int64_t sext64(uint64_t v, uint16_t w) {
  if (w >= 64) return static_cast<int64_t>(v);
  uint64_t sign = 1ull << (w - 1);
  return static_cast<int64_t>((v ^ sign) - sign);
}

ExprRef mk_extract(const ExprRef& x, uint16_t hi, uint16_t lo);

inline ExprRef mk_binop(ExprKind kind, const ExprRef& a, const ExprRef& b) {
  using namespace expr_detail;
  uint16_t w = a->width;
  bool is_cmp = kind >= ExprKind::CmpEq;
  if (a->is_const() && b->is_const() && w <= 64) {
    uint64_t x = a->cval, y = b->cval, m = mask_of(w);
    switch (kind) {
      case ExprKind::Add: return mk_const(w, (x + y) & m);
      case ExprKind::Sub: return mk_const(w, (x - y) & m);
      case ExprKind::Mul: return mk_const(w, (x * y) & m);
      case ExprKind::Div:
        if (y != 0) return mk_const(w, (x / y) & m);
        break;
      case ExprKind::Mod:
        if (y != 0) return mk_const(w, (x % y) & m);
        break;
      case ExprKind::And: return mk_const(w, x & y);
      case ExprKind::Or: return mk_const(w, x | y);
      case ExprKind::Xor: return mk_const(w, x ^ y);
      case ExprKind::Shl: return mk_const(w, y >= w ? 0 : ((x << y) & m));
      case ExprKind::LShr: return mk_const(w, y >= w ? 0 : (x >> y));
      case ExprKind::AShr: {
        uint64_t sh = y >= w ? w - 1 : y;
        return mk_const(w, static_cast<uint64_t>(sext64(x, w) >> sh) & m);
      }
      case ExprKind::CmpEq: return mk_bool(x == y);
      case ExprKind::CmpNe: return mk_bool(x != y);
      case ExprKind::CmpULt: return mk_bool(x < y);
      case ExprKind::CmpULe: return mk_bool(x <= y);
      case ExprKind::CmpSLt: return mk_bool(sext64(x, w) < sext64(y, w));
      case ExprKind::CmpSLe: return mk_bool(sext64(x, w) <= sext64(y, w));
      default: break;
    }
  }
  // Identity simplifications.
  if (b->is_const()) {
    uint64_t y = b->cval;
    switch (kind) {
      case ExprKind::Add:
      case ExprKind::Sub:
      case ExprKind::Or:
      case ExprKind::Xor:
      case ExprKind::Shl:
      case ExprKind::LShr:
      case ExprKind::AShr:
        if (y == 0 && b->width <= 64) return a;
        break;
      case ExprKind::Mul:
        if (y == 1 && b->width <= 64) return a;
        if (y == 0 && b->width <= 64) return b;
        break;
      case ExprKind::And:
        if (b->width <= 64) {
          if (y == 0) return b;
          if (y == mask_of(w)) return a;
        }
        break;
      default: break;
    }
  }
  if (a.get() == b.get()) {
    switch (kind) {
      case ExprKind::CmpEq:
      case ExprKind::CmpULe:
      case ExprKind::CmpSLe: return mk_bool(true);
      case ExprKind::CmpNe:
      case ExprKind::CmpULt:
      case ExprKind::CmpSLt: return mk_bool(false);
      case ExprKind::Sub:
      case ExprKind::Xor: return mk_const(w, 0);
      default: break;
    }
  }
  Expr e;
  e.kind = kind;
  e.width = is_cmp ? 1 : w;
  e.a = a;
  e.b = b;
  return make(std::move(e));
}

inline ExprRef mk_add(const ExprRef& a, const ExprRef& b) { return mk_binop(ExprKind::Add, a, b); }
inline ExprRef mk_sub(const ExprRef& a, const ExprRef& b) { return mk_binop(ExprKind::Sub, a, b); }
inline ExprRef mk_eq(const ExprRef& a, const ExprRef& b) { return mk_binop(ExprKind::CmpEq, a, b); }
inline ExprRef mk_ne(const ExprRef& a, const ExprRef& b) { return mk_binop(ExprKind::CmpNe, a, b); }

inline ExprRef mk_not(const ExprRef& c) {
  if (c->is_const()) return mk_bool(c->cval == 0);
  return mk_binop(ExprKind::CmpEq, c, mk_const(1, 0));
}

inline ExprRef mk_neg(const ExprRef& x) {
  if (x->is_const() && x->width <= 64)
    return mk_const(x->width, (~x->cval + 1) & expr_detail::mask_of(x->width));
  Expr e;
  e.kind = ExprKind::Neg;
  e.width = x->width;
  e.a = x;
  return expr_detail::make(std::move(e));
}

inline ExprRef mk_zext(const ExprRef& x, uint16_t width) {
  if (width == x->width) return x;
  if (x->is_const() && x->width <= 64 && width <= 64) return mk_const(width, x->cval);
  Expr e;
  e.kind = ExprKind::ZExt;
  e.width = width;
  e.a = x;
  return expr_detail::make(std::move(e));
}

inline ExprRef mk_sext(const ExprRef& x, uint16_t width) {
  if (width == x->width) return x;
  if (x->is_const() && x->width <= 64 && width <= 64)
    return mk_const(width, static_cast<uint64_t>(sext64(x->cval, x->width)));
  Expr e;
  e.kind = ExprKind::SExt;
  e.width = width;
  e.a = x;
  return expr_detail::make(std::move(e));
}

inline ExprRef mk_concat(const ExprRef& hi, const ExprRef& lo) {
  if (hi->is_const() && lo->is_const() && hi->width + lo->width <= 64)
    return mk_const(static_cast<uint16_t>(hi->width + lo->width),
                    (hi->cval << lo->width) | lo->cval);
  if (hi->is_const(0) && hi->width + lo->width <= 64) return mk_zext(lo, hi->width + lo->width);
  Expr e;
  e.kind = ExprKind::Concat;
  e.width = static_cast<uint16_t>(hi->width + lo->width);
  e.a = hi;
  e.b = lo;
  return expr_detail::make(std::move(e));
}

inline ExprRef mk_extract(const ExprRef& x, uint16_t hi, uint16_t lo) {
  uint16_t w = static_cast<uint16_t>(hi - lo + 1);
  if (lo == 0 && w == x->width) return x;
  if (x->is_const() && x->width <= 64)
    return mk_const(w, (x->cval >> lo) & expr_detail::mask_of(w));
  switch (x->kind) {
    case ExprKind::Concat: {
      uint16_t lo_w = x->b->width;
      if (hi < lo_w) return mk_extract(x->b, hi, lo);
      if (lo >= lo_w)
        return mk_extract(x->a, static_cast<uint16_t>(hi - lo_w), static_cast<uint16_t>(lo - lo_w));
      // Straddles the seam: extract both halves and re-concat.
      return mk_concat(mk_extract(x->a, static_cast<uint16_t>(hi - lo_w), 0),
                       mk_extract(x->b, static_cast<uint16_t>(lo_w - 1), lo));
    }
    case ExprKind::Extract:
      return mk_extract(x->a, static_cast<uint16_t>(x->lo + hi), static_cast<uint16_t>(x->lo + lo));
    case ExprKind::ZExt: {
      if (hi < x->a->width) return mk_extract(x->a, hi, lo);
      if (lo >= x->a->width) return mk_const(w, 0);
      break;
    }
    default:
      break;
  }
  Expr e;
  e.kind = ExprKind::Extract;
  e.width = w;
  e.hi = hi;
  e.lo = lo;
  e.a = x;
  return expr_detail::make(std::move(e));
}

inline ExprRef mk_ite(const ExprRef& c, const ExprRef& a, const ExprRef& b) {
  if (c->is_const()) return c->cval ? a : b;
  if (a.get() == b.get()) return a;
  Expr e;
  e.kind = ExprKind::Ite;
  e.width = a->width;
  e.a = a;
  e.b = b;
  e.c = c;
  return expr_detail::make(std::move(e));
}

// Little-endian byte composition: bytes[0] is the least significant.
inline ExprRef concat_bytes_le(const std::vector<ExprRef>& bytes) {
  ExprRef acc = bytes.back();
  for (size_t i = bytes.size() - 1; i-- > 0;) acc = mk_concat(acc, bytes[i]);
  return acc;
}

inline ExprRef extract_byte(const ExprRef& x, uint16_t i) {
  return mk_extract(x, static_cast<uint16_t>(i * 8 + 7), static_cast<uint16_t>(i * 8));
}

// Union of the origins of all Input leaves, one traversal.
inline void collect_origins(const ExprRef& e, std::set<Origin>& out,
                            std::set<const Expr*>& seen) {
  if (!e || seen.count(e.get())) return;
  seen.insert(e.get());
  if (e->kind == ExprKind::Input) out.insert(e->origin);
  collect_origins(e->a, out, seen);
  collect_origins(e->b, out, seen);
  collect_origins(e->c, out, seen);
}

inline std::set<Origin> origins(const ExprRef& e) {
  std::set<Origin> out;
  std::set<const Expr*> seen;
  collect_origins(e, out, seen);
  return out;
}

// Concrete evaluation under a model mapping input origins to byte values.
// Division by zero evaluates to the eBPF fault value path and must be handled
// by callers before evaluation; here it yields 0 to stay total.
class Evaluator {
 public:
  explicit Evaluator(std::function<uint64_t(const Origin&)> model) : model_(std::move(model)) {}

  WideVal eval(const ExprRef& e) {
    auto it = memo_.find(e.get());
    if (it != memo_.end()) return it->second;
    WideVal v = compute(e);
    memo_.emplace(e.get(), v);
    return v;
  }

 private:
  WideVal compute(const ExprRef& e) {
    using K = ExprKind;
    switch (e->kind) {
      case K::Const: return WideVal::of(e->width, e->cval);
      case K::Input: return WideVal::of(e->width, model_(e->origin));
      case K::Neg: return WideVal::of(e->width, ~eval(e->a).low() + 1);
      case K::ZExt: {
        WideVal a = eval(e->a);
        WideVal r;
        r.width = e->width;
        r.limbs = a.limbs;
        return r;
      }
      case K::SExt: {
        WideVal a = eval(e->a);
        return WideVal::of(e->width, static_cast<uint64_t>(sext64(a.low(), e->a->width)));
      }
      case K::Extract: {
        WideVal a = eval(e->a);
        WideVal r;
        r.width = e->width;
        for (uint16_t i = 0; i < e->width; ++i) r.set_bit(i, a.bit(e->lo + i));
        return r;
      }
      case K::Concat: {
        WideVal hi = eval(e->a), lo = eval(e->b);
        WideVal r;
        r.width = e->width;
        for (uint16_t i = 0; i < lo.width; ++i) r.set_bit(i, lo.bit(i));
        for (uint16_t i = 0; i < hi.width; ++i) r.set_bit(lo.width + i, hi.bit(i));
        return r;
      }
      case K::Ite: return eval(e->c).low() ? eval(e->a) : eval(e->b);
      case K::CmpEq: return WideVal::of(1, eval(e->a) == eval(e->b));
      case K::CmpNe: return WideVal::of(1, !(eval(e->a) == eval(e->b)));
      default: break;
    }
    uint16_t w = e->a->width;
    uint64_t m = expr_detail::mask_of(w);
    uint64_t x = eval(e->a).low(), y = eval(e->b).low();
    switch (e->kind) {
      case K::Add: return WideVal::of(w, x + y);
      case K::Sub: return WideVal::of(w, x - y);
      case K::Mul: return WideVal::of(w, x * y);
      case K::Div: return WideVal::of(w, y == 0 ? 0 : x / y);
      case K::Mod: return WideVal::of(w, y == 0 ? 0 : x % y);
      case K::And: return WideVal::of(w, x & y);
      case K::Or: return WideVal::of(w, x | y);
      case K::Xor: return WideVal::of(w, x ^ y);
      case K::Shl: return WideVal::of(w, y >= w ? 0 : (x << y));
      case K::LShr: return WideVal::of(w, y >= w ? 0 : ((x & m) >> y));
      case K::AShr: {
        uint64_t sh = y >= w ? w - 1 : y;
        return WideVal::of(w, static_cast<uint64_t>(sext64(x, w) >> sh));
      }
      case K::CmpULt: return WideVal::of(1, (x & m) < (y & m));
      case K::CmpULe: return WideVal::of(1, (x & m) <= (y & m));
      case K::CmpSLt: return WideVal::of(1, sext64(x, w) < sext64(y, w));
      case K::CmpSLe: return WideVal::of(1, sext64(x, w) <= sext64(y, w));
      default: break;
    }
    return WideVal::of(e->width, 0);
  }

  std::function<uint64_t(const Origin&)> model_;
  std::unordered_map<const Expr*, WideVal> memo_;
};

}  // namespace sbfscan
