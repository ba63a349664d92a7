#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sbfscan/expr.hpp"
#include "sbfscan/sat.hpp"

namespace sbfscan {

struct Verdict {
  enum class Kind { Sat, Unsat, Unknown };
  enum class Why { None, Budget, UnsupportedOp };
  Kind kind = Kind::Unknown;
  Why why = Why::None;

  bool sat() const { return kind == Kind::Sat; }
  bool unsat() const { return kind == Kind::Unsat; }
  bool unknown() const { return kind == Kind::Unknown; }

  static Verdict mk_sat() { return {Kind::Sat, Why::None}; }
  static Verdict mk_unsat() { return {Kind::Unsat, Why::None}; }
  static Verdict mk_unknown(Why w) { return {Kind::Unknown, w}; }
};

// Tseitin bit-blaster over the engine's operator set. One instance per query
// session; supports incremental blocking clauses for model enumeration.
class BitBlaster {
 public:
  BitBlaster() {
    int v = sat_.new_var();  // var 0 is the constant TRUE
    sat_.add_clause({SatSolver::pos(v)});
  }

  int lit_true() const { return SatSolver::pos(0); }
  int lit_false() const { return SatSolver::neg(0); }

  // Bit vector of literals, LSB first.
  const std::vector<int>& blast(const ExprRef& e) {
    auto it = memo_.find(e.get());
    if (it != memo_.end()) return it->second;
    std::vector<int> bits = compute(e);
    return memo_.emplace(e.get(), std::move(bits)).first->second;
  }

  void assert_true(const ExprRef& cond) {
    const auto& bits = blast(cond);
    sat_.add_clause({bits[0]});
  }

  SatSolver::Result solve(uint64_t conflict_budget) { return sat_.solve(conflict_budget); }

  // Reads the value of an already-blasted expression from the current model.
  WideVal read_model(const ExprRef& e) {
    const auto& bits = blast(e);
    WideVal v;
    v.width = e->width;
    for (size_t i = 0; i < bits.size(); ++i) v.set_bit(static_cast<uint16_t>(i), lit_model(bits[i]));
    return v;
  }

  // Adds a clause forcing e != value.
  void block_value(const ExprRef& e, const WideVal& value) {
    const auto& bits = blast(e);
    std::vector<int> clause;
    for (size_t i = 0; i < bits.size(); ++i)
      clause.push_back(value.bit(static_cast<uint16_t>(i)) ? SatSolver::negate(bits[i]) : bits[i]);
    sat_.add_clause(clause);
  }

  // Model value for an input origin, if that symbol was part of the query.
  std::optional<uint64_t> input_model(const Origin& origin) {
    auto it = input_bits_.find(origin);
    if (it == input_bits_.end()) return std::nullopt;
    uint64_t v = 0;
    for (size_t i = 0; i < it->second.size(); ++i)
      if (lit_model(it->second[i])) v |= 1ull << i;
    return v;
  }

  bool saw_unsupported() const { return unsupported_; }

 private:
  bool lit_model(int lit) const {
    bool v = sat_.model_value(SatSolver::var_of(lit));
    return (lit & 1) ? !v : v;
  }

  int fresh() { return SatSolver::pos(sat_.new_var()); }

  int mk_and(int a, int b) {
    if (a == lit_false() || b == lit_false()) return lit_false();
    if (a == lit_true()) return b;
    if (b == lit_true()) return a;
    if (a == b) return a;
    if (a == SatSolver::negate(b)) return lit_false();
    int o = fresh();
    sat_.add_clause({SatSolver::negate(o), a});
    sat_.add_clause({SatSolver::negate(o), b});
    sat_.add_clause({o, SatSolver::negate(a), SatSolver::negate(b)});
    return o;
  }

  int mk_or(int a, int b) {
    return SatSolver::negate(mk_and(SatSolver::negate(a), SatSolver::negate(b)));
  }

  int mk_xor(int a, int b) {
    if (a == lit_false()) return b;
    if (b == lit_false()) return a;
    if (a == lit_true()) return SatSolver::negate(b);
    if (b == lit_true()) return SatSolver::negate(a);
    if (a == b) return lit_false();
    if (a == SatSolver::negate(b)) return lit_true();
    int o = fresh();
    sat_.add_clause({SatSolver::negate(o), a, b});
    sat_.add_clause({SatSolver::negate(o), SatSolver::negate(a), SatSolver::negate(b)});
    sat_.add_clause({o, SatSolver::negate(a), b});
    sat_.add_clause({o, a, SatSolver::negate(b)});
    return o;
  }

  int mk_mux(int s, int t, int f) {  // s ? t : f
    if (s == lit_true()) return t;
    if (s == lit_false()) return f;
    if (t == f) return t;
    return mk_or(mk_and(s, t), mk_and(SatSolver::negate(s), f));
  }

  std::vector<int> add_vec(const std::vector<int>& a, const std::vector<int>& b, int carry_in) {
    std::vector<int> out(a.size());
    int carry = carry_in;
    for (size_t i = 0; i < a.size(); ++i) {
      int s = mk_xor(mk_xor(a[i], b[i]), carry);
      int c = mk_or(mk_and(a[i], b[i]), mk_and(carry, mk_xor(a[i], b[i])));
      out[i] = s;
      carry = c;
    }
    carry_out_ = carry;
    return out;
  }

  std::vector<int> not_vec(const std::vector<int>& a) {
    std::vector<int> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = SatSolver::negate(a[i]);
    return out;
  }

  int eq_vec(const std::vector<int>& a, const std::vector<int>& b) {
    int acc = lit_true();
    for (size_t i = 0; i < a.size(); ++i)
      acc = mk_and(acc, SatSolver::negate(mk_xor(a[i], b[i])));
    return acc;
  }

  int ult_vec(const std::vector<int>& a, const std::vector<int>& b) {
    // a < b unsigned iff a - b has no carry out.
    add_vec(a, not_vec(b), lit_true());
    return SatSolver::negate(carry_out_);
  }

  int slt_vec(const std::vector<int>& a, const std::vector<int>& b) {
    int sa = a.back(), sb = b.back();
    int u = ult_vec(a, b);
    return mk_or(mk_and(sa, SatSolver::negate(sb)),
                 mk_and(SatSolver::negate(mk_xor(sa, sb)), u));
  }

  std::vector<int> shift_vec(const std::vector<int>& a, const std::vector<int>& amt, bool left,
                             bool arith) {
    size_t w = a.size();
    std::vector<int> cur = a;
    int fill = arith ? a.back() : lit_false();
    size_t stages = 0;
    while ((1ull << stages) < w) ++stages;
    for (size_t s = 0; s < stages; ++s) {
      size_t k = 1ull << s;
      std::vector<int> shifted(w);
      for (size_t i = 0; i < w; ++i) {
        if (left)
          shifted[i] = i >= k ? cur[i - k] : lit_false();
        else
          shifted[i] = i + k < w ? cur[i + k] : fill;
      }
      int sel = s < amt.size() ? amt[s] : lit_false();
      for (size_t i = 0; i < w; ++i) cur[i] = mk_mux(sel, shifted[i], cur[i]);
    }
    // Shift amounts >= w zero (or sign-fill) the result.
    int oob = lit_false();
    for (size_t i = stages; i < amt.size(); ++i) oob = mk_or(oob, amt[i]);
    for (size_t i = 0; i < w; ++i) cur[i] = mk_mux(oob, left ? lit_false() : fill, cur[i]);
    return cur;
  }

  std::vector<int> mul_vec(const std::vector<int>& a, const std::vector<int>& b) {
    size_t w = a.size();
    std::vector<int> acc(w, lit_false());
    for (size_t i = 0; i < w; ++i) {
      std::vector<int> addend(w, lit_false());
      for (size_t j = 0; i + j < w; ++j) addend[i + j] = mk_and(a[j], b[i]);
      acc = add_vec(acc, addend, lit_false());
    }
    return acc;
  }

  // Restoring division; quotient and remainder for unsigned operands.
  void divmod_vec(const std::vector<int>& n, const std::vector<int>& d, std::vector<int>* q,
                  std::vector<int>* r) {
    size_t w = n.size();
    std::vector<int> rem(w + 1, lit_false());
    std::vector<int> dext(w + 1);
    for (size_t i = 0; i < w; ++i) dext[i] = d[i];
    dext[w] = lit_false();
    q->assign(w, lit_false());
    for (size_t i = w; i-- > 0;) {
      // rem = (rem << 1) | n[i]
      for (size_t j = w; j > 0; --j) rem[j] = rem[j - 1];
      rem[0] = n[i];
      std::vector<int> diff = add_vec(rem, not_vec(dext), lit_true());
      int ge = carry_out_;  // rem >= d
      (*q)[i] = ge;
      for (size_t j = 0; j <= w; ++j) rem[j] = mk_mux(ge, diff[j], rem[j]);
    }
    r->assign(rem.begin(), rem.begin() + static_cast<long>(w));
  }

  std::vector<int> compute(const ExprRef& e) {
    using K = ExprKind;
    switch (e->kind) {
      case K::Const: {
        std::vector<int> bits(e->width);
        for (uint16_t i = 0; i < e->width; ++i)
          bits[i] = (i < 64 && ((e->cval >> i) & 1)) ? lit_true() : lit_false();
        return bits;
      }
      case K::Input: {
        auto it = input_bits_.find(e->origin);
        if (it != input_bits_.end()) {
          // Same origin, distinct node: reuse the CNF variables.
          return it->second;
        }
        std::vector<int> bits(e->width);
        for (auto& b : bits) b = fresh();
        input_bits_.emplace(e->origin, bits);
        return bits;
      }
      case K::ZExt: {
        std::vector<int> bits = blast(e->a);
        bits.resize(e->width, lit_false());
        return bits;
      }
      case K::SExt: {
        std::vector<int> bits = blast(e->a);
        int sign = bits.back();
        bits.resize(e->width, sign);
        return bits;
      }
      case K::Extract: {
        const auto& bits = blast(e->a);
        return std::vector<int>(bits.begin() + e->lo, bits.begin() + e->hi + 1);
      }
      case K::Concat: {
        std::vector<int> lo = blast(e->b);
        const auto& hi = blast(e->a);
        lo.insert(lo.end(), hi.begin(), hi.end());
        return lo;
      }
      case K::Neg: {
        std::vector<int> zero(e->width, lit_false());
        return add_vec(zero, not_vec(blast(e->a)), lit_true());
      }
      case K::Ite: {
        int s = blast(e->c)[0];
        const auto a = blast(e->a);
        const auto b = blast(e->b);
        std::vector<int> out(e->width);
        for (size_t i = 0; i < out.size(); ++i) out[i] = mk_mux(s, a[i], b[i]);
        return out;
      }
      default:
        break;
    }
    const auto a = blast(e->a);
    const auto b = blast(e->b);
    switch (e->kind) {
      case K::Add: return add_vec(a, b, lit_false());
      case K::Sub: return add_vec(a, not_vec(b), lit_true());
      case K::And: {
        std::vector<int> out(a.size());
        for (size_t i = 0; i < a.size(); ++i) out[i] = mk_and(a[i], b[i]);
        return out;
      }
      case K::Or: {
        std::vector<int> out(a.size());
        for (size_t i = 0; i < a.size(); ++i) out[i] = mk_or(a[i], b[i]);
        return out;
      }
      case K::Xor: {
        std::vector<int> out(a.size());
        for (size_t i = 0; i < a.size(); ++i) out[i] = mk_xor(a[i], b[i]);
        return out;
      }
      case K::Mul:
        if (a.size() > 64) break;
        return mul_vec(a, b);
      case K::Div: {
        if (a.size() > 64) break;
        std::vector<int> q, r;
        divmod_vec(a, b, &q, &r);
        return q;
      }
      case K::Mod: {
        if (a.size() > 64) break;
        std::vector<int> q, r;
        divmod_vec(a, b, &q, &r);
        return r;
      }
      case K::Shl: return shift_vec(a, b, true, false);
      case K::LShr: return shift_vec(a, b, false, false);
      case K::AShr: return shift_vec(a, b, false, true);
      case K::CmpEq: return {eq_vec(a, b)};
      case K::CmpNe: return {SatSolver::negate(eq_vec(a, b))};
      case K::CmpULt: return {ult_vec(a, b)};
      case K::CmpULe: return {SatSolver::negate(ult_vec(b, a))};
      case K::CmpSLt: return {slt_vec(a, b)};
      case K::CmpSLe: return {SatSolver::negate(slt_vec(b, a))};
      default:
        break;
    }
    unsupported_ = true;
    return std::vector<int>(e->width, lit_false());
  }

  SatSolver sat_;
  std::unordered_map<const Expr*, std::vector<int>> memo_;
  std::map<Origin, std::vector<int>> input_bits_;
  int carry_out_ = 0;
  bool unsupported_ = false;
};

// Equality-propagation presolve: bindings Origin -> byte value extracted from
// constraints of the form input == const (including multi-byte loads compared
// against constants), substituted back until fixpoint. Most fixture path
// conditions collapse to constants here without touching the SAT core.
class Presolver {
 public:
  // Returns simplified constraints; `contradiction` set when a constraint
  // folded to false.
  std::vector<ExprRef> run(const std::vector<ExprRef>& constraints, bool* contradiction) {
    *contradiction = false;
    std::vector<ExprRef> cur = constraints;
    for (int round = 0; round < 8; ++round) {
      size_t before = bindings_.size();
      for (const auto& c : cur) extract_bindings(c);
      if (bindings_.size() == before && round > 0) break;
      rewrite_memo_.clear();
      std::vector<ExprRef> next;
      for (const auto& c : cur) {
        ExprRef r = rewrite(c);
        if (r->is_const()) {
          if (r->cval == 0) {
            *contradiction = true;
            return {};
          }
          continue;  // constant-true constraints drop out
        }
        next.push_back(r);
      }
      cur = std::move(next);
      if (bindings_.size() == before) break;
    }
    return cur;
  }

  ExprRef apply(const ExprRef& e) { return rewrite(e); }

  const std::map<Origin, uint64_t>& bindings() const { return bindings_; }

 private:
  // Decompose eq(x, const) where x is a pure Input/Concat/ZExt composition.
  void extract_bindings(const ExprRef& c) {
    if (c->kind != ExprKind::CmpEq) return;
    ExprRef x = c->a, k = c->b;
    if (x->is_const()) std::swap(x, k);
    if (!k->is_const() || k->width > 64) return;
    bind_slices(x, k->cval);
  }

  void bind_slices(const ExprRef& x, uint64_t value) {
    switch (x->kind) {
      case ExprKind::Input:
        if (x->width <= 64) {
          auto it = bindings_.find(x->origin);
          if (it == bindings_.end()) bindings_.emplace(x->origin, value);
        }
        return;
      case ExprKind::Concat:
        bind_slices(x->b, value & expr_detail::mask_of(x->b->width));
        bind_slices(x->a, x->b->width >= 64 ? 0 : (value >> x->b->width));
        return;
      case ExprKind::ZExt:
        bind_slices(x->a, value & expr_detail::mask_of(x->a->width));
        return;
      default:
        return;
    }
  }

  ExprRef rewrite(const ExprRef& e) {
    auto it = rewrite_memo_.find(e.get());
    if (it != rewrite_memo_.end()) return it->second;
    ExprRef out;
    if (e->kind == ExprKind::Input) {
      auto bit = bindings_.find(e->origin);
      out = bit != bindings_.end() ? mk_const(e->width, bit->second) : e;
    } else if (!e->a) {
      out = e;
    } else {
      ExprRef a = rewrite(e->a);
      ExprRef b = e->b ? rewrite(e->b) : nullptr;
      ExprRef c = e->c ? rewrite(e->c) : nullptr;
      if (a == e->a && b == e->b && c == e->c) {
        out = e;
      } else {
        switch (e->kind) {
          case ExprKind::Neg: out = mk_neg(a); break;
          case ExprKind::ZExt: out = mk_zext(a, e->width); break;
          case ExprKind::SExt: out = mk_sext(a, e->width); break;
          case ExprKind::Extract: out = mk_extract(a, e->hi, e->lo); break;
          case ExprKind::Concat: out = mk_concat(a, b); break;
          case ExprKind::Ite: out = mk_ite(c, a, b); break;
          default: out = mk_binop(e->kind, a, b); break;
        }
      }
    }
    rewrite_memo_.emplace(e.get(), out);
    return out;
  }

  std::map<Origin, uint64_t> bindings_;
  std::unordered_map<const Expr*, ExprRef> rewrite_memo_;
};

// Renders a constraint set in an SMT-LIB-like sexpr form for manual triage.
inline std::string expr_to_sexpr(const ExprRef& e) {
  using K = ExprKind;
  std::ostringstream os;
  switch (e->kind) {
    case K::Const: os << "#x" << std::hex << e->cval << "/" << std::dec << e->width; break;
    case K::Input: os << e->origin.to_string(); break;
    default: {
      static const std::map<ExprKind, std::string> names = {
          {K::Add, "bvadd"},   {K::Sub, "bvsub"},   {K::Mul, "bvmul"},   {K::Div, "bvudiv"},
          {K::Mod, "bvurem"},  {K::And, "bvand"},   {K::Or, "bvor"},     {K::Xor, "bvxor"},
          {K::Shl, "bvshl"},   {K::LShr, "bvlshr"}, {K::AShr, "bvashr"}, {K::Neg, "bvneg"},
          {K::ZExt, "zext"},   {K::SExt, "sext"},   {K::Extract, "extract"},
          {K::Concat, "concat"}, {K::Ite, "ite"},   {K::CmpEq, "="},     {K::CmpNe, "distinct"},
          {K::CmpULt, "bvult"}, {K::CmpULe, "bvule"}, {K::CmpSLt, "bvslt"}, {K::CmpSLe, "bvsle"}};
      os << "(" << names.at(e->kind);
      if (e->kind == K::Extract) os << " " << e->hi << " " << e->lo;
      if (e->c) os << " " << expr_to_sexpr(e->c);
      if (e->a) os << " " << expr_to_sexpr(e->a);
      if (e->b) os << " " << expr_to_sexpr(e->b);
      os << ")";
    }
  }
  return os.str();
}

inline std::string dump_constraints(const std::vector<ExprRef>& constraints) {
  std::ostringstream os;
  for (const auto& c : constraints) os << "(assert " << expr_to_sexpr(c) << ")\n";
  os << "(check-sat)\n";
  return os.str();
}

// Baseline bitvector decision procedure. Deterministic given identical
// inputs and budget; Unsat answers are sound, budget exhaustion is Unknown.
class Solver {
 public:
  explicit Solver(uint64_t conflict_budget = 200000) : budget_(conflict_budget) {}

  // A session keeps the blasted CNF alive for model queries and blocking.
  struct Session {
    std::unique_ptr<BitBlaster> bb;
    Presolver presolver;
    Verdict verdict;
    bool pure_const = false;  // all constraints folded away
  };

  Session open(const std::vector<ExprRef>& constraints, const ExprRef& track = nullptr) {
    Session s;
    bool contradiction = false;
    std::vector<ExprRef> simplified = s.presolver.run(constraints, &contradiction);
    if (contradiction) {
      s.verdict = Verdict::mk_unsat();
      return s;
    }
    s.bb = std::make_unique<BitBlaster>();
    if (track) s.bb->blast(s.presolver.apply(track));
    for (const auto& c : simplified) s.bb->assert_true(c);
    if (s.bb->saw_unsupported()) {
      s.verdict = Verdict::mk_unknown(Verdict::Why::UnsupportedOp);
      return s;
    }
    if (simplified.empty() && !track) {
      s.pure_const = true;
      s.verdict = Verdict::mk_sat();
      return s;
    }
    s.verdict = to_verdict(s.bb->solve(budget_));
    return s;
  }

  Verdict recheck(Session& s) {
    if (s.verdict.unsat()) return s.verdict;
    s.verdict = to_verdict(s.bb->solve(budget_));
    return s.verdict;
  }

  Verdict check(const std::vector<ExprRef>& constraints) {
    Session s = open(constraints);
    return s.verdict;
  }

  // A concrete value of expr under some satisfying assignment. Requires the
  // constraint set to be satisfiable.
  WideVal model_value(const std::vector<ExprRef>& constraints, const ExprRef& expr) {
    Session s = open(constraints, expr);
    if (!s.verdict.sat())
      throw ScanError(ErrKind::CapExceeded, "model_value on a non-Sat constraint set");
    return model_of(s, expr);
  }

  WideVal model_of(Session& s, const ExprRef& expr) {
    ExprRef rewritten = s.presolver.apply(expr);
    if (rewritten->is_const() && rewritten->width <= 64)
      return WideVal::of(rewritten->width, rewritten->cval);
    return s.bb->read_model(rewritten);
  }

  // Model for an individual input byte; zero when the symbol is unconstrained
  // and absent from the query.
  uint64_t model_input(Session& s, const Origin& origin) {
    auto b = s.presolver.bindings().find(origin);
    if (b != s.presolver.bindings().end()) return b->second;
    if (s.bb) {
      if (auto v = s.bb->input_model(origin)) return *v;
    }
    return 0;
  }

  struct CountResult {
    size_t count = 0;
    bool unknown = false;  // an inconclusive solver answer cut the count short
  };

  // Number of distinct satisfiable values of expr, saturating at limit.
  // Unknown during iteration saturates (conservative) and is reported so the
  // consumer can distinguish "provably many" from "could not decide".
  CountResult count_distinct_ex(const std::vector<ExprRef>& constraints, const ExprRef& expr,
                                size_t limit) {
    Session s = open(constraints, expr);
    CountResult r;
    while (r.count < limit) {
      if (s.verdict.unsat()) return r;
      if (s.verdict.unknown()) {
        r.count = limit;
        r.unknown = true;
        return r;
      }
      WideVal v = model_of(s, expr);
      ++r.count;
      if (r.count >= limit) return r;
      ExprRef rewritten = s.presolver.apply(expr);
      if (rewritten->is_const()) return r;  // fully determined
      s.bb->block_value(rewritten, v);
      recheck(s);
    }
    return r;
  }

  size_t count_distinct(const std::vector<ExprRef>& constraints, const ExprRef& expr,
                        size_t limit) {
    return count_distinct_ex(constraints, expr, limit).count;
  }

 private:
  static Verdict to_verdict(SatSolver::Result r) {
    switch (r) {
      case SatSolver::Result::Sat: return Verdict::mk_sat();
      case SatSolver::Result::Unsat: return Verdict::mk_unsat();
      case SatSolver::Result::Unknown: return Verdict::mk_unknown(Verdict::Why::Budget);
    }
    return Verdict::mk_unknown(Verdict::Why::Budget);
  }

  uint64_t budget_;
};

}  // namespace sbfscan
