#include <gtest/gtest.h>

#include "sbfscan/expr.hpp"

namespace sbfscan {
namespace {

Origin key_byte(int account, int index) {
  Origin o;
  o.src = Origin::Src::AccountField;
  o.account = account;
  o.field = Origin::Field::KeyByte;
  o.index = index;
  return o;
}

Origin instr_byte(int index) {
  Origin o;
  o.src = Origin::Src::InstructionData;
  o.index = index;
  return o;
}

Origin derived_byte(int id, int index) {
  Origin o;
  o.src = Origin::Src::Derived;
  o.derived_id = id;
  o.index = index;
  return o;
}

TEST(Expr, ConstFoldingAndIdentities) {
  auto a = mk_const(64, 6);
  auto b = mk_const(64, 7);
  auto m = mk_binop(ExprKind::Mul, a, b);
  ASSERT_TRUE(m->is_const());
  EXPECT_EQ(m->cval, 42u);

  auto x = mk_input(instr_byte(0), 64);
  EXPECT_EQ(mk_add(x, mk_const(64, 0)).get(), x.get());      // x + 0 == x
  EXPECT_TRUE(mk_binop(ExprKind::Xor, x, x)->is_const(0));   // x ^ x == 0
  EXPECT_TRUE(mk_binop(ExprKind::And, x, mk_const(64, 0))->is_const(0));
}

TEST(Expr, WidthNarrowsOnConstMask) {
  auto c = mk_const(8, 0x1ff);  // masked to width
  EXPECT_EQ(c->cval, 0xffu);
  EXPECT_EQ(mk_const(1, 3)->cval, 1u);
}

TEST(Expr, ExtractThroughConcatAndZext) {
  auto lo = mk_input(instr_byte(0), 8);
  auto hi = mk_input(instr_byte(1), 8);
  auto word = mk_concat(hi, lo);
  ASSERT_EQ(word->width, 16);

  // extract the low byte recovers the original node
  EXPECT_EQ(mk_extract(word, 7, 0).get(), lo.get());
  EXPECT_EQ(mk_extract(word, 15, 8).get(), hi.get());

  // extract above a zext is constant zero
  auto z = mk_zext(lo, 64);
  auto top = mk_extract(z, 63, 32);
  EXPECT_TRUE(top->is_const(0));
  EXPECT_EQ(mk_extract(z, 7, 0).get(), lo.get());

  // nested extract composes the bit offsets
  auto mid = mk_extract(word, 11, 4);
  auto bit = mk_extract(mid, 7, 7);  // == word bit 11 == hi bit 3
  ASSERT_EQ(bit->kind, ExprKind::Extract);
  EXPECT_EQ(bit->a.get(), hi.get());
  EXPECT_EQ(bit->lo, 3);
}

TEST(Expr, ConcatBytesLeMatchesLittleEndian) {
  std::vector<ExprRef> bytes;
  for (int i = 0; i < 4; ++i) bytes.push_back(mk_const(8, 0x10 + i));
  auto v = concat_bytes_le(bytes);
  ASSERT_TRUE(v->is_const());
  EXPECT_EQ(v->cval, 0x13121110u);
  EXPECT_EQ(v->width, 32);
}

TEST(Expr, OriginsCollectAllInputLeaves) {
  auto k0 = mk_input(key_byte(1, 0));
  auto k1 = mk_input(key_byte(1, 1));
  auto d = mk_input(derived_byte(3, 0));
  auto e = mk_ite(mk_eq(mk_zext(k0, 64), mk_const(64, 5)), mk_zext(k1, 64), mk_zext(d, 64));
  auto os = origins(e);
  EXPECT_EQ(os.size(), 3u);
  EXPECT_TRUE(os.count(key_byte(1, 0)));
  EXPECT_TRUE(os.count(key_byte(1, 1)));
  EXPECT_TRUE(os.count(derived_byte(3, 0)));

  int attacker = 0;
  for (const auto& o : os) attacker += o.attacker_controlled();
  EXPECT_EQ(attacker, 2);  // derived bytes are not attacker controlled
}

TEST(Expr, OriginToStringStable) {
  EXPECT_EQ(key_byte(2, 5).to_string(), "account2.key[5]");
  EXPECT_EQ(instr_byte(9).to_string(), "instr_data[9]");
  EXPECT_EQ(derived_byte(1, 0).to_string(), "derived1[0]");
}

// Evaluator agrees with native semantics on every binop, including the
// shift out-of-range and signed comparison corners.
TEST(Expr, EvaluatorMatchesNativeArithmetic) {
  Origin ox = instr_byte(0), oy = instr_byte(1);
  auto x8 = mk_input(ox, 8);
  auto y8 = mk_input(oy, 8);
  auto model = [&](const Origin& o) -> uint64_t { return o == ox ? 0xf3 : 0x0a; };

  struct Case {
    ExprKind kind;
    uint64_t expect;
  };
  uint8_t x = 0xf3, y = 0x0a;
  std::vector<Case> cases = {
      {ExprKind::Add, static_cast<uint8_t>(x + y)},
      {ExprKind::Sub, static_cast<uint8_t>(x - y)},
      {ExprKind::Mul, static_cast<uint8_t>(x * y)},
      {ExprKind::Div, static_cast<uint8_t>(x / y)},
      {ExprKind::Mod, static_cast<uint8_t>(x % y)},
      {ExprKind::And, static_cast<uint8_t>(x & y)},
      {ExprKind::Or, static_cast<uint8_t>(x | y)},
      {ExprKind::Xor, static_cast<uint8_t>(x ^ y)},
      {ExprKind::Shl, 0u},                               // 0xf3 << 10 overflows width 8
      {ExprKind::LShr, 0u},
      {ExprKind::AShr, 0xffu},                           // sign bit replicated
      {ExprKind::CmpULt, 0u},
      {ExprKind::CmpSLt, 1u},                            // -13 < 10 signed
  };
  for (const auto& c : cases) {
    Evaluator ev(model);
    WideVal v = ev.eval(mk_binop(c.kind, x8, y8));
    EXPECT_EQ(v.low(), c.expect) << static_cast<int>(c.kind);
  }
}

TEST(Expr, EvaluatorWideConcatAndExtract) {
  // 16 distinct bytes -> 128-bit value; extract byte 9 back out.
  std::vector<ExprRef> bytes;
  std::map<Origin, uint64_t> vals;
  for (int i = 0; i < 16; ++i) {
    Origin o = instr_byte(i);
    vals[o] = 0xa0 + i;
    bytes.push_back(mk_input(o));
  }
  auto wide = concat_bytes_le(bytes);
  ASSERT_EQ(wide->width, 128);
  Evaluator ev([&](const Origin& o) { return vals.at(o); });
  WideVal v = ev.eval(wide);
  Bytes bs = v.bytes();
  ASSERT_EQ(bs.size(), 16u);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(bs[i], 0xa0 + i) << i;

  Evaluator ev2([&](const Origin& o) { return vals.at(o); });
  EXPECT_EQ(ev2.eval(extract_byte(wide, 9)).low(), 0xa9u);
}

TEST(Expr, IteSimplifications) {
  auto a = mk_const(64, 1);
  auto b = mk_const(64, 2);
  EXPECT_EQ(mk_ite(mk_bool(true), a, b).get(), a.get());
  EXPECT_EQ(mk_ite(mk_bool(false), a, b).get(), b.get());
  auto c = mk_eq(mk_input(instr_byte(0), 8), mk_const(8, 1));
  EXPECT_EQ(mk_ite(c, a, a).get(), a.get());
}

}  // namespace
}  // namespace sbfscan
