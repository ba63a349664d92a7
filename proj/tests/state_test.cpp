#include <gtest/gtest.h>

#include "sbfscan/elfgen.hpp"
#include "sbfscan/image.hpp"
#include "sbfscan/interp.hpp"
#include "sbfscan/state.hpp"

namespace sbfscan {
namespace {

// Golden offsets of the serialized input layout. These pin the ABI; any
// change here breaks compatibility with real runtime inputs.
TEST(InputLayout, GoldenOffsets) {
  InputLayout l = InputLayout::build(2, 16, 8);
  EXPECT_EQ(l.account_count, 2u);
  const AccountSlot& a0 = l.accounts[0];
  EXPECT_EQ(a0.record_off, 8u);
  EXPECT_EQ(a0.is_signer_off, 9u);
  EXPECT_EQ(a0.is_writable_off, 10u);
  EXPECT_EQ(a0.executable_off, 11u);
  EXPECT_EQ(a0.key_off, 16u);
  EXPECT_EQ(a0.owner_off, 48u);
  EXPECT_EQ(a0.lamports_off, 80u);
  EXPECT_EQ(a0.data_len_off, 88u);
  EXPECT_EQ(a0.data_off, 96u);
  // 96 + 16 data + 10240 realloc pad = 10352, already 8-aligned
  EXPECT_EQ(a0.rent_epoch_off, 10352u);
  const AccountSlot& a1 = l.accounts[1];
  EXPECT_EQ(a1.record_off, 10360u);
  EXPECT_EQ(a1.key_off, 10368u);
  EXPECT_EQ(l.instr_len_off, a1.rent_epoch_off + 8);
  EXPECT_EQ(l.instr_data_off, l.instr_len_off + 8);
  EXPECT_EQ(l.program_id_off, l.instr_data_off + 8);
  EXPECT_EQ(l.total_size, l.program_id_off + 32);
}

TEST(InputLayout, BuildRejectsOutOfRangeCounts) {
  EXPECT_THROW(InputLayout::build(0, 0, 0), ScanError);
  EXPECT_THROW(InputLayout::build(65, 0, 0), ScanError);
  EXPECT_THROW(InputLayout::build(1, 1 << 20, 0), ScanError);
}

TEST(InputLayout, DefaultByteProvenance) {
  InputLayout l = InputLayout::build(1, 4, 4);
  const AccountSlot& a = l.accounts[0];

  // count bytes: constant little-endian account count
  EXPECT_TRUE(l.default_byte(0)->is_const(1));
  EXPECT_TRUE(l.default_byte(7)->is_const(0));
  // dup marker constant 0xff, flag bytes symbolic
  EXPECT_TRUE(l.default_byte(a.record_off)->is_const(0xff));
  auto signer = l.default_byte(a.is_signer_off);
  ASSERT_EQ(signer->kind, ExprKind::Input);
  EXPECT_EQ(signer->origin.field, Origin::Field::IsSigner);
  EXPECT_EQ(signer->origin.account, 0);
  // key/owner bytes symbolic with the right byte index
  auto k5 = l.default_byte(a.key_off + 5);
  ASSERT_EQ(k5->kind, ExprKind::Input);
  EXPECT_EQ(k5->origin.field, Origin::Field::KeyByte);
  EXPECT_EQ(k5->origin.index, 5);
  auto o31 = l.default_byte(a.owner_off + 31);
  EXPECT_EQ(o31->origin.field, Origin::Field::OwnerByte);
  EXPECT_EQ(o31->origin.index, 31);
  // data_len is a trusted constant matching the layout
  EXPECT_TRUE(l.default_byte(a.data_len_off)->is_const(4));
  // account data and instruction data symbolic
  EXPECT_EQ(l.default_byte(a.data_off + 2)->origin.field, Origin::Field::DataByte);
  auto id3 = l.default_byte(l.instr_data_off + 3);
  EXPECT_EQ(id3->origin.src, Origin::Src::InstructionData);
  EXPECT_EQ(id3->origin.index, 3);
  // program id symbolic but not attacker-controlled
  auto pid = l.default_byte(l.program_id_off);
  EXPECT_EQ(pid->origin.src, Origin::Src::ProgramId);
  EXPECT_FALSE(pid->origin.attacker_controlled());
  // realloc padding constant zero
  EXPECT_TRUE(l.default_byte(a.data_off + a.data_len)->is_const(0));
}

TEST(InputLayout, AccountOfDataOffset) {
  InputLayout l = InputLayout::build(2, 16, 0);
  EXPECT_EQ(l.account_of_data_offset(l.accounts[0].data_off), std::optional<int>(0));
  EXPECT_EQ(l.account_of_data_offset(l.accounts[1].data_off + 15), std::optional<int>(1));
  EXPECT_EQ(l.account_of_data_offset(l.accounts[0].data_off + 16), std::nullopt);
  EXPECT_EQ(l.account_of_data_offset(0), std::nullopt);
}

TEST(InputLayout, ConcretizeMatchesDefaults) {
  InputLayout l = InputLayout::build(1, 4, 4);
  // model: hash of the origin string, truncated to a byte
  auto model = [](const Origin& o) -> uint64_t {
    uint64_t h = 1469598103934665603ull;
    for (char c : o.to_string()) h = (h ^ static_cast<uint8_t>(c)) * 1099511628211ull;
    return h & 0xff;
  };
  Bytes raw = l.concretize(model);
  ASSERT_EQ(raw.size(), l.total_size);
  EXPECT_EQ(read_u64le(raw.data()), 1u);  // account count
  EXPECT_EQ(raw[l.accounts[0].record_off], 0xff);
  EXPECT_EQ(read_u64le(raw.data() + l.accounts[0].data_len_off), 4u);
  EXPECT_EQ(read_u64le(raw.data() + l.instr_len_off), 4u);
  for (uint64_t off = 0; off < l.total_size; ++off) {
    ExprRef b = l.default_byte(off);
    uint8_t expect =
        b->is_const() ? static_cast<uint8_t>(b->cval) : static_cast<uint8_t>(model(b->origin));
    ASSERT_EQ(raw[off], expect) << off;
  }
}

// The symbolic default input, once concretized, must drive the concrete
// interpreter to the same values the symbolic layout promises.
TEST(InputLayout, ConcretizedInputReadBackByInterpreter) {
  ProgramImage img = load_elf(assemble_to_elf(R"(
entrypoint:
  ldxdw r0, [r1+0]   ; account count
  exit
)"));
  InputLayout l = InputLayout::build(3, 8, 0);
  Bytes raw = l.concretize([](const Origin&) { return 0x5a; });
  ExecResult r = interpret(img, raw, default_syscall_handlers(), 1000);
  EXPECT_EQ(r.outcome, ExecOutcome::Exit);
  EXPECT_EQ(r.r0_final, 3u);
}

MachineState mk_state() {
  static ProgramImage img = load_elf(assemble_to_elf("entrypoint:\n  exit\n"));
  return init_state(img, 2, 16, 8);
}

TEST(MachineState, InitRegisters) {
  MachineState st = mk_state();
  EXPECT_EQ(st.pc, 0u);
  EXPECT_TRUE(st.regs[1]->is_const(mm::kInputBase));
  EXPECT_TRUE(st.regs[10]->is_const(mm::kStackBase + mm::kFrameSize));
  EXPECT_EQ(st.journal.signer_checked.size(), 2u);
}

TEST(MachineState, ReadMemMaterializesInputSymbols) {
  MachineState st = mk_state();
  uint64_t key_addr = mm::kInputBase + st.layout.accounts[1].key_off;
  ExprRef v = read_mem(st, key_addr, 4);
  EXPECT_EQ(st.fault, FaultKind::None);
  auto os = origins(v);
  EXPECT_EQ(os.size(), 4u);
  for (const auto& o : os) {
    EXPECT_EQ(o.field, Origin::Field::KeyByte);
    EXPECT_EQ(o.account, 1);
  }
}

TEST(MachineState, WriteThenReadRoundTrips) {
  MachineState st = mk_state();
  uint64_t addr = st.frame_top() - 8;
  write_mem(st, addr, 8, mk_const(64, 0x1122334455667788ull));
  ExprRef v = read_mem(st, addr, 8);
  ASSERT_TRUE(v->is_const());
  EXPECT_EQ(v->cval, 0x1122334455667788ull);
  ExprRef lo = read_mem(st, addr, 2);
  ASSERT_TRUE(lo->is_const());
  EXPECT_EQ(lo->cval, 0x7788u);
}

TEST(MachineState, OutOfBoundsAccessesFault) {
  MachineState st = mk_state();
  read_mem(st, 0x500000000ull, 8);
  EXPECT_EQ(st.fault, FaultKind::OutOfBounds);

  MachineState st2 = mk_state();
  // stack above the current frame top is invalid at depth 0
  write_mem(st2, st2.frame_top() + 16, 8, mk_const(64, 1));
  EXPECT_EQ(st2.fault, FaultKind::OutOfBounds);

  MachineState st3 = mk_state();
  write_mem(st3, st3.image->text_vaddr, 8, mk_const(64, 1));
  EXPECT_EQ(st3.fault, FaultKind::WriteToRodata);
}

TEST(MachineState, JournalDataWrittenAndMetadataFlag) {
  MachineState st = mk_state();
  uint64_t data1 = mm::kInputBase + st.layout.accounts[1].data_off;
  write_mem(st, data1, 4, mk_const(32, 7));
  EXPECT_FALSE(st.journal.data_written[0]);
  EXPECT_TRUE(st.journal.data_written[1]);
  EXPECT_FALSE(st.metadata_write_flagged);

  write_mem(st, mm::kInputBase + st.layout.accounts[0].owner_off, 1, mk_const(8, 1));
  EXPECT_TRUE(st.metadata_write_flagged);
}

TEST(MachineState, ForkSetsJournalFromConditionProvenance) {
  MachineState st = mk_state();
  uint64_t signer0 = mm::kInputBase + st.layout.accounts[0].is_signer_off;
  ExprRef cond = mk_ne(mk_zext(read_mem(st, signer0, 1), 64), mk_const(64, 0));
  auto [t, f] = fork(st, cond);
  EXPECT_TRUE(t.journal.signer_checked[0]);
  EXPECT_TRUE(f.journal.signer_checked[0]);
  EXPECT_FALSE(t.journal.signer_checked[1]);
  EXPECT_FALSE(t.journal.key_checked[0]);
  ASSERT_EQ(t.constraints.size(), 1u);
  ASSERT_EQ(f.constraints.size(), 1u);
  EXPECT_EQ(t.journal.fork_count, 1u);
  // original untouched
  EXPECT_FALSE(st.journal.signer_checked[0]);
}

TEST(MachineState, TryAccessorsMirrorStopOnInvalid) {
  MachineState st = mk_state();
  EXPECT_FALSE(try_read_byte(st, 0x500000000ull).has_value());
  EXPECT_TRUE(try_read_byte(st, mm::kInputBase).has_value());
  EXPECT_FALSE(try_write_byte(st, st.image->text_vaddr, mk_const(8, 1)));
  EXPECT_EQ(st.fault, FaultKind::None);  // try_* never faults
  EXPECT_TRUE(try_write_byte(st, st.frame_top() - 1, mk_const(8, 1)));
}

}  // namespace
}  // namespace sbfscan
