#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "sbfscan/cfg.hpp"
#include "sbfscan/detect.hpp"
#include "sbfscan/elfgen.hpp"
#include "sbfscan/explore.hpp"
#include "sbfscan/image.hpp"

namespace sbfscan {
namespace {

ProgramImage load_src(const std::string& src) { return load_elf(assemble_to_elf(src)); }

// One account, 16 data bytes, 8 instruction bytes. Account 0 field offsets:
// signer 9, key 16, owner 48, data 96; instruction data at 10368.
ExplorationConfig unit_config() {
  ExplorationConfig cfg;
  cfg.accounts_min = cfg.accounts_max = 1;
  cfg.data_len_per_account = 16;
  cfg.instr_data_len = 8;
  return cfg;
}

std::vector<AcpiFinding> scan_findings(const std::string& src,
                                       ExplorationConfig cfg = unit_config(),
                                       DetectConfig dcfg = DetectConfig{}) {
  ProgramImage img = load_src(src);
  Cfg c = build_cfg(img);
  auto sites = find_cpi_sites(c, img, cfg.cpi_syscalls);
  CpiReachability reach = compute_reachability(c, sites);
  ExploreResult res = explore(img, c, reach, cfg);
  Solver solver(cfg.solver_conflict_budget);
  std::vector<AcpiFinding> out;
  for (const auto& obs : res.observations) out.push_back(judge(solver, obs, dcfg));
  return out;
}

// CPI preamble targeting account 0's key via the C ABI (r1 = input base).
#define CPI_ON_ACCOUNT0_KEY \
  "  mov64 r2, r1\n"        \
  "  add64 r2, 16\n"        \
  "  stxdw [r10-16], r2\n"  \
  "  mov64 r1, r10\n"       \
  "  sub64 r1, 16\n"        \
  "  call $sol_invoke_signed_c\n"

TEST(Oracle, NoCpiNoFindings) {
  auto f = scan_findings("entrypoint:\n  mov64 r0, 0\n  exit\n");
  EXPECT_TRUE(f.empty());
}

TEST(Oracle, ConstantRodataTargetIsNotAttackerControlled) {
  auto f = scan_findings(R"(
.rodata
trusted: .bytes 01 02 03 04 05 06 07 08 09 0a 0b 0c 0d 0e 0f 10 11 12 13 14 15 16 17 18 19 1a 1b 1c 1d 1e 1f 20
.text
entrypoint:
  lddw r2, =trusted
  stxdw [r10-16], r2
  mov64 r1, r10
  sub64 r1, 16
  call $sol_invoke_signed_c
  exit
)");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::NotAttackerControlled);
  EXPECT_FALSE(f[0].vulnerable);
  EXPECT_EQ(f[0].source_account, std::nullopt);
}

TEST(Oracle, UnguardedArbitraryTargetIsVulnerable) {
  auto f = scan_findings("entrypoint:\n" CPI_ON_ACCOUNT0_KEY "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::Arbitrary);
  EXPECT_EQ(f[0].source_account, std::optional<int>(0));
  EXPECT_TRUE(f[0].signer_check_absent);
  EXPECT_TRUE(f[0].source_owner_check_absent);
  EXPECT_TRUE(f[0].vulnerable);
  EXPECT_EQ(f[0].evidence_target.size(), 32u);
}

TEST(Oracle, SignerCheckSuppressesVulnerability) {
  auto f = scan_findings(
      "entrypoint:\n"
      "  ldxb r3, [r1+9]\n"  // account 0 is_signer
      "  jeq r3, 1, go\n"
      "  exit\n"
      "go:\n" CPI_ON_ACCOUNT0_KEY "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::Arbitrary);
  EXPECT_FALSE(f[0].signer_check_absent);
  EXPECT_FALSE(f[0].vulnerable);
}

TEST(Oracle, OwnerFieldCheckSuppressesVulnerability) {
  auto f = scan_findings(
      "entrypoint:\n"
      "  ldxb r3, [r1+48]\n"  // account 0 owner byte 0
      "  jeq r3, 7, go\n"
      "  exit\n"
      "go:\n" CPI_ON_ACCOUNT0_KEY "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::Arbitrary);
  EXPECT_TRUE(f[0].signer_check_absent);
  EXPECT_FALSE(f[0].source_owner_check_absent);
  EXPECT_FALSE(f[0].vulnerable);
}

TEST(Oracle, DataWriteCountsAsOwnerEvidence) {
  auto f = scan_findings(
      "entrypoint:\n"
      "  mov64 r3, 1\n"
      "  stxb [r1+96], r3\n"  // write account 0 data
      "\n" CPI_ON_ACCOUNT0_KEY "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_FALSE(f[0].source_owner_check_absent);
  EXPECT_FALSE(f[0].vulnerable);
}

TEST(Oracle, TwoValueWhitelistViaByteMask) {
  // (key quad 0 & ~1) == 0x4040404040404040 and quads 1..3 == 0:
  // exactly two feasible 256-bit targets.
  auto f = scan_findings(
      "entrypoint:\n"
      "  ldxdw r3, [r1+16]\n"
      "  lddw r5, 0xfffffffffffffffe\n"
      "  and64 r3, r5\n"
      "  lddw r5, 0x4040404040404040\n"
      "  jne r3, r5, bad\n"
      "  ldxdw r3, [r1+24]\n"
      "  jne r3, 0, bad\n"
      "  ldxdw r3, [r1+32]\n"
      "  jne r3, 0, bad\n"
      "  ldxdw r3, [r1+40]\n"
      "  jne r3, 0, bad\n"
      "\n" CPI_ON_ACCOUNT0_KEY
      "  exit\n"
      "bad:\n"
      "  mov64 r0, 1\n"
      "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::Whitelisted);
  EXPECT_EQ(f[0].whitelist_count, 2u);
  EXPECT_FALSE(f[0].vulnerable);
  // key bytes were branched on: that also counts as a key check
  EXPECT_FALSE(f[0].source_owner_check_absent);
}

TEST(Oracle, SingleValueConstraintIsConstantTrusted) {
  // all four key quads pinned to constants -> exactly one feasible target
  auto f = scan_findings(
      "entrypoint:\n"
      "  ldxdw r3, [r1+16]\n"
      "  lddw r5, 0x1111111111111111\n"
      "  jne r3, r5, bad\n"
      "  ldxdw r3, [r1+24]\n"
      "  jne r3, 0, bad\n"
      "  ldxdw r3, [r1+32]\n"
      "  jne r3, 0, bad\n"
      "  ldxdw r3, [r1+40]\n"
      "  jne r3, 0, bad\n"
      "\n" CPI_ON_ACCOUNT0_KEY
      "  exit\n"
      "bad:\n"
      "  mov64 r0, 1\n"
      "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::ConstantTrusted);
  EXPECT_FALSE(f[0].vulnerable);
}

TEST(Oracle, VerdictEquationHolds) {
  // every finding must satisfy vulnerable = arbitrary ∧ signer-absent ∧ owner-absent
  const char* programs[] = {
      "entrypoint:\n" CPI_ON_ACCOUNT0_KEY "  exit\n",
      "entrypoint:\n  ldxb r3, [r1+9]\n  jeq r3, 1, go\n  exit\ngo:\n" CPI_ON_ACCOUNT0_KEY
      "  exit\n",
  };
  for (const char* src : programs)
    for (const AcpiFinding& f : scan_findings(src))
      EXPECT_EQ(f.vulnerable, f.classification == TargetClass::Arbitrary &&
                                  f.signer_check_absent && f.source_owner_check_absent);
}

TEST(Oracle, EvidenceSatisfiesPathConstraints) {
  // vulnerable CPI guarded by an instruction-data branch: the witness must
  // make the branch condition true.
  auto f = scan_findings(
      "entrypoint:\n"
      "  ldxb r3, [r1+10368]\n"  // instruction data byte 0
      "  jeq r3, 42, go\n"
      "  exit\n"
      "go:\n" CPI_ON_ACCOUNT0_KEY "  exit\n");
  ASSERT_EQ(f.size(), 1u);
  ASSERT_TRUE(f[0].vulnerable);
  std::map<std::string, uint64_t> witness(f[0].evidence_inputs.begin(),
                                          f[0].evidence_inputs.end());
  EXPECT_EQ(witness["instr_data[0]"], 42u);
}

TEST(Oracle, MonotoneSanitization) {
  // adding a target equality constraint to an Arbitrary observation must
  // reclassify it as ConstantTrusted
  ProgramImage img = load_src("entrypoint:\n" CPI_ON_ACCOUNT0_KEY "  exit\n");
  Cfg c = build_cfg(img);
  auto sites = find_cpi_sites(c, img, default_cpi_syscalls());
  CpiReachability reach = compute_reachability(c, sites);
  ExploreResult res = explore(img, c, reach, unit_config());
  ASSERT_EQ(res.observations.size(), 1u);
  Solver solver;
  DetectConfig dcfg;
  AcpiFinding before = judge(solver, res.observations[0], dcfg);
  EXPECT_EQ(before.classification, TargetClass::Arbitrary);

  CpiObservation pinned = res.observations[0];
  WideVal zero;
  zero.width = 256;
  // pin the low 64 bits and zero the rest via chunk equalities
  for (int chunk = 0; chunk < 4; ++chunk) {
    ExprRef part = mk_extract(pinned.target, static_cast<uint16_t>(chunk * 64 + 63),
                              static_cast<uint16_t>(chunk * 64));
    pinned.constraints.push_back(mk_eq(part, mk_const(64, chunk == 0 ? 0x1234 : 0)));
  }
  AcpiFinding after = judge(solver, pinned, dcfg);
  EXPECT_EQ(after.classification, TargetClass::ConstantTrusted);
  EXPECT_FALSE(after.vulnerable);
}

TEST(Oracle, WhitelistKIsConfigurable) {
  // with K = 1 even a two-value whitelist saturates to Arbitrary
  DetectConfig dcfg;
  dcfg.whitelist_k = 1;
  auto f = scan_findings(
      "entrypoint:\n"
      "  ldxdw r3, [r1+16]\n"
      "  lddw r5, 0xfffffffffffffffe\n"
      "  and64 r3, r5\n"
      "  lddw r5, 0x4040404040404040\n"
      "  jne r3, r5, bad\n"
      "  ldxdw r3, [r1+24]\n"
      "  jne r3, 0, bad\n"
      "  ldxdw r3, [r1+32]\n"
      "  jne r3, 0, bad\n"
      "  ldxdw r3, [r1+40]\n"
      "  jne r3, 0, bad\n"
      "\n" CPI_ON_ACCOUNT0_KEY
      "  exit\n"
      "bad:\n"
      "  exit\n",
      unit_config(), dcfg);
  ASSERT_EQ(f.size(), 1u);
  EXPECT_EQ(f[0].classification, TargetClass::Arbitrary);
  // ...but the key check still suppresses the verdict
  EXPECT_FALSE(f[0].vulnerable);
}

// ------------------------------------------------------------------ anchor

TEST(Anchor, DiscriminatesFrameworkStrings) {
  ProgramImage anchor_img = load_src(R"(
.rodata
e: .asciz "AnchorError occurred. Error Code: ConstraintSigner"
.text
entrypoint:
  lddw r1, =e
  exit
)");
  ProgramImage native_img = load_src(R"(
.rodata
e: .asciz "custom program error: signer missing"
.text
entrypoint:
  lddw r1, =e
  exit
)");
  AnchorReport a = detect_anchor(anchor_img);
  EXPECT_TRUE(a.is_anchor);
  ASSERT_EQ(a.matched.size(), 1u);
  EXPECT_EQ(a.matched[0].kind, "error-string");

  AnchorReport n = detect_anchor(native_img);
  EXPECT_FALSE(n.is_anchor);
  EXPECT_TRUE(n.matched.empty());
}

TEST(Anchor, EmptyRodataIsNotAnchor) {
  ProgramImage img = load_src("entrypoint:\n  exit\n");
  EXPECT_FALSE(detect_anchor(img).is_anchor);
}

TEST(Anchor, Idempotent) {
  ProgramImage img = load_src(R"(
.rodata
e: .asciz "AnchorError thrown in programs/x/src/lib.rs"
.text
entrypoint:
  lddw r1, =e
  exit
)");
  AnchorReport a = detect_anchor(img);
  AnchorReport b = detect_anchor(img);
  EXPECT_EQ(a.is_anchor, b.is_anchor);
  ASSERT_EQ(a.matched.size(), b.matched.size());
  for (size_t i = 0; i < a.matched.size(); ++i) {
    EXPECT_EQ(a.matched[i].value, b.matched[i].value);
    EXPECT_EQ(a.matched[i].vaddr, b.matched[i].vaddr);
  }
}

TEST(Anchor, AbiMarkerMatchesRawBytes) {
  ProgramImage img = load_src(R"(
.rodata
m: .bytes de ad be ef 42
.text
entrypoint:
  lddw r1, =m
  exit
)");
  std::vector<Fingerprint> fps = {{"abi-marker", "deadbeef42", "test marker"}};
  AnchorReport rep = detect_anchor(img, fps);
  EXPECT_TRUE(rep.is_anchor);
  ASSERT_EQ(rep.matched.size(), 1u);
  EXPECT_TRUE(img.in_rodata(rep.matched[0].vaddr));
}

TEST(Anchor, FingerprintFileRoundTrip) {
  std::string path = testing::TempDir() + "/fps.tsv";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "error-string\tAnchorError occurred. Error Code:\tformatter\n";
    out << "abi-marker\tdeadbeef\traw marker\n";
    out << "\n";
  }
  auto fps = load_fingerprints(path);
  ASSERT_EQ(fps.size(), 2u);
  EXPECT_EQ(fps[0].kind, "error-string");
  EXPECT_EQ(fps[0].note, "formatter");
  EXPECT_EQ(fps[1].value, "deadbeef");

  std::string bad = testing::TempDir() + "/bad.tsv";
  {
    std::ofstream out(bad);
    out << "bogus-kind\tvalue\tnote\n";
  }
  EXPECT_THROW(load_fingerprints(bad), ScanError);
  {
    std::ofstream out(bad);
    out << "abi-marker\tnothex!\tnote\n";
  }
  EXPECT_THROW(load_fingerprints(bad), ScanError);
  EXPECT_THROW(load_fingerprints("/nonexistent/fps.tsv"), ScanError);
}

}  // namespace
}  // namespace sbfscan
