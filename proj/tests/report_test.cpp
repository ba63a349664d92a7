#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sbfscan/elfgen.hpp"
#include "sbfscan/report.hpp"

namespace sbfscan {
namespace {

namespace fs = std::filesystem;

// One account, 16 data bytes, 8 instruction bytes; instruction data at 10368.
ScanConfig unit_scan_config() {
  ScanConfig cfg;
  cfg.explore.accounts_min = cfg.explore.accounts_max = 1;
  cfg.explore.data_len_per_account = 16;
  cfg.explore.instr_data_len = 8;
  return cfg;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sbfscan_report_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const Bytes& bytes) const {
    std::string full = (path / name).string();
    std::ofstream out(full, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    return full;
  }
  std::string program(const std::string& name, const std::string& src) const {
    return file(name, assemble_to_elf(src));
  }
};

const char* kUnguardedCpi = R"(
entrypoint:
  mov64 r2, r1
  add64 r2, 16
  stxdw [r10-16], r2
  mov64 r1, r10
  sub64 r1, 16
  call $sol_invoke_signed_c
  exit
)";

const char* kClean = "entrypoint:\n  mov64 r0, 0\n  exit\n";

TEST(ScanFile, OkWithVulnerableFinding) {
  TempDir tmp;
  std::string p = tmp.program("vuln.so", kUnguardedCpi);
  ScanReport rep = scan_file(p, unit_scan_config());
  EXPECT_EQ(rep.status, ScanStatus::Ok);
  EXPECT_EQ(rep.sha256.size(), 64u);
  EXPECT_GE(rep.observation_count, 1u);
  ASSERT_EQ(rep.findings.size(), 1u);
  EXPECT_TRUE(rep.findings[0].vulnerable);
  EXPECT_TRUE(rep.any_vulnerable());
}

TEST(ScanFile, CorruptFileIsUnsupported) {
  TempDir tmp;
  std::string p = tmp.file("junk.so", Bytes{'n', 'o', 't', ' ', 'e', 'l', 'f'});
  ScanReport rep = scan_file(p, unit_scan_config());
  EXPECT_EQ(rep.status, ScanStatus::Unsupported);
  EXPECT_FALSE(rep.status_reason.empty());
  EXPECT_TRUE(rep.findings.empty());
}

TEST(ScanFile, MissingFileThrows) {
  EXPECT_THROW(scan_file("/nonexistent/nope.so", unit_scan_config()), ScanError);
}

TEST(ScanFile, ZeroTimeoutReportsTimeout) {
  TempDir tmp;
  std::string p = tmp.program("vuln.so", kUnguardedCpi);
  ScanConfig cfg = unit_scan_config();
  cfg.explore.per_contract_timeout_secs = 0.0;
  ScanReport rep = scan_file(p, cfg);
  EXPECT_EQ(rep.status, ScanStatus::Timeout);
  EXPECT_TRUE(rep.stats.timeout_hit);
}

TEST(ScanFile, AnchorOnlySkipsExploration) {
  TempDir tmp;
  std::string p = tmp.program("anchor.so", R"(
.rodata
msg: .asciz "AnchorError occurred. Error Code: Oops"
.text
entrypoint:
  mov64 r0, 0
  exit
)");
  ScanConfig cfg = unit_scan_config();
  cfg.anchor_only = true;
  ScanReport rep = scan_file(p, cfg);
  EXPECT_EQ(rep.status, ScanStatus::Ok);
  EXPECT_TRUE(rep.anchor.is_anchor);
  EXPECT_EQ(rep.observation_count, 0u);
}

// Two paths reach the same call instruction: one pins the target key to a
// constant, the other leaves it free. The report keeps one finding for the
// site, with the worst verdict.
TEST(ScanFile, DedupKeepsWorstVerdictPerCallsite) {
  TempDir tmp;
  std::string p = tmp.program("twopath.so", R"(
entrypoint:
  ldxb r3, [r1+10368]
  jeq r3, 1, pin
  ja docpi
pin:
  ldxdw r3, [r1+16]
  lddw r4, 0x0101010101010101
  jne r3, r4, out
  ldxdw r3, [r1+24]
  jne r3, r4, out
  ldxdw r3, [r1+32]
  jne r3, r4, out
  ldxdw r3, [r1+40]
  jne r3, r4, out
  ja docpi
docpi:
  mov64 r2, r1
  add64 r2, 16
  stxdw [r10-16], r2
  mov64 r1, r10
  sub64 r1, 16
  call $sol_invoke_signed_c
out:
  mov64 r0, 0
  exit
)");
  ScanConfig cfg = unit_scan_config();
  cfg.explore.no_prune = true;
  ScanReport rep = scan_file(p, cfg);
  EXPECT_EQ(rep.status, ScanStatus::Ok);
  EXPECT_GE(rep.observation_count, 2u);  // both paths observed
  ASSERT_EQ(rep.findings.size(), 1u);    // one callsite
  EXPECT_EQ(rep.findings[0].classification, TargetClass::Arbitrary);
  EXPECT_TRUE(rep.findings[0].vulnerable);
}

AcpiFinding mk_finding(TargetClass c, bool signer_absent, bool owner_absent) {
  AcpiFinding f;
  f.classification = c;
  f.signer_check_absent = signer_absent;
  f.source_owner_check_absent = owner_absent;
  f.vulnerable = c == TargetClass::Arbitrary && signer_absent && owner_absent;
  return f;
}

ScanReport mk_report(std::vector<AcpiFinding> fs, bool anchor = false) {
  ScanReport r;
  r.findings = std::move(fs);
  r.anchor.is_anchor = anchor;
  return r;
}

TEST(Summary, CountsAndChainInequality) {
  std::vector<ScanReport> reports;
  // vulnerable: arbitrary + both checks absent
  reports.push_back(mk_report({mk_finding(TargetClass::Arbitrary, true, true)}, true));
  // arbitrary but signer-checked
  reports.push_back(mk_report({mk_finding(TargetClass::Arbitrary, false, true)}));
  // arbitrary but owner-checked
  reports.push_back(mk_report({mk_finding(TargetClass::Arbitrary, true, false)}));
  // whitelisted only: not counted in the arbitrary buckets
  reports.push_back(mk_report({mk_finding(TargetClass::Whitelisted, true, true)}));
  // clean
  reports.push_back(mk_report({}));

  Summary s = summarize(reports);
  EXPECT_EQ(s.contracts_total, 5u);
  EXPECT_EQ(s.contracts_with_arbitrary_cpi, 3u);
  EXPECT_EQ(s.contracts_missing_owner_checks, 2u);
  EXPECT_EQ(s.contracts_missing_signer_checks, 2u);
  EXPECT_EQ(s.contracts_vulnerable, 1u);
  EXPECT_EQ(s.anchor_count, 1u);

  EXPECT_LE(s.contracts_vulnerable, s.contracts_missing_owner_checks);
  EXPECT_LE(s.contracts_vulnerable, s.contracts_missing_signer_checks);
  EXPECT_LE(s.contracts_missing_owner_checks, s.contracts_with_arbitrary_cpi);
  EXPECT_LE(s.contracts_missing_signer_checks, s.contracts_with_arbitrary_cpi);
  EXPECT_LE(s.contracts_with_arbitrary_cpi, s.contracts_total);
}

TEST(Summary, FixedPointShares) {
  EXPECT_EQ(report_detail::fixed4(14, 6324), "0.0022");
  EXPECT_EQ(report_detail::fixed4(1, 3), "0.3333");
  EXPECT_EQ(report_detail::fixed4(2, 3), "0.6667");
  EXPECT_EQ(report_detail::fixed4(0, 7), "0.0000");
  EXPECT_EQ(report_detail::fixed4(0, 0), "0.0000");
  EXPECT_EQ(report_detail::fixed4(5, 4), "1.2500");
  EXPECT_EQ(report_detail::fixed4(7, 7), "1.0000");
}

TEST(ScanDir, ParallelismDoesNotChangeOutput) {
  TempDir tmp;
  tmp.program("a_vuln.so", kUnguardedCpi);
  tmp.program("b_clean.so", kClean);
  tmp.file("c_junk.so", Bytes{1, 2, 3});
  tmp.program("d_anchor.so", R"(
.rodata
msg: .asciz "AnchorError thrown in src/lib.rs"
.text
entrypoint:
  mov64 r0, 0
  exit
)");
  tmp.file("ignored.txt", Bytes{'x'});

  ScanConfig c1 = unit_scan_config();
  c1.jobs = 1;
  auto [r1, s1] = scan_dir(tmp.path.string(), c1);
  ScanConfig c8 = unit_scan_config();
  c8.jobs = 8;
  auto [r8, s8] = scan_dir(tmp.path.string(), c8);

  ASSERT_EQ(r1.size(), 4u);
  ASSERT_EQ(r8.size(), 4u);
  EXPECT_TRUE(std::is_sorted(r1.begin(), r1.end(),
                             [](const auto& a, const auto& b) { return a.path < b.path; }));
  EXPECT_EQ(batch_json(r1, s1, c1), batch_json(r8, s8, c8));

  EXPECT_EQ(s1.contracts_total, 4u);
  EXPECT_EQ(s1.contracts_vulnerable, 1u);
  EXPECT_EQ(s1.anchor_count, 1u);
}

TEST(ScanDir, NotADirectoryThrows) {
  EXPECT_THROW(scan_dir("/nonexistent/dir", unit_scan_config()), ScanError);
}

TEST(Json, ReportIsStableAndWellFormed) {
  TempDir tmp;
  std::string p = tmp.program("vuln.so", kUnguardedCpi);
  ScanConfig cfg = unit_scan_config();
  ScanReport rep = scan_file(p, cfg);
  std::string j1 = emit_json(report_json(rep, cfg));
  std::string j2 = emit_json(report_json(rep, cfg));
  EXPECT_EQ(j1, j2);
  EXPECT_EQ(j1.back(), '\n');

  nlohmann::json j = nlohmann::json::parse(j1);
  EXPECT_EQ(j.at("schema_version"), kReportSchemaVersion);
  EXPECT_EQ(j.at("status"), "ok");
  ASSERT_EQ(j.at("findings").size(), 1u);
  const auto& f = j.at("findings")[0];
  EXPECT_EQ(f.at("classification"), "arbitrary");
  EXPECT_EQ(f.at("vulnerable"), true);
  EXPECT_EQ(f.at("evidence").at("target").get<std::string>().size(), 64u);
  EXPECT_TRUE(f.at("evidence").at("inputs").is_object());
  EXPECT_EQ(j.at("config").at("accounts_min"), 1);
}

// Structural conformance against the shipped schema: every emitted key is
// declared, and every required key is emitted (for report, summary, and the
// nested finding/anchor/stats/config objects).
TEST(Json, MatchesShippedSchema) {
  std::ifstream in(std::string(SBFSCAN_SOURCE_DIR) + "/docs/scan-report.schema.json");
  ASSERT_TRUE(in.good());
  nlohmann::json schema = nlohmann::json::parse(in);
  auto check = [&](const nlohmann::json& obj, const std::string& def) {
    const auto& d = schema.at("definitions").at(def);
    const auto& props = d.at("properties");
    for (const auto& [key, value] : obj.items())
      EXPECT_TRUE(props.contains(key)) << def << " key " << key << " not in schema";
    for (const auto& req : d.at("required"))
      EXPECT_TRUE(obj.contains(req.get<std::string>()))
          << def << " missing required " << req;
  };

  TempDir tmp;
  std::string p = tmp.program("vuln.so", kUnguardedCpi);
  ScanConfig cfg = unit_scan_config();
  ScanReport rep = scan_file(p, cfg);
  nlohmann::json j = report_json(rep, cfg);
  check(j, "report");
  check(j.at("anchor"), "anchor");
  check(j.at("stats"), "stats");
  check(j.at("config"), "config");
  ASSERT_EQ(j.at("findings").size(), 1u);
  check(j.at("findings")[0], "finding");
  check(summary_json(summarize({rep})), "summary");
}

TEST(Json, SummaryFields) {
  Summary s;
  s.contracts_total = 6324;
  s.contracts_vulnerable = 14;
  s.anchor_count = 3162;
  nlohmann::json j = summary_json(s);
  EXPECT_EQ(j.at("vulnerable_share"), "0.0022");
  EXPECT_EQ(j.at("anchor_share"), "0.5000");
}

}  // namespace
}  // namespace sbfscan
