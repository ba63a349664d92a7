#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sbfscan/corpus.hpp"

namespace sbfscan {
namespace {

namespace fs = std::filesystem;

std::string corpus_dir() { return std::string(SBFSCAN_SOURCE_DIR) + "/corpus"; }
std::string manifest_path() { return corpus_dir() + "/manifest.json"; }

// Sweep up to six accounts: enough to reach every fixture's target account
// (the deepest uses index 5) while keeping whole-corpus verification fast.
ScanConfig corpus_scan_config() {
  ScanConfig cfg;
  cfg.explore.accounts_max = 6;
  cfg.explore.data_len_per_account = 1024;
  return cfg;
}

TEST(Manifest, LoadsAndIsWellFormed) {
  FixtureManifest m = load_manifest(manifest_path());
  EXPECT_EQ(m.base_dir, corpus_dir());
  ASSERT_GE(m.fixtures.size(), 10u);
  for (const auto& f : m.fixtures) {
    EXPECT_FALSE(f.name.empty());
    EXPECT_EQ(f.sha256.size(), 64u) << f.name;
    EXPECT_FALSE(f.provenance.empty()) << f.name;
    EXPECT_EQ(f.expect.status, "ok") << f.name;
  }
}

TEST(Manifest, MissingFileThrows) {
  EXPECT_THROW(load_manifest("/nonexistent/manifest.json"), ScanError);
}

TEST(Manifest, BadJsonThrows) {
  fs::path p = fs::temp_directory_path() / "sbfscan_bad_manifest.json";
  std::ofstream(p) << "{ not json";
  EXPECT_THROW(load_manifest(p.string()), ScanError);
  fs::remove(p);
}

TEST(VerifyFixtures, PristineCheckoutPasses) {
  FixtureManifest m = load_manifest(manifest_path());
  auto results = verify_fixtures(m, corpus_scan_config());
  ASSERT_EQ(results.size(), m.fixtures.size());
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.message;
}

TEST(VerifyFixtures, MissingFixtureReported) {
  FixtureManifest m = load_manifest(manifest_path());
  m.fixtures.resize(1);
  m.fixtures[0].path = "bin/does_not_exist.so";
  auto results = verify_fixtures(m, corpus_scan_config());
  ASSERT_EQ(results.size(), 1u);
  EXPECT_FALSE(results[0].pass);
  EXPECT_EQ(results[0].message.rfind("MissingFixture", 0), 0u);
}

TEST(VerifyFixtures, CorruptedFixtureFailsAloneWithHashMismatch) {
  FixtureManifest m = load_manifest(manifest_path());
  // Copy the corpus into a temp dir and corrupt exactly one binary.
  fs::path tmp = fs::temp_directory_path() / "sbfscan_corpus_corrupt";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "bin");
  for (const auto& f : m.fixtures)
    fs::copy_file(fs::path(m.base_dir) / f.path, tmp / f.path);
  {
    std::ofstream out(tmp / m.fixtures[0].path, std::ios::binary | std::ios::app);
    out << "tamper";
  }
  m.base_dir = tmp.string();
  auto results = verify_fixtures(m, corpus_scan_config());
  ASSERT_EQ(results.size(), m.fixtures.size());
  EXPECT_FALSE(results[0].pass);
  EXPECT_EQ(results[0].message.rfind("HashMismatch", 0), 0u);
  for (size_t i = 1; i < results.size(); ++i)
    EXPECT_TRUE(results[i].pass) << results[i].name << ": " << results[i].message;
  fs::remove_all(tmp);
}

// The scanner's vulnerable set over the corpus equals the manifest's
// expected vulnerable set exactly.
TEST(Corpus, ConfusionMatrixIsExact) {
  FixtureManifest m = load_manifest(manifest_path());
  ScanConfig cfg = corpus_scan_config();
  std::set<std::string> expected, actual;
  for (const auto& f : m.fixtures) {
    if (f.expect.vulnerable_count > 0) expected.insert(f.name);
    ScanReport rep = scan_file((fs::path(m.base_dir) / f.path).string(), cfg);
    if (rep.any_vulnerable()) actual.insert(f.name);
  }
  EXPECT_EQ(actual, expected);
}

TEST(Corpus, ExactlyOneOfFrameworkPairIsAnchor) {
  FixtureManifest m = load_manifest(manifest_path());
  ScanConfig cfg = corpus_scan_config();
  cfg.anchor_only = true;
  int anchor_fixtures = 0, anchor_flagged = 0;
  for (const auto& f : m.fixtures) {
    ScanReport rep = scan_file((fs::path(m.base_dir) / f.path).string(), cfg);
    anchor_fixtures += f.expect.anchor;
    anchor_flagged += rep.anchor.is_anchor;
    EXPECT_EQ(rep.anchor.is_anchor, f.expect.anchor) << f.name;
  }
  EXPECT_EQ(anchor_fixtures, 1);
  EXPECT_EQ(anchor_flagged, 1);
}

}  // namespace
}  // namespace sbfscan
