#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbfscan/report.hpp"

namespace sbfscan {

// Expectations asserted for one checked-in fixture binary.
struct FixtureExpect {
  std::string status = "ok";          // ok | unsupported | timeout
  size_t vulnerable_count = 0;
  std::optional<int> source_account;  // of the first vulnerable finding
  bool anchor = false;
};

struct FixtureEntry {
  std::string name;
  std::string path;  // relative to the manifest's directory
  std::string sha256;
  FixtureExpect expect;
  std::string provenance;
};

struct FixtureManifest {
  std::string base_dir;
  std::vector<FixtureEntry> fixtures;
};

inline FixtureManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScanError(ErrKind::IoError, "cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ScanError(ErrKind::ParseError, std::string("manifest parse: ") + e.what());
  }
  FixtureManifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  for (const auto& fj : j.at("fixtures")) {
    FixtureEntry e;
    e.name = fj.at("name").get<std::string>();
    e.path = fj.at("path").get<std::string>();
    e.sha256 = fj.at("sha256").get<std::string>();
    e.provenance = fj.value("provenance", "");
    const auto& ex = fj.at("expect");
    e.expect.status = ex.value("status", "ok");
    e.expect.vulnerable_count = ex.value("vulnerable_count", size_t{0});
    if (ex.contains("source_account") && !ex.at("source_account").is_null())
      e.expect.source_account = ex.at("source_account").get<int>();
    e.expect.anchor = ex.value("anchor", false);
    m.fixtures.push_back(std::move(e));
  }
  return m;
}

struct FixtureResult {
  std::string name;
  bool pass = false;
  std::string message;  // "MissingFixture", "HashMismatch", or expectation diff
};

// Hash + expectation check per fixture, via the regular scan pipeline.
inline std::vector<FixtureResult> verify_fixtures(const FixtureManifest& m,
                                                  const ScanConfig& config) {
  namespace fs = std::filesystem;
  std::vector<FixtureResult> out;
  for (const FixtureEntry& e : m.fixtures) {
    FixtureResult r;
    r.name = e.name;
    std::string full = (fs::path(m.base_dir) / e.path).string();
    if (!fs::is_regular_file(full)) {
      r.message = "MissingFixture: " + full;
      out.push_back(std::move(r));
      continue;
    }
    {
      std::ifstream in(full, std::ios::binary);
      Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      std::string h = sha256_hex(bytes);
      if (h != e.sha256) {
        r.message = "HashMismatch: got " + h;
        out.push_back(std::move(r));
        continue;
      }
    }
    ScanReport rep = scan_file(full, config);
    auto complain = [&](const std::string& what) {
      if (!r.message.empty()) r.message += "; ";
      r.message += what;
    };
    if (scan_status_name(rep.status) != e.expect.status)
      complain("status " + std::string(scan_status_name(rep.status)) + " != " + e.expect.status);
    size_t vuln = 0;
    std::optional<int> first_source;
    for (const auto& f : rep.findings)
      if (f.vulnerable) {
        if (!vuln) first_source = f.source_account;
        ++vuln;
      }
    if (vuln != e.expect.vulnerable_count)
      complain("vulnerable_count " + std::to_string(vuln) + " != " +
               std::to_string(e.expect.vulnerable_count));
    if (e.expect.source_account && first_source != e.expect.source_account)
      complain("source_account mismatch");
    if (rep.anchor.is_anchor != e.expect.anchor) complain("anchor flag mismatch");
    r.pass = r.message.empty();
    if (r.pass) r.message = "ok";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sbfscan
