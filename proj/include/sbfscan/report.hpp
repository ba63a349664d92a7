#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sbfscan/cfg.hpp"
#include "sbfscan/detect.hpp"
#include "sbfscan/explore.hpp"
#include "sbfscan/image.hpp"

namespace sbfscan {

constexpr int kReportSchemaVersion = 1;

enum class ScanStatus { Ok, Unsupported, Timeout };

inline const char* scan_status_name(ScanStatus s) {
  switch (s) {
    case ScanStatus::Ok: return "ok";
    case ScanStatus::Unsupported: return "unsupported";
    case ScanStatus::Timeout: return "timeout";
  }
  return "?";
}

struct ScanConfig {
  ExplorationConfig explore;
  DetectConfig detect;
  std::vector<Fingerprint> fingerprints = default_anchor_fingerprints();
  bool anchor_only = false;
  std::string extension = ".so";  // files scanned by scan_dir
  unsigned jobs = 1;
};

struct ScanReport {
  std::string path;
  std::string sha256;
  ScanStatus status = ScanStatus::Ok;
  std::string status_reason;
  AnchorReport anchor;
  size_t observation_count = 0;
  std::vector<AcpiFinding> findings;  // one per callsite (worst verdict kept)
  ExploreStats stats;

  bool any_vulnerable() const {
    for (const auto& f : findings)
      if (f.vulnerable) return true;
    return false;
  }
};

struct Summary {
  uint64_t contracts_total = 0;
  uint64_t contracts_with_arbitrary_cpi = 0;
  uint64_t contracts_missing_owner_checks = 0;   // among those with arbitrary CPI
  uint64_t contracts_missing_signer_checks = 0;  // among those with arbitrary CPI
  uint64_t contracts_vulnerable = 0;             // the intersection
  uint64_t anchor_count = 0;
};

namespace report_detail {

inline int severity(const AcpiFinding& f) {
  int s = 0;
  switch (f.classification) {
    case TargetClass::NotAttackerControlled: s = 0; break;
    case TargetClass::ConstantTrusted: s = 1; break;
    case TargetClass::Whitelisted: s = 2; break;
    case TargetClass::Arbitrary: s = 3; break;
  }
  return f.vulnerable ? 10 + s : s;
}

// One finding per callsite: the path sweep produces an observation per
// feasible path and account count; triage wants the worst verdict per site.
inline std::vector<AcpiFinding> dedup_per_callsite(std::vector<AcpiFinding> all) {
  std::map<size_t, AcpiFinding> best;
  for (auto& f : all) {
    auto it = best.find(f.callsite);
    if (it == best.end() || severity(f) > severity(it->second)) best[f.callsite] = std::move(f);
  }
  std::vector<AcpiFinding> out;
  for (auto& [site, f] : best) out.push_back(std::move(f));
  return out;
}

inline std::string fixed4(uint64_t num, uint64_t den) {
  if (den == 0) return "0.0000";
  // round half up at the 4th decimal, in integer arithmetic
  uint64_t scaled = (num * 10000 + den / 2) / den;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%04llu",
                static_cast<unsigned long long>(scaled / 10000),
                static_cast<unsigned long long>(scaled % 10000));
  return buf;
}

inline std::string hex_of(const Bytes& b) {
  static const char* d = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (uint8_t c : b) {
    out.push_back(d[c >> 4]);
    out.push_back(d[c & 0xf]);
  }
  return out;
}

}  // namespace report_detail

// Full pipeline over one binary. Never throws for content problems: load,
// decode and exploration failures become status values on the report.
inline ScanReport scan_file(const std::string& path, const ScanConfig& config) {
  ScanReport rep;
  rep.path = path;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScanError(ErrKind::IoError, "cannot open " + path);
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  rep.sha256 = sha256_hex(bytes);

  ProgramImage img;
  try {
    img = load_elf(bytes);
  } catch (const ScanError& e) {
    rep.status = ScanStatus::Unsupported;
    rep.status_reason = std::string(err_kind_name(e.kind())) + ": " + e.what();
    return rep;
  }

  rep.anchor = detect_anchor(img, config.fingerprints);
  if (config.anchor_only) return rep;

  Cfg cfg;
  try {
    cfg = build_cfg(img);
  } catch (const ScanError& e) {
    rep.status = ScanStatus::Unsupported;
    rep.status_reason = std::string(err_kind_name(e.kind())) + ": " + e.what();
    return rep;
  }
  auto sites = find_cpi_sites(cfg, img, config.explore.cpi_syscalls);
  CpiReachability reach = compute_reachability(cfg, sites);
  ExploreResult res = explore(img, cfg, reach, config.explore);
  rep.stats = res.stats;
  rep.observation_count = res.observations.size();
  if (res.stats.timeout_hit) {
    rep.status = ScanStatus::Timeout;
    rep.status_reason = "exploration timeout; findings may be incomplete";
  }

  Solver solver(config.explore.solver_conflict_budget);
  std::vector<AcpiFinding> all;
  for (const auto& obs : res.observations) all.push_back(judge(solver, obs, config.detect));
  rep.findings = report_detail::dedup_per_callsite(std::move(all));
  return rep;
}

inline Summary summarize(const std::vector<ScanReport>& reports) {
  Summary s;
  s.contracts_total = reports.size();
  for (const auto& r : reports) {
    bool arb = false, owner_missing = false, signer_missing = false, vuln = false;
    for (const auto& f : r.findings) {
      if (f.classification != TargetClass::Arbitrary) continue;
      arb = true;
      owner_missing = owner_missing || f.source_owner_check_absent;
      signer_missing = signer_missing || f.signer_check_absent;
      vuln = vuln || f.vulnerable;
    }
    s.contracts_with_arbitrary_cpi += arb;
    s.contracts_missing_owner_checks += owner_missing;
    s.contracts_missing_signer_checks += signer_missing;
    s.contracts_vulnerable += vuln;
    s.anchor_count += r.anchor.is_anchor;
  }
  return s;
}

// Scans every regular file with the configured extension; reports sorted by
// path; results independent of the parallelism degree.
inline std::pair<std::vector<ScanReport>, Summary> scan_dir(const std::string& dir,
                                                            const ScanConfig& config) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ScanError(ErrKind::IoError, "not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& ent : fs::recursive_directory_iterator(dir))
    if (ent.is_regular_file() && ent.path().extension() == config.extension)
      paths.push_back(ent.path().string());
  std::sort(paths.begin(), paths.end());

  std::vector<ScanReport> reports(paths.size());
  unsigned jobs = std::max(1u, config.jobs);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < paths.size(); i = next.fetch_add(1)) {
      try {
        reports[i] = scan_file(paths[i], config);
      } catch (const ScanError& e) {
        reports[i].path = paths[i];
        reports[i].status = ScanStatus::Unsupported;
        reports[i].status_reason = std::string(err_kind_name(e.kind())) + ": " + e.what();
      }
    }
  };
  if (jobs == 1 || paths.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return {std::move(reports), summarize(reports)};
}

// ------------------------------------------------------------------- JSON

inline nlohmann::json finding_json(const AcpiFinding& f) {
  nlohmann::json j;
  j["callsite"] = f.callsite;
  j["abi"] = cpi_abi_name(f.abi);
  j["account_count"] = f.account_count;
  j["classification"] = target_class_name(f.classification);
  j["whitelist_count"] = f.whitelist_count;
  j["count_was_inconclusive"] = f.count_was_inconclusive;
  if (f.source_account)
    j["source_account"] = *f.source_account;
  else
    j["source_account"] = nullptr;
  j["signer_check_absent"] = f.signer_check_absent;
  j["source_owner_check_absent"] = f.source_owner_check_absent;
  j["vulnerable"] = f.vulnerable;
  j["diagnostic"] = f.diagnostic;
  if (f.vulnerable) {
    nlohmann::json ev;
    ev["target"] = report_detail::hex_of(f.evidence_target);
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [origin, value] : f.evidence_inputs) inputs[origin] = value;
    ev["inputs"] = inputs;
    j["evidence"] = ev;
  }
  return j;
}

inline nlohmann::json config_json(const ScanConfig& c) {
  nlohmann::json j;
  j["timeout_secs"] = c.explore.per_contract_timeout_secs;
  j["max_states"] = c.explore.max_states;
  j["step_budget"] = c.explore.step_budget;
  j["loop_bound"] = c.explore.loop_bound;
  j["accounts_min"] = c.explore.accounts_min;
  j["accounts_max"] = c.explore.accounts_max;
  j["data_len_per_account"] = c.explore.data_len_per_account;
  j["instr_data_len"] = c.explore.instr_data_len;
  j["pointer_fanout"] = c.explore.pointer_fanout;
  j["no_prune"] = c.explore.no_prune;
  j["whitelist_k"] = c.detect.whitelist_k;
  j["anchor_only"] = c.anchor_only;
  return j;
}

inline nlohmann::json report_json(const ScanReport& r, const ScanConfig& config) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["path"] = r.path;
  j["sha256"] = r.sha256;
  j["status"] = scan_status_name(r.status);
  j["status_reason"] = r.status_reason;

  nlohmann::json anchor;
  anchor["is_anchor"] = r.anchor.is_anchor;
  nlohmann::json matches = nlohmann::json::array();
  for (const auto& m : r.anchor.matched) {
    nlohmann::json mj;
    mj["kind"] = m.kind;
    mj["value"] = m.value;
    mj["vaddr"] = m.vaddr;
    matches.push_back(mj);
  }
  anchor["matched"] = matches;
  j["anchor"] = anchor;

  j["observation_count"] = r.observation_count;
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& f : r.findings) findings.push_back(finding_json(f));
  j["findings"] = findings;

  nlohmann::json stats;
  stats["states_explored"] = r.stats.states_explored;
  stats["states_pruned"] = r.stats.states_pruned;
  stats["paths_completed"] = r.stats.paths_completed;
  stats["timeout_hit"] = r.stats.timeout_hit;
  stats["state_cap_hit"] = r.stats.state_cap_hit;
  stats["faults"] = r.stats.faults;
  stats["unknown_syscalls"] = r.stats.unknown_syscalls;
  j["stats"] = stats;

  j["config"] = config_json(config);
  return j;
}

inline nlohmann::json summary_json(const Summary& s) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["contracts_total"] = s.contracts_total;
  j["contracts_with_arbitrary_cpi"] = s.contracts_with_arbitrary_cpi;
  j["contracts_missing_owner_checks"] = s.contracts_missing_owner_checks;
  j["contracts_missing_signer_checks"] = s.contracts_missing_signer_checks;
  j["contracts_vulnerable"] = s.contracts_vulnerable;
  j["vulnerable_share"] = report_detail::fixed4(s.contracts_vulnerable, s.contracts_total);
  j["anchor_count"] = s.anchor_count;
  j["anchor_share"] = report_detail::fixed4(s.anchor_count, s.contracts_total);
  return j;
}

// Canonical bytes: nlohmann::json keeps object keys sorted; 2-space indent
// plus trailing newline, byte-stable across runs and parallelism degrees.
inline std::string emit_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string batch_json(const std::vector<ScanReport>& reports, const Summary& summary,
                              const ScanConfig& config) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : reports) rs.push_back(report_json(r, config));
  j["reports"] = rs;
  j["summary"] = summary_json(summary);
  return emit_json(j);
}

}  // namespace sbfscan
