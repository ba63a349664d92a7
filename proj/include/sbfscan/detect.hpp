#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sbfscan/explore.hpp"
#include "sbfscan/image.hpp"
#include "sbfscan/solver.hpp"

namespace sbfscan {

// ------------------------------------------------------------- ACPI oracle

enum class TargetClass { Arbitrary, Whitelisted, ConstantTrusted, NotAttackerControlled };

inline const char* target_class_name(TargetClass c) {
  switch (c) {
    case TargetClass::Arbitrary: return "arbitrary";
    case TargetClass::Whitelisted: return "whitelisted";
    case TargetClass::ConstantTrusted: return "constant-trusted";
    case TargetClass::NotAttackerControlled: return "not-attacker-controlled";
  }
  return "?";
}

struct AcpiFinding {
  size_t callsite = 0;
  CpiAbi abi = CpiAbi::C;
  uint64_t account_count = 0;
  TargetClass classification = TargetClass::NotAttackerControlled;
  size_t whitelist_count = 0;  // distinct feasible targets when Whitelisted
  bool count_was_inconclusive = false;

  std::optional<int> source_account;
  bool signer_check_absent = false;
  bool source_owner_check_absent = false;
  bool vulnerable = false;
  std::string diagnostic;

  // Populated for vulnerable findings: a satisfying target value and the
  // input-byte assignment that produces it (unlisted input bytes are zero).
  Bytes evidence_target;  // 32 bytes
  std::vector<std::pair<std::string, uint64_t>> evidence_inputs;
};

struct DetectConfig {
  size_t whitelist_k = 16;
};

// Distinct-value classification of a CPI target under the path constraints.
inline TargetClass classify_target(Solver& solver, const CpiObservation& obs,
                                   const DetectConfig& cfg, size_t* whitelist_count,
                                   bool* inconclusive) {
  *whitelist_count = 0;
  *inconclusive = false;
  if (obs.abi_parse_failed || !obs.target) return TargetClass::NotAttackerControlled;
  bool attacker = false;
  for (const Origin& o : obs.target_origins)
    if (o.attacker_controlled()) attacker = true;
  if (!attacker) return TargetClass::NotAttackerControlled;

  Solver::CountResult r =
      solver.count_distinct_ex(obs.constraints, obs.target, cfg.whitelist_k + 1);
  if (r.unknown) {
    // Could not decide: conservatively a full whitelist, never Arbitrary.
    *whitelist_count = cfg.whitelist_k;
    *inconclusive = true;
    return TargetClass::Whitelisted;
  }
  if (r.count <= 1) return TargetClass::ConstantTrusted;
  if (r.count <= cfg.whitelist_k) {
    *whitelist_count = r.count;
    return TargetClass::Whitelisted;
  }
  return TargetClass::Arbitrary;
}

// Accounts contributing bytes to the target, keyed by contribution size.
inline std::optional<int> dominant_source_account(const std::set<Origin>& origins,
                                                  std::vector<int>* all_contributors) {
  std::map<int, int> byte_count;
  for (const Origin& o : origins)
    if (o.src == Origin::Src::AccountField) ++byte_count[o.account];
  all_contributors->clear();
  for (const auto& [acct, n] : byte_count) all_contributors->push_back(acct);
  if (byte_count.empty()) return std::nullopt;
  int best = byte_count.begin()->first;
  int best_n = byte_count.begin()->second;
  for (const auto& [acct, n] : byte_count)
    if (n > best_n) {  // ties keep the lowest index (map iteration order)
      best = acct;
      best_n = n;
    }
  return best;
}

// Applies the authorization rules to one observation: vulnerable only when
// the target is arbitrary, no account on the path had a signer check, and
// every account feeding the target lacks key/owner/data-write evidence.
inline AcpiFinding judge(Solver& solver, const CpiObservation& obs, const DetectConfig& cfg) {
  AcpiFinding f;
  f.callsite = obs.callsite;
  f.abi = obs.abi;
  f.account_count = obs.account_count;
  f.diagnostic = obs.diagnostic;
  f.classification =
      classify_target(solver, obs, cfg, &f.whitelist_count, &f.count_was_inconclusive);

  std::vector<int> contributors;
  f.source_account = dominant_source_account(obs.target_origins, &contributors);

  f.signer_check_absent = !obs.journal.any_signer_checked();

  auto account_owner_checked = [&](int a) {
    size_t i = static_cast<size_t>(a);
    if (i >= obs.journal.key_checked.size()) return false;
    return obs.journal.key_checked[i] || obs.journal.owner_field_checked[i] ||
           obs.journal.data_written[i];
  };
  // Absent unless every contributing account carries some owner evidence;
  // a target fed purely by instruction data has no account to vouch for it.
  f.source_owner_check_absent = true;
  if (!contributors.empty()) {
    bool all_checked = true;
    for (int a : contributors)
      if (!account_owner_checked(a)) all_checked = false;
    f.source_owner_check_absent = !all_checked;
  }

  f.vulnerable = f.classification == TargetClass::Arbitrary && f.signer_check_absent &&
                 f.source_owner_check_absent;

  if (f.vulnerable) {
    Solver::Session s = solver.open(obs.constraints, obs.target);
    if (s.verdict.sat()) {
      WideVal tv = solver.model_of(s, obs.target);
      f.evidence_target = tv.bytes();
      std::set<Origin> witness_origins = obs.target_origins;
      for (const auto& c : obs.constraints)
        for (const Origin& o : origins(c)) witness_origins.insert(o);
      for (const Origin& o : witness_origins) {
        uint64_t v = solver.model_input(s, o);
        if (v != 0) f.evidence_inputs.emplace_back(o.to_string(), v);
      }
      std::sort(f.evidence_inputs.begin(), f.evidence_inputs.end());
    }
  }
  return f;
}

// --------------------------------------------------------- Anchor detection

struct Fingerprint {
  std::string kind;   // "error-string" or "abi-marker"
  std::string value;  // literal text, or hex bytes for abi-marker
  std::string note;
};

struct FingerprintMatch {
  std::string kind;
  std::string value;
  uint64_t vaddr = 0;
};

struct AnchorReport {
  bool is_anchor = false;
  std::vector<FingerprintMatch> matched;
};

// Built-in fingerprints: rodata strings emitted by the Anchor framework's
// error/reporting machinery and absent from plain native builds.
inline std::vector<Fingerprint> default_anchor_fingerprints() {
  return {
      {"error-string", "AnchorError occurred. Error Code:", "anchor error formatter"},
      {"error-string", "AnchorError thrown in", "anchor error location formatter"},
      {"error-string", "anchor-lang", "framework crate path in panic strings"},
  };
}

inline Bytes hex_to_bytes(const std::string& hex) {
  if (hex.size() % 2) throw ScanError(ErrKind::ParseError, "odd-length hex fingerprint");
  Bytes out;
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw ScanError(ErrKind::ParseError, "bad hex digit in fingerprint");
  };
  for (size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<uint8_t>(nib(hex[i]) * 16 + nib(hex[i + 1])));
  return out;
}

// One entry per line: kind<TAB>value<TAB>comment. '#' lines and blanks skipped.
inline std::vector<Fingerprint> load_fingerprints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScanError(ErrKind::IoError, "cannot open fingerprint file: " + path);
  std::vector<Fingerprint> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    size_t t1 = line.find('\t');
    if (t1 == std::string::npos)
      throw ScanError(ErrKind::ParseError,
                      "fingerprint line " + std::to_string(lineno) + ": missing tab");
    size_t t2 = line.find('\t', t1 + 1);
    Fingerprint fp;
    fp.kind = line.substr(0, t1);
    fp.value = t2 == std::string::npos ? line.substr(t1 + 1) : line.substr(t1 + 1, t2 - t1 - 1);
    if (t2 != std::string::npos) fp.note = line.substr(t2 + 1);
    if (fp.kind != "error-string" && fp.kind != "abi-marker")
      throw ScanError(ErrKind::ParseError,
                      "fingerprint line " + std::to_string(lineno) + ": unknown kind " + fp.kind);
    if (fp.kind == "abi-marker") hex_to_bytes(fp.value);  // validate early
    out.push_back(std::move(fp));
  }
  return out;
}

// Read-only rodata scan; idempotent.
inline AnchorReport detect_anchor(const ProgramImage& image,
                                  const std::vector<Fingerprint>& fingerprints =
                                      default_anchor_fingerprints()) {
  AnchorReport rep;
  auto strings = iter_strings(image, 4);
  for (const Fingerprint& fp : fingerprints) {
    if (fp.kind == "error-string") {
      for (const auto& [vaddr, s] : strings) {
        if (s.find(fp.value) != std::string::npos) {
          rep.matched.push_back({fp.kind, fp.value, vaddr});
          break;  // one match per fingerprint is enough
        }
      }
    } else {  // abi-marker: raw byte pattern anywhere in rodata
      Bytes pat = hex_to_bytes(fp.value);
      if (pat.empty()) continue;
      for (const auto& seg : image.rodata_segments) {
        auto it = std::search(seg.bytes.begin(), seg.bytes.end(), pat.begin(), pat.end());
        if (it != seg.bytes.end()) {
          rep.matched.push_back(
              {fp.kind, fp.value,
               seg.vaddr + static_cast<uint64_t>(it - seg.bytes.begin())});
          break;
        }
      }
    }
  }
  rep.is_anchor = !rep.matched.empty();
  return rep;
}

}  // namespace sbfscan
