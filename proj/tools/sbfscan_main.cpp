// Command-line scanner: loads SBF program binaries, symbolically executes
// them to find arbitrary cross-program-invocation targets, and emits
// deterministic JSON reports.
//
// Exit codes: 0 = scanned, no vulnerable findings; 2 = vulnerable findings
// present; 1 = usage or I/O error.
//
// Every flag can also be set through an environment variable with the
// SBFSCAN_ prefix (e.g. SBFSCAN_TIMEOUT_SECS).

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sbfscan/report.hpp"

namespace fs = std::filesystem;
using namespace sbfscan;

namespace {

int write_or_print(const std::string& text, const std::string& json_path) {
  if (json_path.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream out(json_path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot write " << json_path << "\n";
    return 1;
  }
  out << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bytecode scanner for arbitrary cross-program invocations in SBF programs"};
  app.require_subcommand(1);

  CLI::App* scan = app.add_subcommand("scan", "scan a program file or a directory of programs");
  std::string path;
  scan->add_option("path", path, "ELF file or directory to scan")->required();

  ScanConfig config;
  std::string accounts_range;
  std::string json_path;
  std::string fingerprint_path;
  bool summary_only = false;
  bool dump_cfg = false;

  scan->add_option("--timeout-secs", config.explore.per_contract_timeout_secs,
                   "per-contract exploration timeout (default 1800)")
      ->envname("SBFSCAN_TIMEOUT_SECS");
  scan->add_option("--max-states", config.explore.max_states,
                   "state cap per contract")
      ->envname("SBFSCAN_MAX_STATES");
  scan->add_option("--accounts", accounts_range,
                   "account counts to sweep, as min..max (default 1..8)")
      ->envname("SBFSCAN_ACCOUNTS");
  scan->add_option("--whitelist-k", config.detect.whitelist_k,
                   "max distinct targets still considered a whitelist (default 16)")
      ->envname("SBFSCAN_WHITELIST_K");
  scan->add_option("--json", json_path, "write JSON output to this file instead of stdout")
      ->envname("SBFSCAN_JSON");
  scan->add_flag("--summary-only", summary_only, "emit only the aggregate summary")
      ->envname("SBFSCAN_SUMMARY_ONLY");
  scan->add_flag("--no-prune", config.explore.no_prune,
                 "disable reachability pruning (debug)")
      ->envname("SBFSCAN_NO_PRUNE");
  scan->add_flag("--anchor-only", config.anchor_only,
                 "framework fingerprinting only, skip symbolic exploration")
      ->envname("SBFSCAN_ANCHOR_ONLY");
  scan->add_option("--fingerprints", fingerprint_path,
                   "fingerprint file (kind<TAB>value<TAB>comment per line)")
      ->envname("SBFSCAN_FINGERPRINTS");
  scan->add_option("--jobs", config.jobs, "parallel workers for directory scans (default 1)")
      ->envname("SBFSCAN_JOBS");
  scan->add_flag("--dump-cfg", dump_cfg, "print the control-flow graph in DOT form and exit")
      ->envname("SBFSCAN_DUMP_CFG");
  scan->add_flag("--trace", config.explore.trace, "trace symbolic execution to stderr")
      ->envname("SBFSCAN_TRACE");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (!accounts_range.empty()) {
      size_t dots = accounts_range.find("..");
      if (dots == std::string::npos)
        throw ScanError(ErrKind::ParseError, "--accounts expects min..max");
      config.explore.accounts_min = std::stoull(accounts_range.substr(0, dots));
      config.explore.accounts_max = std::stoull(accounts_range.substr(dots + 2));
      if (config.explore.accounts_min < 1 ||
          config.explore.accounts_max < config.explore.accounts_min)
        throw ScanError(ErrKind::ParseError, "--accounts range is empty or starts below 1");
    }
    if (!fingerprint_path.empty()) config.fingerprints = load_fingerprints(fingerprint_path);

    if (dump_cfg) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw ScanError(ErrKind::IoError, "cannot open " + path);
      Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      std::cout << dump_cfg_dot(build_cfg(load_elf(bytes)));
      return 0;
    }

    bool any_vulnerable = false;
    std::string out;
    if (fs::is_directory(path)) {
      auto [reports, summary] = scan_dir(path, config);
      for (const auto& r : reports) any_vulnerable = any_vulnerable || r.any_vulnerable();
      out = summary_only ? emit_json(summary_json(summary))
                         : batch_json(reports, summary, config);
    } else {
      ScanReport rep = scan_file(path, config);
      any_vulnerable = rep.any_vulnerable();
      out = summary_only ? emit_json(summary_json(summarize({rep})))
                         : emit_json(report_json(rep, config));
    }
    if (int rc = write_or_print(out, json_path)) return rc;
    return any_vulnerable ? 2 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
