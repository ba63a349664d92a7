#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sbfscan/common.hpp"

namespace sbfscan {

// Documented Solana runtime syscalls. The loader resolves call-by-hash
// relocations against murmur3_32 of these names; tools/gen_syscall_table
// regenerates and cross-checks this list against the fixture binaries.
inline const std::vector<std::string>& known_syscall_names() {
  static const std::vector<std::string> names = {
      "abort",
      "sol_panic_",
      "sol_log_",
      "sol_log_64_",
      "sol_log_pubkey",
      "sol_log_compute_units_",
      "sol_log_data",
      "sol_memcpy_",
      "sol_memmove_",
      "sol_memset_",
      "sol_memcmp_",
      "sol_sha256",
      "sol_keccak256",
      "sol_blake3",
      "sol_secp256k1_recover",
      "sol_create_program_address",
      "sol_try_find_program_address",
      "sol_invoke_signed_c",
      "sol_invoke_signed_rust",
      "sol_alloc_free_",
      "sol_set_return_data",
      "sol_get_return_data",
      "sol_get_clock_sysvar",
      "sol_get_rent_sysvar",
      "sol_get_epoch_schedule_sysvar",
      "sol_get_stack_height",
      "sol_remaining_compute_units",
  };
  return names;
}

inline const std::map<uint32_t, std::string>& syscall_hash_table() {
  static const std::map<uint32_t, std::string> table = [] {
    std::map<uint32_t, std::string> t;
    for (const auto& name : known_syscall_names()) t.emplace(murmur3_32(name), name);
    return t;
  }();
  return table;
}

// The two CPI entry points of the Solana runtime (C ABI and Rust ABI).
inline const std::set<std::string>& default_cpi_syscalls() {
  static const std::set<std::string> s = {"sol_invoke_signed_c", "sol_invoke_signed_rust"};
  return s;
}

}  // namespace sbfscan
