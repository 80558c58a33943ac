#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynlm/discretization.hpp"
#include "dynlm/dynamics.hpp"
#include "dynlm/transformer.hpp"

namespace dynlm {

// Token sequences with their vocabulary bound ("DYNTOK01" file).
struct TokenData {
  std::uint32_t vocab = 0;
  std::vector<std::vector<TokenId>> sequences;

  std::size_t total_tokens() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
  }
};

// Trajectory container: magic "DYNTRAJ1", little-endian u32 dim, u32 count,
// then per trajectory u64 length, f64 tau, length*dim f64 row-major.
// A sidecar <path>.meta.json records system, parameters, seed, split and
// the RNG algorithm; loading works without it (metadata defaults apply).
void save_trajectories(const std::string& path, const Dataset& dataset);
Dataset load_trajectories(const std::string& path);

// "DYNTOK01": u32 vocab, u32 count, per sequence u64 length then u32 ids.
void save_tokens(const std::string& path, const TokenData& tokens);
TokenData load_tokens(const std::string& path);

// Structured text with dim, n, lo[], hi[], flattening order, version tag.
void save_grid(const std::string& path, const Grid& grid);
Grid load_grid(const std::string& path);

// "DYNCKPT1": u32 version, structured-text header (config, step, seed),
// then a directory of named f64 tensors. Every shape is validated against
// the config on load.
struct Checkpoint {
  ParameterSet params;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// One-paragraph description of any project file (magic sniffing), for the
// `inspect` subcommand.
std::string describe_file(const std::string& path);

}  // namespace dynlm
