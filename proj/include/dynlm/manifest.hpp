#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dynlm {

// Provenance record written beside every command's outputs: the resolved
// configuration, the seeds, and content digests of every file read or
// written. Reruns with the same inputs and seeds must reproduce the output
// digests byte for byte.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_json;  // resolved flag values as a JSON object
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, sha256
  std::vector<std::pair<std::string, std::string>> outputs;  // path, sha256
  double duration_seconds = 0.0;
};

// Fills the digest for each listed path (the string part is overwritten).
void digest_files(std::vector<std::pair<std::string, std::string>>& entries);

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

// Writes <primary_output>.manifest.json atomically and returns its path.
std::string write_manifest(const RunManifest& manifest, const std::string& primary_output);
RunManifest load_manifest(const std::string& path);

}  // namespace dynlm
