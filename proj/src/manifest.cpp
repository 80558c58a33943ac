#include "dynlm/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dynlm/common.hpp"
#include "dynlm/sha256.hpp"

namespace dynlm {

namespace {

using ordered_json = nlohmann::ordered_json;

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out << text;
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void digest_files(std::vector<std::pair<std::string, std::string>>& entries) {
  for (auto& [path, digest] : entries) digest = sha256_file_hex(path);
}

std::string manifest_to_json(const RunManifest& manifest) {
  ordered_json j;
  j["manifest_version"] = 1;
  j["tool"] = "dynlm";
  j["version"] = kVersion;
  j["command"] = manifest.command;
  j["argv"] = manifest.argv;
  if (manifest.config_json.empty()) {
    j["config"] = ordered_json::object();
  } else {
    j["config"] = ordered_json::parse(manifest.config_json);
  }
  j["seeds"] = manifest.seeds;
  j["digest_algorithm"] = "sha256";
  auto file_list = [](const std::vector<std::pair<std::string, std::string>>& entries) {
    ordered_json arr = ordered_json::array();
    for (const auto& [path, digest] : entries) {
      arr.push_back({{"path", path}, {"sha256", digest}});
    }
    return arr;
  };
  j["inputs"] = file_list(manifest.inputs);
  j["outputs"] = file_list(manifest.outputs);
  j["duration_seconds"] = manifest.duration_seconds;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string("manifest parse error: ") + e.what());
  }
  if (!j.is_object() || j.value("tool", "") != "dynlm") {
    throw DataError("not a dynlm manifest");
  }
  RunManifest manifest;
  manifest.command = j.value("command", "");
  if (j.contains("argv")) manifest.argv = j["argv"].get<std::vector<std::string>>();
  if (j.contains("config")) manifest.config_json = j["config"].dump();
  if (j.contains("seeds")) manifest.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  auto read_list = [](const ordered_json& arr) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& item : arr) {
      out.emplace_back(item.value("path", ""), item.value("sha256", ""));
    }
    return out;
  };
  if (j.contains("inputs")) manifest.inputs = read_list(j["inputs"]);
  if (j.contains("outputs")) manifest.outputs = read_list(j["outputs"]);
  manifest.duration_seconds = j.value("duration_seconds", 0.0);
  return manifest;
}

std::string write_manifest(const RunManifest& manifest, const std::string& primary_output) {
  const std::string path = primary_output + ".manifest.json";
  write_text_atomic(path, manifest_to_json(manifest));
  return path;
}

RunManifest load_manifest(const std::string& path) {
  return manifest_from_json(read_text(path));
}

}  // namespace dynlm
