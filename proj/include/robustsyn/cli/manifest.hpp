#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace robustsyn::cli {

// Git blob object id: hex SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_hash(std::string_view bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

struct FileRecord {
  std::string path;
  std::string hash;  // git blob id
};

// One line of a manifest file (JSON Lines). `args` is the fully resolved
// command line, every flag spelled out, so replaying it does not depend on
// presets or environment defaults.
struct RunManifest {
  int schema = 1;
  std::string command;
  std::vector<std::string> args;
  nlohmann::json params = nlohmann::json::object();      // flag name -> resolved value
  nlohmann::json provenance = nlohmann::json::object();  // flag name -> where the value came from
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  std::string checkpoint_hash;
  double wall_seconds = 0;
  int threads = 1;
  nlohmann::json metrics = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

void append_manifest(const std::filesystem::path& path, const RunManifest& m);
std::vector<RunManifest> read_manifests(const std::filesystem::path& path);

}  // namespace robustsyn::cli
