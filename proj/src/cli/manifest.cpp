#include "robustsyn/cli/manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>

#include "robustsyn/common.hpp"
#include "robustsyn/data/image_io.hpp"

namespace robustsyn::cli {

std::string git_blob_hash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string git_blob_hash_file(const std::filesystem::path& path) { return git_blob_hash(read_file_bytes(path)); }

namespace {

nlohmann::json files_to_json(const std::vector<FileRecord>& files) {
  auto a = nlohmann::json::array();
  for (const auto& f : files) a.push_back({{"path", f.path}, {"hash", f.hash}});
  return a;
}

std::vector<FileRecord> files_from_json(const nlohmann::json& j) {
  std::vector<FileRecord> out;
  for (const auto& f : j) out.push_back({f.at("path"), f.at("hash")});
  return out;
}

}  // namespace

nlohmann::json RunManifest::to_json() const {
  return {{"schema", schema},
          {"command", command},
          {"args", args},
          {"params", params},
          {"provenance", provenance},
          {"inputs", files_to_json(inputs)},
          {"outputs", files_to_json(outputs)},
          {"checkpoint_hash", checkpoint_hash},
          {"wall_seconds", wall_seconds},
          {"threads", threads},
          {"metrics", metrics}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.schema = j.at("schema");
    if (m.schema != 1) throw FormatError("unsupported manifest schema " + std::to_string(m.schema));
    m.command = j.at("command");
    m.args = j.at("args").get<std::vector<std::string>>();
    m.params = j.value("params", nlohmann::json::object());
    m.provenance = j.value("provenance", nlohmann::json::object());
    m.inputs = files_from_json(j.value("inputs", nlohmann::json::array()));
    m.outputs = files_from_json(j.value("outputs", nlohmann::json::array()));
    m.checkpoint_hash = j.value("checkpoint_hash", "");
    m.wall_seconds = j.value("wall_seconds", 0.0);
    m.threads = j.value("threads", 1);
    m.metrics = j.value("metrics", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest entry: ") + e.what());
  }
  return m;
}

void append_manifest(const std::filesystem::path& path, const RunManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open manifest " + path.string());
  out << m.to_json().dump() << '\n';
  if (!out) throw IoError("cannot write manifest " + path.string());
}

std::vector<RunManifest> read_manifests(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<RunManifest> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(RunManifest::from_json(j));
  }
  return out;
}

}  // namespace robustsyn::cli
