#include "robustsyn/models/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace robustsyn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'R', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

std::uint32_t crc32_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

json spec_to_json(const ClassifierSpec& s) {
  return json{{"arch", s.arch},
              {"channels", s.channels},
              {"height", s.height},
              {"width", s.width},
              {"num_classes", s.num_classes},
              {"stage_widths", s.stage_widths},
              {"stage_depths", s.stage_depths}};
}

ClassifierSpec spec_from_json(const json& j) {
  ClassifierSpec s;
  s.arch = j.at("arch").get<std::string>();
  s.channels = j.at("channels").get<int>();
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  s.stage_depths = j.at("stage_depths").get<std::vector<int>>();
  return s;
}

}  // namespace

std::string serialize_checkpoint(const Classifier& model) {
  std::string payload;
  json table = json::array();
  for (const auto& entry : model.state()) {
    const std::size_t offset = payload.size();
    for (real v : entry.tensor.data()) put<float>(payload, static_cast<float>(v));
    const std::size_t nbytes = payload.size() - offset;
    table.push_back({{"name", entry.name},
                     {"shape", entry.tensor.shape()},
                     {"offset", offset},
                     {"nbytes", nbytes},
                     {"crc32", crc32_of(payload.data() + offset, nbytes)}});
  }
  const auto& md = model.metadata();
  json manifest{{"format", "robustsyn-checkpoint"},
                {"dtype", "f32le"},
                {"spec", spec_to_json(model.spec())},
                {"tensors", table},
                {"payload_bytes", payload.size()},
                {"training",
                 {{"norm", md.norm},
                  {"epsilon", md.epsilon},
                  {"attack_steps", md.attack_steps},
                  {"attack_step_size", md.attack_step_size},
                  {"epochs", md.epochs},
                  {"extra", md.extra}}}};
  const std::string text = manifest.dump(1);
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out += payload;
  return out;
}

Classifier deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) throw FormatError("unknown checkpoint version " + std::to_string(version));
  const auto manifest_len = get<std::uint64_t>(bytes, 12);
  if (manifest_len > bytes.size() - kHeaderSize) throw FormatError("truncated checkpoint manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(kHeaderSize, manifest_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  const std::string_view payload = bytes.substr(kHeaderSize + manifest_len);

  try {
    if (manifest.at("dtype") != "f32le") throw FormatError("unsupported dtype");
    if (manifest.at("payload_bytes").get<std::size_t>() != payload.size()) {
      throw FormatError("payload length " + std::to_string(payload.size()) + " does not match manifest (" +
                        std::to_string(manifest.at("payload_bytes").get<std::size_t>()) + "); truncated or padded file");
    }
    Classifier model = Classifier::build(spec_from_json(manifest.at("spec")), 0);
    std::vector<NamedTensor> entries;
    for (const auto& t : manifest.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("nbytes").get<std::size_t>();
      const auto count = static_cast<std::size_t>(shape_numel(shape));
      if (nbytes != count * sizeof(float)) throw FormatError("tensor " + name + ": byte length does not match shape");
      if (offset > payload.size() || nbytes > payload.size() - offset) {
        throw FormatError("tensor " + name + ": extends past payload");
      }
      if (crc32_of(payload.data() + offset, nbytes) != t.at("crc32").get<std::uint32_t>()) {
        throw FormatError("tensor " + name + ": checksum mismatch");
      }
      std::vector<real> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        values[i] = static_cast<real>(get<float>(payload, offset + i * sizeof(float)));
      }
      entries.push_back({name, Tensor::from(shape, std::move(values))});
    }
    model.load_state(entries);
    const auto& tr = manifest.at("training");
    auto& md = model.metadata();
    md.norm = tr.at("norm").get<std::string>();
    md.epsilon = tr.at("epsilon").get<double>();
    md.attack_steps = tr.at("attack_steps").get<int>();
    md.attack_step_size = tr.at("attack_step_size").get<double>();
    md.epochs = tr.at("epochs").get<int>();
    md.extra = tr.at("extra").get<std::map<std::string, std::string>>();
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
}

void save_checkpoint(const Classifier& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Classifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace robustsyn
