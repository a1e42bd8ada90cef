#include "robustsyn/synthesis/seed_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "robustsyn/data/image_io.hpp"
#include "robustsyn/data/transforms.hpp"

namespace robustsyn {

std::vector<double> ClassSeedModel::draw(std::mt19937_64& rng) const {
  const std::size_t d = dim();
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> z(d), out(mean);
  for (auto& v : z) v = g(rng);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0;
    const double* row = factor.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * z[j];
    out[i] += s;
  }
  const double sd = std::sqrt(shrinkage);
  for (auto& v : out) v += sd * g(rng);
  return out;
}

Image ClassSeedModel::sample(std::mt19937_64& rng) const {
  const auto v = draw(rng);
  Image low(channels, fit_height(), fit_width());
  for (std::size_t i = 0; i < v.size(); ++i) low.pixels[i] = static_cast<float>(v[i]);
  return downsample == 1 ? low : upsample_nn(low, downsample);
}

std::vector<Image> ClassSeedModel::sample(std::size_t n, std::uint64_t seed) const {
  std::vector<Image> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(stream_seed(seed, i));
    out.push_back(sample(rng));
  }
  return out;
}

std::vector<double> ClassSeedModel::covariance() const {
  const std::size_t d = dim();
  std::vector<double> c(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += factor[i * d + k] * factor[j * d + k];
      c[i * d + j] = s + (i == j ? shrinkage : 0.0);
    }
  return c;
}

ClassSeedModel fit_seed_model(const Dataset& data, int label, double shrinkage, int downsample_factor) {
  if (downsample_factor < 1) throw InvalidArgument("seed model: downsample factor must be >= 1");
  std::vector<const Image*> members;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.labels[i] == label) members.push_back(&data.images[i]);
  if (members.size() < 2) {
    throw InvalidArgument("seed model for class " + std::to_string(label) + " needs at least 2 samples, got " +
                          std::to_string(members.size()));
  }
  ClassSeedModel m;
  m.label = label;
  m.channels = members.front()->channels;
  m.height = members.front()->height;
  m.width = members.front()->width;
  m.downsample = downsample_factor;

  const auto n = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd X;
  for (Eigen::Index r = 0; r < n; ++r) {
    const Image low = downsample_factor == 1 ? *members[static_cast<std::size_t>(r)]
                                             : robustsyn::downsample(*members[static_cast<std::size_t>(r)], downsample_factor);
    if (r == 0) X.resize(n, static_cast<Eigen::Index>(low.size()));
    for (std::size_t j = 0; j < low.size(); ++j) X(r, static_cast<Eigen::Index>(j)) = low.pixels[j];
  }
  const Eigen::VectorXd mu = X.colwise().mean();
  X.rowwise() -= mu.transpose();
  const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
  const auto d = cov.rows();
  if (shrinkage < 0) shrinkage = std::max(1e-3 * cov.trace() / static_cast<double>(d), 1e-8);
  m.shrinkage = shrinkage;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("seed model: eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(lambda(i) + shrinkage > 0)) {
      throw NumericError("seed model: covariance is not positive definite after shrinkage " + std::to_string(shrinkage) +
                         "; increase the shrinkage");
    }
  }
  const Eigen::MatrixXd F = eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
  m.mean.assign(mu.data(), mu.data() + d);
  m.eigenvalues.assign(lambda.data(), lambda.data() + d);
  m.factor.resize(static_cast<std::size_t>(d * d));
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m.factor[static_cast<std::size_t>(i * d + j)] = F(i, j);
  return m;
}

const ClassSeedModel& SeedModelSet::for_class(int label) const {
  for (const auto& m : models)
    if (m.label == label) return m;
  throw InvalidArgument("no seed model for class " + std::to_string(label));
}

SeedModelSet fit_seed_models(const Dataset& data, double shrinkage, int downsample) {
  SeedModelSet set;
  for (int k = 0; k < data.num_classes(); ++k) set.models.push_back(fit_seed_model(data, k, shrinkage, downsample));
  return set;
}

namespace {

constexpr char kSeedMagic[8] = {'R', 'S', 'S', 'E', 'E', 'D', 'S', '1'};
constexpr std::uint32_t kSeedVersion = 1;

void append_doubles(std::string& out, const std::vector<double>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

}  // namespace

std::string serialize_seed_models(const SeedModelSet& set) {
  nlohmann::json header = nlohmann::json::array();
  for (const auto& m : set.models) {
    header.push_back({{"label", m.label},
                      {"channels", m.channels},
                      {"height", m.height},
                      {"width", m.width},
                      {"downsample", m.downsample},
                      {"shrinkage", m.shrinkage},
                      {"dim", m.dim()},
                      {"eigenvalues", m.eigenvalues}});
  }
  const std::string text = header.dump();
  std::string out(kSeedMagic, 8);
  out.append(reinterpret_cast<const char*>(&kSeedVersion), 4);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), 8);
  out += text;
  for (const auto& m : set.models) {
    append_doubles(out, m.mean);
    append_doubles(out, m.factor);
  }
  return out;
}

SeedModelSet deserialize_seed_models(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kSeedMagic, 8) != 0) throw FormatError("not a seed model file");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 8, 4);
  if (version != kSeedVersion) throw FormatError("unknown seed model version " + std::to_string(version));
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 12, 8);
  if (len > bytes.size() - 20) throw FormatError("truncated seed model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed seed model header: ") + e.what());
  }
  SeedModelSet set;
  std::size_t off = 20 + len;
  auto take = [&](std::size_t count) {
    if (bytes.size() - off < count * sizeof(double)) throw FormatError("truncated seed model payload");
    std::vector<double> v(count);
    std::memcpy(v.data(), bytes.data() + off, count * sizeof(double));
    off += count * sizeof(double);
    return v;
  };
  for (const auto& h : header) {
    ClassSeedModel m;
    m.label = h.at("label");
    m.channels = h.at("channels");
    m.height = h.at("height");
    m.width = h.at("width");
    m.downsample = h.at("downsample");
    m.shrinkage = h.at("shrinkage");
    m.eigenvalues = h.at("eigenvalues").get<std::vector<double>>();
    const std::size_t d = h.at("dim");
    m.mean = take(d);
    m.factor = take(d * d);
    set.models.push_back(std::move(m));
  }
  if (off != bytes.size()) throw FormatError("seed model file has trailing bytes");
  return set;
}

void save_seed_models(const SeedModelSet& set, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_seed_models(set));
}

SeedModelSet load_seed_models(const std::filesystem::path& path) { return deserialize_seed_models(read_file_bytes(path)); }

}  // namespace robustsyn
