#include "robustsyn/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "robustsyn/data/image_io.hpp"

namespace robustsyn {

void Dataset::validate() const {
  if (images.empty()) throw InvalidArgument("dataset is empty");
  if (labels.size() != images.size()) throw FormatError("dataset has mismatched image and label counts");
  for (const Image& im : images) {
    if (!im.same_shape(images.front())) throw FormatError("dataset images have inconsistent shapes");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes()) throw FormatError("dataset label " + std::to_string(y) + " out of range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_names = class_names;
  for (std::size_t i : indices) {
    if (i >= images.size()) throw InvalidArgument("dataset subset index out of range");
    out.images.push_back(images[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

Dataset Dataset::take(std::size_t first, std::size_t count) const {
  if (first > size()) throw InvalidArgument("dataset take: start beyond end");
  count = std::min(count, size() - first);
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
  return subset(idx);
}

Dataset Dataset::of_class(int label) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < size(); ++i)
    if (labels[i] == label) idx.push_back(i);
  return subset(idx);
}

void Dataset::shuffle(std::uint64_t seed) {
  std::vector<std::size_t> perm(size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  // Fisher-Yates with an explicit sampler so the order does not depend on the
  // standard library's shuffle implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  *this = subset(perm);
}

void Dataset::append(const Dataset& other) {
  if (class_names.empty()) class_names = other.class_names;
  if (other.class_names != class_names) throw InvalidArgument("cannot append datasets with different classes");
  images.insert(images.end(), other.images.begin(), other.images.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

using Rng = std::mt19937_64;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Color {
  double c[3];
};

Color random_color(Rng& rng, double lo, double hi) { return {{uni(rng, lo, hi), uni(rng, lo, hi), uni(rng, lo, hi)}}; }

void add_noise(Image& im, Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& v : im.pixels) v = static_cast<float>(std::clamp(v + n(rng), 0.0, 1.0));
}

// Sinusoidal stripes with orientation theta: value = base + amp * sin(...)
// per channel.
Image stripes(int size, Rng& rng, double theta) {
  const double cycles = uni(rng, 2.5, 5.0);
  const double phase = uni(rng, 0, kTwoPi);
  const Color base = random_color(rng, 0.35, 0.65);
  const Color amp = random_color(rng, 0.15, 0.3);
  Image im(3, size, size);
  const double ct = std::cos(theta), st = std::sin(theta);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double s = std::sin(kTwoPi * cycles * (x * ct + y * st) / size + phase);
      for (int c = 0; c < 3; ++c) im.at(c, y, x) = static_cast<float>(base.c[c] + amp.c[c] * s);
    }
  return im;
}

Image blobs(int size, Rng& rng) {
  const Color bg = random_color(rng, 0.25, 0.75);
  Image im(3, size, size);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) im.at(c, y, x) = static_cast<float>(bg.c[c]);
  const int count = std::uniform_int_distribution<int>(2, 4)(rng);
  for (int b = 0; b < count; ++b) {
    const double cy = uni(rng, 0.15, 0.85) * size, cx = uni(rng, 0.15, 0.85) * size;
    const double r = uni(rng, 0.1, 0.22) * size;
    const Color col = random_color(rng, 0.0, 1.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
        const double w = std::exp(-0.5 * d2);
        for (int c = 0; c < 3; ++c) {
          float& v = im.at(c, y, x);
          v = static_cast<float>((1 - w) * v + w * col.c[c]);
        }
      }
  }
  return im;
}

// Filled shape given by an indicator function over normalized coordinates.
template <typename Inside>
Image shape_image(int size, Rng& rng, Inside inside) {
  const Color bg = random_color(rng, 0.1, 0.5);
  Color fg = random_color(rng, 0.5, 1.0);
  Image im(3, size, size);
  const double cy = uni(rng, 0.35, 0.65), cx = uni(rng, 0.35, 0.65), scale = uni(rng, 0.22, 0.35);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = ((x + 0.5) / size - cx) / scale, v = ((y + 0.5) / size - cy) / scale;
      const bool in = inside(u, v);
      for (int c = 0; c < 3; ++c) im.at(c, y, x) = static_cast<float>(in ? fg.c[c] : bg.c[c]);
    }
  return im;
}

Image shapes10_sample(int label, int size, Rng& rng) {
  switch (label) {
    case 0:
      return shape_image(size, rng, [](double u, double v) { return u * u + v * v <= 1.0; });
    case 1:
      return shape_image(size, rng, [](double u, double v) { return std::abs(u) <= 0.85 && std::abs(v) <= 0.85; });
    case 2:
      return shape_image(size, rng, [](double u, double v) { return v <= 0.8 && v >= -1.0 + 2.0 * std::abs(u); });
    case 3:
      return stripes(size, rng, std::numbers::pi / 2);
    case 4:
      return stripes(size, rng, 0);
    case 5:
      return stripes(size, rng, std::numbers::pi / 4);
    case 6: {
      const int cell = std::uniform_int_distribution<int>(3, 6)(rng);
      const Color a = random_color(rng, 0.0, 0.45), b = random_color(rng, 0.55, 1.0);
      Image im(3, size, size);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const bool odd = ((y / cell) + (x / cell)) % 2;
          for (int c = 0; c < 3; ++c) im.at(c, y, x) = static_cast<float>(odd ? a.c[c] : b.c[c]);
        }
      return im;
    }
    case 7:
      return shape_image(size, rng, [](double u, double v) {
        const double r2 = u * u + v * v;
        return r2 <= 1.0 && r2 >= 0.4;
      });
    case 8:
      return shape_image(size, rng, [](double u, double v) {
        return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
      });
    default:
      return blobs(size, rng);
  }
}

Image domain_stripes(int label, int size, Rng& rng) {
  return stripes(size, rng, label == 0 ? std::numbers::pi / 2 : 0.0);
}

}  // namespace

std::vector<std::string> builtin_dataset_names() { return {"stripes-blobs", "hv-stripes", "shapes10", "cifar-small"}; }

BuiltinOptions builtin_defaults(const std::string& name) {
  if (!is_builtin_dataset(name)) throw InvalidArgument("unknown builtin dataset '" + name + "'");
  BuiltinOptions o;
  if (name == "stripes-blobs") {
    o.noise = 0.02;
    o.cue_amplitude = 0.008;
    o.cue_conflict = 0.2;
  }
  return o;
}

bool is_builtin_dataset(const std::string& name) {
  const auto names = builtin_dataset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

Dataset make_builtin(const std::string& name, const BuiltinOptions& options) {
  if (options.samples == 0) throw InvalidArgument("builtin dataset: sample count must be positive");
  if (options.size < 8) throw InvalidArgument("builtin dataset: size must be at least 8");
  Dataset ds;
  int k = 0;
  if (name == "stripes-blobs") {
    ds.class_names = {"stripes", "blobs"};
  } else if (name == "hv-stripes") {
    ds.class_names = {"horizontal", "vertical"};
  } else if (name == "shapes10" || name == "cifar-small") {
    ds.class_names = {"circle", "square", "triangle", "hstripes", "vstripes",
                      "diagonal", "checker", "ring", "cross", "blobs"};
  } else {
    throw InvalidArgument("unknown builtin dataset '" + name + "'");
  }
  k = ds.num_classes();
  for (std::size_t i = 0; i < options.samples; ++i) {
    Rng rng(stream_seed(options.seed, i));
    const int label = static_cast<int>(i % static_cast<std::size_t>(k));
    int shown = label;
    if (options.cue_conflict > 0 && uni(rng, 0, 1) < options.cue_conflict) {
      shown = static_cast<int>((label + 1 + rng() % static_cast<std::uint64_t>(k - 1)) % static_cast<std::uint64_t>(k));
    }
    Image im;
    if (name == "stripes-blobs") {
      im = shown == 0 ? stripes(options.size, rng, uni(rng, 0, std::numbers::pi)) : blobs(options.size, rng);
    } else if (name == "hv-stripes") {
      im = domain_stripes(shown, options.size, rng);
    } else {
      im = shapes10_sample(shown, options.size, rng);
    }
    if (options.contrast != 1.0) {
      const auto means = channel_means(im);
      const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
      for (int c = 0; c < im.channels; ++c)
        for (std::size_t j = 0; j < plane; ++j) {
          float& v = im.pixels[c * plane + j];
          v = static_cast<float>(means[static_cast<std::size_t>(c)] + options.contrast * (v - means[static_cast<std::size_t>(c)]));
        }
    }
    if (options.cue_amplitude > 0) {
      for (int c = 0; c < im.channels; ++c)
        for (int y = 0; y < im.height; ++y)
          for (int x = 0; x < im.width; ++x) {
            const int t = label % 2 == 0 ? y : x;
            im.at(c, y, x) += static_cast<float>(t % 4 < 2 ? options.cue_amplitude : -options.cue_amplitude);
          }
    }
    add_noise(im, rng, options.noise);
    ds.images.push_back(std::move(im));
    ds.labels.push_back(label);
  }
  return ds;
}

Dataset load_image_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  Dataset ds;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (ext == ".fif" || ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    const int label = ds.num_classes();
    ds.class_names.push_back(dir.filename().string());
    for (const auto& f : files) {
      Image im = read_image(f);
      if (!ds.images.empty() && !im.same_shape(ds.images.front())) {
        throw FormatError("image " + f.string() + " has a different shape from the rest of the dataset");
      }
      ds.images.push_back(std::move(im));
      ds.labels.push_back(label);
    }
  }
  if (ds.images.empty()) throw InvalidArgument("dataset directory " + root.string() + " contains no images");
  return ds;
}

Dataset load_cifar_binary(const std::filesystem::path& path, std::size_t limit) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && name.ends_with(".bin") && name.find("batch") != std::string::npos) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  Dataset ds;
  ds.class_names = {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
  constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
  for (const auto& f : files) {
    const std::string bytes = read_file_bytes(f);
    if (bytes.empty() || bytes.size() % kRecord != 0) throw FormatError(f.string() + " is not a CIFAR binary batch");
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      const int label = static_cast<unsigned char>(bytes[off]);
      if (label > 9) throw FormatError(f.string() + ": label byte out of range");
      Image im(3, 32, 32);
      for (std::size_t j = 0; j < 3 * 32 * 32; ++j) im.pixels[j] = static_cast<unsigned char>(bytes[off + 1 + j]) / 255.0f;
      ds.images.push_back(std::move(im));
      ds.labels.push_back(label);
      if (limit && ds.size() >= limit) return ds;
    }
  }
  if (ds.empty()) throw InvalidArgument("no CIFAR records found under " + path.string());
  return ds;
}

Dataset load_dataset(const std::string& path_or_name, DatasetFormat format, std::uint64_t shuffle_seed,
                     const BuiltinOptions& builtin) {
  Dataset ds;
  switch (format) {
    case DatasetFormat::builtin:
      ds = make_builtin(path_or_name, builtin);
      break;
    case DatasetFormat::image_directory:
      ds = load_image_directory(path_or_name);
      break;
    case DatasetFormat::cifar_binary:
      ds = load_cifar_binary(path_or_name);
      break;
  }
  ds.validate();
  ds.shuffle(shuffle_seed);
  return ds;
}

Dataset apply_grouping(const Dataset& data, const LabelGrouping& grouping, bool drop_ungrouped) {
  Dataset out;
  for (const auto& g : grouping.groups()) out.class_names.push_back(g.name);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!grouping.contains(data.labels[i])) {
      if (drop_ungrouped) continue;
      grouping.group_of(data.labels[i]);  // throws with the offending label
    }
    out.images.push_back(data.images[i]);
    out.labels.push_back(grouping.group_of(data.labels[i]));
  }
  return out;
}

Dataset randomize_labels(const Dataset& data, int num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw InvalidArgument("randomize_labels: class count must be positive");
  Dataset out = data;
  out.class_names.clear();
  for (int k = 0; k < num_classes; ++k) out.class_names.push_back("class" + std::to_string(k));
  std::mt19937_64 rng(seed);
  for (auto& y : out.labels) y = static_cast<int>(rng() % static_cast<std::uint64_t>(num_classes));
  return out;
}

}  // namespace robustsyn
