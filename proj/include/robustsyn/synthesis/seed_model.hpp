#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "robustsyn/data/dataset.hpp"

namespace robustsyn {

// Class-conditional Gaussian N(mean, factor * factor^T + shrinkage * I) over
// images downsampled by `downsample` (fit resolution). Draws are made at the
// fit resolution and upsampled with nearest neighbours; they are not clipped.
struct ClassSeedModel {
  int label = 0;
  int channels = 0, height = 0, width = 0;  // full-resolution image shape
  int downsample = 1;
  double shrinkage = 0;
  std::vector<double> mean;        // d = channels * (height/downsample) * (width/downsample)
  std::vector<double> factor;      // d x d row-major, V * diag(sqrt(clamped eigenvalues))
  std::vector<double> eigenvalues;  // clamped at 0, ascending

  std::size_t dim() const { return mean.size(); }
  int fit_height() const { return height / downsample; }
  int fit_width() const { return width / downsample; }

  // Draw at fit resolution (length dim()).
  std::vector<double> draw(std::mt19937_64& rng) const;
  Image sample(std::mt19937_64& rng) const;
  // Sample i comes from its own stream stream_seed(seed, i).
  std::vector<Image> sample(std::size_t n, std::uint64_t seed) const;
  // Dense covariance at fit resolution (d x d row-major), including shrinkage.
  std::vector<double> covariance() const;
};

// shrinkage < 0 selects the default max(1e-3 * trace(S) / d, 1e-8), where S is
// the empirical covariance at fit resolution.
ClassSeedModel fit_seed_model(const Dataset& data, int label, double shrinkage = -1.0, int downsample = 1);

struct SeedModelSet {
  std::vector<ClassSeedModel> models;
  const ClassSeedModel& for_class(int label) const;
};

SeedModelSet fit_seed_models(const Dataset& data, double shrinkage = -1.0, int downsample = 1);

// Binary container: magic "RSSEEDS1", u32 version, u64 JSON header length,
// JSON header, then per model the mean and factor as f64 little-endian.
std::string serialize_seed_models(const SeedModelSet& set);
SeedModelSet deserialize_seed_models(std::string_view bytes);
void save_seed_models(const SeedModelSet& set, const std::filesystem::path& path);
SeedModelSet load_seed_models(const std::filesystem::path& path);

}  // namespace robustsyn
