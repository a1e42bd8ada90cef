#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "robustsyn/data/grouping.hpp"
#include "robustsyn/data/image.hpp"

namespace robustsyn {

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  // Throws InvalidArgument when empty, FormatError when shapes differ.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset take(std::size_t first, std::size_t count) const;
  Dataset of_class(int label) const;
  // Deterministic permutation from the seed.
  void shuffle(std::uint64_t seed);
  void append(const Dataset& other);
};

// Seeded synthetic datasets, generated on the fly.
//
//   stripes-blobs  2 classes: oriented sinusoidal stripes vs soft blobs.
//   hv-stripes     2 domains: horizontal vs vertical stripes.
//   shapes10       10 classes of simple shapes and textures (alias
//                  "cifar-small", a 10-class 32x32 stand-in).
//
// Sample i is generated from its own RNG stream derived from (seed, i), so a
// dataset of n samples is a prefix of any larger one with the same seed.
struct BuiltinOptions {
  std::size_t samples = 1024;
  std::uint64_t seed = 0;
  int size = 32;
  // Scales every pixel's deviation from the image's mean color; lower values
  // bring the classes closer together in pixel space.
  double contrast = 1.0;
  double noise = 0.03;  // std of additive Gaussian pixel noise
  // Faint label cue: a fine grating (horizontal for even labels, vertical for
  // odd) of this amplitude, added to every sample.
  double cue_amplitude = 0.0;
  // Fraction of samples whose visible content is drawn from the other class
  // while the label (and cue) stay put.
  double cue_conflict = 0.0;
};
std::vector<std::string> builtin_dataset_names();
// Recommended options for a builtin. stripes-blobs carries a faint label cue
// that a standard classifier can exploit but a robust one cannot, with a
// fraction of samples whose visible content contradicts the label.
BuiltinOptions builtin_defaults(const std::string& name);
bool is_builtin_dataset(const std::string& name);
Dataset make_builtin(const std::string& name, const BuiltinOptions& options = {});

enum class DatasetFormat { builtin, image_directory, cifar_binary };

// image_directory: root/<class_name>/*.{fif,png}, classes in sorted name
// order. cifar_binary: a CIFAR-10 style binary batch file, or a directory of
// data_batch_*.bin / test_batch.bin files. The result is shuffled with
// shuffle_seed.
Dataset load_dataset(const std::string& path_or_name, DatasetFormat format, std::uint64_t shuffle_seed,
                     const BuiltinOptions& builtin = {});
Dataset load_image_directory(const std::filesystem::path& root);
Dataset load_cifar_binary(const std::filesystem::path& path, std::size_t limit = 0);

// Relabels through a grouping. Samples with ungrouped labels are dropped when
// drop_ungrouped is set, otherwise they raise InvalidArgument.
Dataset apply_grouping(const Dataset& data, const LabelGrouping& grouping, bool drop_ungrouped);

// Same images with labels drawn uniformly from [0, K).
Dataset randomize_labels(const Dataset& data, int num_classes, std::uint64_t seed);

// 64-bit stream seed from a base seed and an index (splitmix64 mixing).
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t index);

}  // namespace robustsyn
