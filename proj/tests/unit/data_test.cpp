#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "robustsyn/data/dataset.hpp"
#include "robustsyn/data/image_io.hpp"
#include "robustsyn/data/transforms.hpp"

using namespace robustsyn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("robustsyn_data_test_" + name);
  fs::remove_all(p);
  return p;
}

Image ramp(int c, int h, int w) {
  Image im(c, h, w);
  for (std::size_t i = 0; i < im.size(); ++i) im.pixels[i] = static_cast<float>(i % 97) / 96.0f;
  return im;
}

}  // namespace

TEST_CASE("grouping text parses ranges, lists and comments") {
  auto g = LabelGrouping::parse("# header\nA: 1-3, 7\n\nB: 10-12 # trailing\n");
  REQUIRE(g.size() == 2);
  CHECK(g.group_of(2) == 0);
  CHECK(g.group_of(7) == 0);
  CHECK(g.group_of(12) == 1);
  CHECK_FALSE(g.contains(5));
  CHECK_THROWS_AS(g.group_of(5), InvalidArgument);
  auto again = LabelGrouping::parse(g.to_text());
  CHECK(again.to_text() == g.to_text());
}

TEST_CASE("malformed groupings are rejected") {
  CHECK_THROWS_AS(LabelGrouping::parse("A 1-3"), InvalidArgument);
  CHECK_THROWS_AS(LabelGrouping::parse("A: 3-1"), InvalidArgument);
  CHECK_THROWS_AS(LabelGrouping::parse("A: 1-5\nB: 5-9"), InvalidArgument);
  CHECK_THROWS_AS(LabelGrouping::parse("A: x"), InvalidArgument);
}

TEST_CASE("restricted ImageNet grouping has nine classes with the published ranges") {
  auto g = LabelGrouping::restricted_imagenet();
  REQUIRE(g.size() == 9);
  CHECK(g.groups()[0].name == "Dog");
  CHECK(g.group_of(151) == 0);
  CHECK(g.group_of(268) == 0);
  CHECK(g.group_of(285) == 1);
  CHECK(g.group_of(319) == 8);
  CHECK_FALSE(g.contains(0));
  CHECK_FALSE(g.contains(269));
}

TEST_CASE("apply_grouping relabels and drops or rejects ungrouped samples") {
  Dataset d;
  d.class_names = {"a", "b", "c", "d"};
  for (int i = 0; i < 4; ++i) {
    d.images.push_back(Image(1, 2, 2, 0.1f * i));
    d.labels.push_back(i);
  }
  auto g = LabelGrouping::parse("Low: 0-1\nHigh: 3");
  auto out = apply_grouping(d, g, true);
  CHECK(out.labels == std::vector<int>{0, 0, 1});
  CHECK(out.class_names == std::vector<std::string>{"Low", "High"});
  CHECK_THROWS_AS(apply_grouping(d, g, false), InvalidArgument);
}

TEST_CASE("builtin datasets are seeded, prefix-stable and in range") {
  for (const auto& name : builtin_dataset_names()) {
    BuiltinOptions o = builtin_defaults(name);
    o.samples = 20;
    o.seed = 3;
    Dataset a = make_builtin(name, o);
    o.samples = 30;
    Dataset b = make_builtin(name, o);
    INFO(name);
    REQUIRE(a.size() == 20);
    a.validate();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.images[i] == b.images[i]);
      CHECK(a.labels[i] == b.labels[i]);
      for (float v : a.images[i].pixels) CHECK((v >= 0 && v <= 1));
    }
    o.seed = 4;
    CHECK_FALSE(make_builtin(name, o).images[0] == b.images[0]);
  }
  CHECK_THROWS_AS(make_builtin("nope"), InvalidArgument);
  CHECK_THROWS_AS(builtin_defaults("nope"), InvalidArgument);
}

TEST_CASE("two-class builtins are balanced enough to train on") {
  BuiltinOptions o;
  o.samples = 400;
  for (const char* name : {"stripes-blobs", "hv-stripes"}) {
    Dataset d = make_builtin(name, o);
    int ones = 0;
    for (int y : d.labels) ones += y;
    CHECK(ones > 150);
    CHECK(ones < 250);
  }
}

TEST_CASE("fif round trip is exact; corruption is detected") {
  Image im = ramp(3, 5, 7);
  std::string bytes = encode_fif(im);
  CHECK(bytes.size() == 20 + 4 * im.size());
  CHECK(decode_fif(bytes) == im);
  CHECK_THROWS_AS(decode_fif(bytes.substr(0, bytes.size() - 1)), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_fif(bad), FormatError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_fif(bad), FormatError);
  Image out_of_range = im;
  out_of_range.pixels[3] = 1.5f;
  CHECK_THROWS_AS(encode_fif(out_of_range), InvalidArgument);
}

TEST_CASE("png round trip quantizes to k/255") {
  Image im = ramp(3, 4, 6);
  Image back = decode_png(encode_png(im));
  REQUIRE(back.same_shape(im));
  for (std::size_t i = 0; i < im.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - im.pixels[i]) <= 0.5f / 255 + 1e-6f);
    CHECK(std::abs(back.pixels[i] * 255 - std::round(back.pixels[i] * 255)) < 1e-4);
  }
  CHECK_THROWS_AS(decode_png("not a png"), FormatError);
  CHECK_THROWS_AS(encode_png(Image(2, 2, 2)), InvalidArgument);
}

TEST_CASE("image directory loader uses sorted class folders") {
  fs::path root = scratch("dir");
  fs::create_directories(root / "b");
  fs::create_directories(root / "a");
  write_image(Image(3, 4, 4, 0.2f), root / "a" / "x.fif");
  write_image(Image(3, 4, 4, 0.4f), root / "b" / "y.png");
  write_image(Image(3, 4, 4, 0.6f), root / "b" / "z.fif");
  Dataset d = load_image_directory(root);
  CHECK(d.class_names == std::vector<std::string>{"a", "b"});
  CHECK(d.size() == 3);
  CHECK(d.labels[0] == 0);
  CHECK(d.labels[2] == 1);
  fs::remove_all(root);
}

TEST_CASE("CIFAR binary batches are decoded record by record") {
  fs::path root = scratch("cifar");
  fs::create_directories(root);
  std::string bytes;
  for (int r = 0; r < 3; ++r) {
    bytes.push_back(static_cast<char>(r * 4));
    for (int j = 0; j < 3072; ++j) bytes.push_back(static_cast<char>((j + r) % 256));
  }
  write_file_bytes(root / "data_batch_1.bin", bytes);
  Dataset d = load_cifar_binary(root);
  REQUIRE(d.size() == 3);
  CHECK(d.labels == std::vector<int>{0, 4, 8});
  CHECK(d.images[1].at(0, 0, 0) == doctest::Approx(1 / 255.0));
  CHECK(d.images[0].at(2, 31, 31) == doctest::Approx(255 / 255.0));
  write_file_bytes(root / "data_batch_2.bin", bytes.substr(0, 100));
  CHECK_THROWS_AS(load_cifar_binary(root), FormatError);
  fs::remove_all(root);
}

TEST_CASE("downsample averages blocks and upsample replicates them") {
  Image im(1, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) im.at(0, y, x) = static_cast<float>(y * 4 + x) / 15.0f;
  Image lo = downsample(im, 2);
  CHECK(lo.height == 2);
  CHECK(lo.at(0, 0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 60.0));
  Image up = upsample_nn(lo, 2);
  CHECK(up.at(0, 3, 3) == lo.at(0, 1, 1));
  CHECK(up.at(0, 2, 3) == lo.at(0, 1, 1));
  CHECK(downsample(up, 2) == lo);
  CHECK_THROWS_AS(downsample(Image(1, 5, 4), 2), InvalidArgument);
}

TEST_CASE("patch corruption fills with the channel mean inside the mask only") {
  Image im = ramp(3, 16, 16);
  std::mt19937_64 rng(5);
  auto c = corrupt_patch(im, 6, rng);
  auto means = channel_means(im);
  int inside = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const bool in = c.mask.at(0, y, x) == 1.0f;
      inside += in;
      CHECK(in == (y >= c.top && y < c.top + 6 && x >= c.left && x < c.left + 6));
      for (int ch = 0; ch < 3; ++ch) {
        if (in) CHECK(c.corrupted.at(ch, y, x) == doctest::Approx(means[ch]));
        else CHECK(c.corrupted.at(ch, y, x) == im.at(ch, y, x));
      }
    }
  CHECK(inside == 36);
}

TEST_CASE("crop-and-flip augmentation preserves shape and is seeded") {
  Image im = ramp(3, 8, 8);
  std::mt19937_64 a(1), b(1);
  CHECK(augment_crop_flip(im, 2, a) == augment_crop_flip(im, 2, b));
  std::mt19937_64 c(2);
  Image zero_pad = augment_crop_flip(im, 0, c);
  bool same = zero_pad == im;
  Image flipped = im;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) flipped.at(ch, y, x) = im.at(ch, y, 7 - x);
  CHECK((same || zero_pad == flipped));
}

TEST_CASE("randomized labels, shuffling and stream seeds") {
  BuiltinOptions o;
  o.samples = 100;
  Dataset d = make_builtin("shapes10", o);
  Dataset r = randomize_labels(d, 10, 9);
  std::set<int> seen(r.labels.begin(), r.labels.end());
  CHECK(seen.size() == 10);
  Dataset s1 = d, s2 = d;
  s1.shuffle(4);
  s2.shuffle(4);
  CHECK(s1.labels == s2.labels);
  CHECK(stream_seed(1, 2) == stream_seed(1, 2));
  CHECK(stream_seed(1, 2) != stream_seed(1, 3));
  CHECK(stream_seed(1, 2) != stream_seed(2, 2));
}
