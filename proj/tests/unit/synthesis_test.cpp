#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "robustsyn/data/transforms.hpp"
#include "robustsyn/synthesis/metrics.hpp"
#include "robustsyn/synthesis/tasks.hpp"

using namespace robustsyn;

namespace {

constexpr int kSide = 4;  // 1 x 4 x 4 images: 16 dimensions

// Known covariance: Sigma_ij = s^2 * rho^|i-j|.
std::vector<double> ar_covariance(int d, double s, double rho) {
  std::vector<double> c(static_cast<std::size_t>(d * d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(i * d + j)] = s * s * std::pow(rho, std::abs(i - j));
  return c;
}

// Samples N(mu, Sigma) through an independent Cholesky factor.
Dataset gaussian_dataset(std::size_t n, int label, double mu, const std::vector<double>& cov, std::uint64_t seed) {
  const int d = kSide * kSide;
  std::vector<double> L(static_cast<std::size_t>(d * d), 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) {
      double s = cov[static_cast<std::size_t>(i * d + j)];
      for (int k = 0; k < j; ++k) s -= L[static_cast<std::size_t>(i * d + k)] * L[static_cast<std::size_t>(j * d + k)];
      L[static_cast<std::size_t>(i * d + j)] = i == j ? std::sqrt(s) : s / L[static_cast<std::size_t>(j * d + j)];
    }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0, 1);
  Dataset ds;
  ds.class_names = {"a", "b"};
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> e(static_cast<std::size_t>(d));
    for (auto& v : e) v = z(rng);
    Image im(1, kSide, kSide);
    for (int i = 0; i < d; ++i) {
      double v = mu;
      for (int k = 0; k <= i; ++k) v += L[static_cast<std::size_t>(i * d + k)] * e[static_cast<std::size_t>(k)];
      im.pixels[static_cast<std::size_t>(i)] = static_cast<float>(v);
    }
    ds.images.push_back(std::move(im));
    ds.labels.push_back(label);
  }
  return ds;
}

struct Moments {
  std::vector<double> mean, cov;
};

Moments moments(const std::vector<std::vector<double>>& rows) {
  const std::size_t d = rows[0].size(), n = rows.size();
  Moments m{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += r[i] / static_cast<double>(n);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m.cov[i * d + j] += (r[i] - m.mean[i]) * (r[j] - m.mean[j]) / static_cast<double>(n - 1);
  return m;
}

ClassifierSpec tiny_spec() {
  ClassifierSpec s;
  s.height = s.width = 16;
  s.num_classes = 2;
  s.stage_widths = {6, 8};
  s.stage_depths = {1, 1};
  return s;
}

std::vector<Image> random_images(std::size_t n, std::uint64_t seed, int side = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.1f, 0.9f);
  std::vector<Image> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image im(3, side, side);
    for (auto& v : im.pixels) v = u(rng);
    out.push_back(std::move(im));
  }
  return out;
}

double l2(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a.pixels[i]) - b.pixels[i]) * (double(a.pixels[i]) - b.pixels[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("fitted seed model matches the empirical moments plus shrinkage") {
  const auto truth = ar_covariance(16, 0.1, 0.6);
  Dataset ds = gaussian_dataset(3000, 1, 0.5, truth, 11);
  ClassSeedModel m = fit_seed_model(ds, 1);
  std::vector<std::vector<double>> rows;
  for (const auto& im : ds.images) rows.emplace_back(im.pixels.begin(), im.pixels.end());
  Moments emp = moments(rows);
  double trace = 0;
  for (int i = 0; i < 16; ++i) trace += emp.cov[static_cast<std::size_t>(i * 17)];
  CHECK(m.shrinkage == doctest::Approx(1e-3 * trace / 16).epsilon(1e-9));
  auto cov = m.covariance();
  for (int i = 0; i < 16; ++i) {
    CHECK(m.mean[static_cast<std::size_t>(i)] == doctest::Approx(emp.mean[static_cast<std::size_t>(i)]).epsilon(1e-9));
    for (int j = 0; j < 16; ++j) {
      const double expected = emp.cov[static_cast<std::size_t>(i * 16 + j)] + (i == j ? m.shrinkage : 0.0);
      CHECK(cov[static_cast<std::size_t>(i * 16 + j)] == doctest::Approx(expected).epsilon(1e-6).scale(1e-3));
    }
  }
  for (std::size_t i = 1; i < m.eigenvalues.size(); ++i) CHECK(m.eigenvalues[i] >= m.eigenvalues[i - 1]);
}

TEST_CASE("10k seed draws reproduce the model mean and covariance") {
  const auto truth = ar_covariance(16, 0.1, 0.6);
  ClassSeedModel m = fit_seed_model(gaussian_dataset(2000, 0, 0.4, truth, 5), 0);
  std::mt19937_64 rng(17);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 10000; ++i) rows.push_back(m.draw(rng));
  Moments emp = moments(rows);
  auto cov = m.covariance();
  const double var = 0.01;
  for (int i = 0; i < 16; ++i) {
    // 5 standard errors of the mean.
    CHECK(std::abs(emp.mean[static_cast<std::size_t>(i)] - m.mean[static_cast<std::size_t>(i)]) < 5 * std::sqrt(var / 1e4));
    for (int j = 0; j < 16; ++j) {
      // Standard error of a covariance entry is at most sqrt(2/n) * var.
      CHECK(std::abs(emp.cov[static_cast<std::size_t>(i * 16 + j)] - cov[static_cast<std::size_t>(i * 16 + j)]) <
            5 * std::sqrt(2.0 / 1e4) * var);
    }
  }
}

TEST_CASE("degenerate data is rank deficient yet sampleable; bad inputs throw") {
  Dataset flat;
  flat.class_names = {"a"};
  for (int i = 0; i < 5; ++i) {
    flat.images.push_back(Image(1, kSide, kSide, 0.3f + 0.01f * i));
    flat.labels.push_back(0);
  }
  ClassSeedModel m = fit_seed_model(flat, 0);
  int positive = 0;
  for (double e : m.eigenvalues) positive += e > 1e-12;
  CHECK(positive == 1);
  CHECK(m.shrinkage >= 1e-8);
  std::mt19937_64 rng(1);
  CHECK(m.sample(rng).same_shape(flat.images[0]));
  Dataset one = flat.take(0, 1);
  CHECK_THROWS_AS(fit_seed_model(one, 0), InvalidArgument);
  CHECK_THROWS_AS(fit_seed_model(flat, 3), InvalidArgument);
  CHECK_THROWS_AS(fit_seed_model(flat, 0, -1, 3), InvalidArgument);
}

TEST_CASE("downsampled seed models draw at low resolution and upsample") {
  BuiltinOptions o;
  o.samples = 60;
  o.size = 16;
  Dataset d = make_builtin("stripes-blobs", o);
  ClassSeedModel m = fit_seed_model(d, 0, -1, 4);
  CHECK(m.dim() == 3u * 4 * 4);
  std::mt19937_64 rng(3);
  Image s = m.sample(rng);
  CHECK(s.height == 16);
  CHECK(s.at(1, 5, 6) == s.at(1, 4, 7));
  auto a = m.sample(3, 9), b = m.sample(5, 9);
  CHECK(a[2] == b[2]);
}

TEST_CASE("seed model files round trip byte-exactly and reject corruption") {
  BuiltinOptions o;
  o.samples = 40;
  o.size = 8;
  SeedModelSet set = fit_seed_models(make_builtin("hv-stripes", o));
  REQUIRE(set.models.size() == 2);
  const std::string bytes = serialize_seed_models(set);
  SeedModelSet back = deserialize_seed_models(bytes);
  CHECK(serialize_seed_models(back) == bytes);
  CHECK(back.for_class(1).mean == set.for_class(1).mean);
  CHECK_THROWS_AS(back.for_class(2), InvalidArgument);
  CHECK_THROWS_AS(deserialize_seed_models(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(deserialize_seed_models(bytes + "x"), FormatError);
  CHECK_THROWS_AS(deserialize_seed_models("RSSEEDS0"), FormatError);
}

TEST_CASE("inception-style score examples") {
  std::vector<std::vector<double>> uniform(7, std::vector<double>(4, 0.25));
  CHECK(std::abs(inception_style_score(uniform) - 1.0) <= 1e-9);
  std::vector<std::vector<double>> onehot;
  for (int r = 0; r < 20; ++r) {
    std::vector<double> row(5, 0.0);
    row[static_cast<std::size_t>(r % 5)] = 1.0;
    onehot.push_back(row);
  }
  CHECK(std::abs(inception_style_score(onehot) - 5.0) <= 1e-9);
  // Same one-hot class for every row: no diversity.
  std::vector<std::vector<double>> collapsed(6, {0.0, 1.0, 0.0});
  CHECK(std::abs(inception_style_score(collapsed) - 1.0) <= 1e-9);
  // Two rows, hand computed: p_bar = (0.5, 0.5); KL = ln 2 - H(row).
  std::vector<std::vector<double>> two{{0.9, 0.1}, {0.1, 0.9}};
  const double h = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  CHECK(inception_style_score(two) == doctest::Approx(std::exp(std::log(2.0) - h)).epsilon(1e-12));
  CHECK_THROWS_AS(inception_style_score({{0.5, 0.6}}), InvalidArgument);
  CHECK_THROWS_AS(inception_style_score({{0.5, 0.5}, {1.0}}), InvalidArgument);
  CHECK_THROWS_AS(inception_style_score({}), InvalidArgument);
}

TEST_CASE("psnr examples") {
  std::vector<float> zeros(8, 0.0f), ones(8, 1.0f), halves(8, 0.5f);
  CHECK(std::abs(psnr(zeros, ones).db) <= 1e-12);
  CHECK(psnr(zeros, halves).db == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-12));
  CHECK(std::abs(psnr(zeros, halves).db - 6.0206) < 1e-4);
  CHECK(psnr(zeros, halves, 2.0).db == doctest::Approx(10 * std::log10(4.0 / 0.25)));
  Psnr same = psnr(halves, halves);
  CHECK(same.infinite);
  CHECK(same.db == std::numeric_limits<double>::max());
  CHECK_THROWS_AS(psnr(zeros, std::vector<float>(7, 0.0f)), ShapeError);
  CHECK_THROWS_AS(psnr(Image(1, 2, 2), Image(3, 2, 2)), ShapeError);
}

TEST_CASE("generation stays in the seed ball; eps = 0 returns the clipped seeds") {
  Classifier model = Classifier::build(tiny_spec(), 4);
  BuiltinOptions o;
  o.samples = 40;
  o.size = 16;
  SeedModelSet seeds = fit_seed_models(make_builtin("stripes-blobs", o));
  PgdSchedule s;
  s.steps = 10;
  s.step_size = 0.2;
  auto r = generate(model, seeds.for_class(1), 1, 1.0, s, 6, 3);
  REQUIRE(r.images.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(l2(r.images[i], r.starts[i]) <= 1.0 * (1 + 1e-5));
    for (float v : r.starts[i].pixels) CHECK((v >= 0 && v <= 1));
  }
  CHECK(r.trace.back() < r.trace.front());
  auto z = generate(model, seeds.for_class(1), 1, 0.0, s, 6, 3);
  CHECK(z.images == draw_seeds(seeds.for_class(1), 6, 3));
  // Per-sample results do not depend on the batch size.
  auto small = generate(model, seeds.for_class(1), 1, 1.0, s, 2, 3);
  CHECK(small.images[1] == r.images[1]);
  CHECK_THROWS_AS(generate(model, seeds.for_class(1), 2, 1.0, s, 2, 3), InvalidArgument);
}

TEST_CASE("inpainting drift shrinks as lambda grows and vanishes at 1e6") {
  Classifier model = Classifier::build(tiny_spec(), 6);
  auto originals = random_images(3, 8);
  std::vector<Image> corrupted, masks;
  std::mt19937_64 rng(2);
  for (const auto& im : originals) {
    auto c = corrupt_patch(im, 6, rng);
    corrupted.push_back(c.corrupted);
    masks.push_back(c.mask);
  }
  PgdSchedule s;
  s.steps = 30;
  s.step_size = 0.1;
  auto drift = [&](double lambda) {
    auto r = inpaint(model, corrupted, masks, std::vector<int>{0, 1, 0}, lambda, s, 21.0);
    double d = 0;
    for (std::size_t i = 0; i < r.images.size(); ++i)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
          for (int x = 0; x < 16; ++x)
            if (masks[i].at(0, y, x) == 0) d = std::max(d, std::abs(double(r.images[i].at(c, y, x)) - corrupted[i].at(c, y, x)));
    return d;
  };
  const double d0 = drift(0), d1 = drift(1), d10 = drift(10), dbig = drift(1e6);
  CHECK(d0 > 0);
  CHECK(d1 <= d0);
  CHECK(d10 <= d1);
  CHECK(dbig < 1e-3);
  Image bad_mask(1, 16, 16, 0.5f);
  CHECK_THROWS_AS(inpaint(model, {corrupted[0]}, {bad_mask}, std::nullopt, 1, s, 21), InvalidArgument);
  CHECK_THROWS_AS(inpaint(model, {corrupted[0]}, {Image(1, 8, 8)}, std::nullopt, 1, s, 21), ShapeError);
}

TEST_CASE("super-resolution stays within eps of the upsampled input") {
  Classifier model = Classifier::build(tiny_spec(), 7);
  auto lows = random_images(4, 3, 4);
  PgdSchedule s;
  s.steps = 8;
  s.step_size = 0.2;
  auto r = superres(model, lows, 4, std::nullopt, 0.5, s);
  for (std::size_t i = 0; i < lows.size(); ++i) {
    CHECK(r.starts[i] == upsample_nn(lows[i], 4));
    CHECK(l2(r.images[i], r.starts[i]) <= 0.5 * (1 + 1e-5));
  }
  CHECK_THROWS_AS(superres(model, lows, 2, std::nullopt, 0.5, s), ShapeError);
}

TEST_CASE("feature painting raises the feature and leaves the unmasked region alone") {
  Classifier model = Classifier::build(tiny_spec(), 8);
  auto inputs = random_images(2, 4);
  std::vector<Image> masks(2, rect_mask(16, 16, 4, 4, 8, 8));
  PgdSchedule s;
  s.steps = 20;
  s.step_size = 0.3;
  auto r = feature_paint(model, inputs, masks, 3, 1e6, s, 21.0);
  CHECK(r.trace.back() > r.trace.front());
  for (std::size_t i = 0; i < 2; ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          if (masks[i].at(0, y, x) == 0) CHECK(std::abs(r.images[i].at(c, y, x) - inputs[i].at(c, y, x)) < 1e-3);
  CHECK_THROWS_AS(feature_paint(model, inputs, masks, 8, 1, s, 21), InvalidArgument);
}

TEST_CASE("translation and sketches respect eps and class range") {
  Classifier model = Classifier::build(tiny_spec(), 9);
  auto inputs = random_images(3, 5);
  PgdSchedule s;
  s.steps = 5;
  s.step_size = 0.1;
  auto t = translate(model, inputs, 1, 0.3, s);
  for (std::size_t i = 0; i < 3; ++i) CHECK(l2(t.images[i], inputs[i]) <= 0.3 * (1 + 1e-5));
  auto k = sketch_to_image(model, inputs, 0, 0.3, s);
  CHECK(k.labels == std::vector<int>{0, 0, 0});
  CHECK_THROWS_AS(translate(model, inputs, -1, 0.3, s), InvalidArgument);
  CHECK(class_rate(model, inputs, 0) + class_rate(model, inputs, 1) == doctest::Approx(1.0));
}
