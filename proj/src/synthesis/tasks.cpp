#include "robustsyn/synthesis/tasks.hpp"

#include <algorithm>
#include <string>

#include "robustsyn/data/transforms.hpp"
#include "robustsyn/robust/train.hpp"

namespace robustsyn {

namespace {

void check_batch(const Classifier& model, const std::vector<Image>& images, const char* what) {
  if (images.empty()) throw InvalidArgument(std::string(what) + ": no input images");
  const auto& s = model.spec();
  for (const auto& im : images) {
    if (im.channels != s.channels || im.height != s.height || im.width != s.width) {
      throw ShapeError(std::string(what) + ": image shape does not match the classifier input");
    }
  }
}

void check_class(const Classifier& model, int y, const char* what) {
  if (y < 0 || y >= model.spec().num_classes) {
    throw InvalidArgument(std::string(what) + ": class " + std::to_string(y) + " out of range");
  }
}

// Penalty weights (1 - m) broadcast over channels.
Tensor complement_weights(const std::vector<Image>& images, const std::vector<Image>& masks) {
  if (masks.size() != images.size()) throw InvalidArgument("one mask per image is required");
  std::vector<Image> w;
  w.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    check_mask(masks[i], images[i]);
    Image wi(images[i].channels, images[i].height, images[i].width);
    const std::size_t plane = static_cast<std::size_t>(images[i].height) * images[i].width;
    for (int c = 0; c < wi.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) wi.pixels[c * plane + p] = 1.0f - masks[i].pixels[p];
    w.push_back(std::move(wi));
  }
  return to_batch(w);
}

SynthesisResult run(const Classifier& model, const Objective& obj, const PerturbationSet& set,
                    const PgdSchedule& schedule, const std::vector<Image>& starts, std::vector<int> labels,
                    const FrameObserver& observer) {
  PgdResult r = pgd(model, obj, set, schedule, to_batch(starts), observer, ops::BatchNormMode::inference);
  SynthesisResult out;
  out.images = from_batch(r.x);
  out.starts = starts;
  out.labels = std::move(labels);
  out.trace = std::move(r.trace);
  out.steps_done = r.steps_done;
  out.cancelled = r.cancelled;
  return out;
}

SynthesisResult class_search(const Classifier& model, const std::vector<Image>& starts, std::vector<int> labels,
                             double eps, const PgdSchedule& schedule, const FrameObserver& observer) {
  Objective obj;
  obj.direction = Direction::minimize;
  obj.terms.push_back(ObjectiveTerm::class_loss(labels));
  const Tensor anchor = to_batch(starts);
  PerturbationSet set(Norm::l2, eps, anchor);
  return run(model, obj, set, schedule, starts, std::move(labels), observer);
}

}  // namespace

void check_mask(const Image& mask, const Image& image) {
  if (mask.channels != 1 || mask.height != image.height || mask.width != image.width) {
    throw ShapeError("mask must be single-channel with the image's spatial size");
  }
  for (float v : mask.pixels)
    if (v != 0.0f && v != 1.0f) throw InvalidArgument("mask entries must be 0 or 1");
}

std::vector<int> classify(const Classifier& model, const std::vector<Image>& images) {
  std::vector<int> out;
  for (std::size_t start = 0; start < images.size(); start += 128) {
    const std::size_t end = std::min(images.size(), start + 128);
    auto p = predict(model, to_batch(std::span<const Image>(images.data() + start, end - start)));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double class_rate(const Classifier& model, const std::vector<Image>& images, int y) {
  if (images.empty()) return 0.0;
  const auto p = classify(model, images);
  return static_cast<double>(std::count(p.begin(), p.end(), y)) / static_cast<double>(p.size());
}

std::vector<Image> draw_seeds(const ClassSeedModel& seeds, std::size_t n, std::uint64_t seed) {
  auto out = seeds.sample(n, seed);
  for (auto& im : out) im = clip01(std::move(im));
  return out;
}

SynthesisResult generate(const Classifier& model, const ClassSeedModel& seeds, int y, double eps,
                         const PgdSchedule& schedule, std::size_t n, std::uint64_t seed,
                         const FrameObserver& observer) {
  check_class(model, y, "generate");
  if (n == 0) throw InvalidArgument("generate: n must be >= 1");
  auto starts = draw_seeds(seeds, n, seed);
  check_batch(model, starts, "generate");
  return class_search(model, starts, std::vector<int>(n, y), eps, schedule, observer);
}

SynthesisResult sketch_to_image(const Classifier& model, const std::vector<Image>& sketches, int y, double eps,
                                const PgdSchedule& schedule, const FrameObserver& observer) {
  check_class(model, y, "sketch_to_image");
  check_batch(model, sketches, "sketch_to_image");
  std::vector<Image> starts;
  for (const auto& s : sketches) starts.push_back(clip01(s));
  return class_search(model, starts, std::vector<int>(sketches.size(), y), eps, schedule, observer);
}

SynthesisResult translate(const Classifier& domain_model, const std::vector<Image>& inputs, int target, double eps,
                          const PgdSchedule& schedule, const FrameObserver& observer) {
  check_class(domain_model, target, "translate");
  check_batch(domain_model, inputs, "translate");
  return class_search(domain_model, inputs, std::vector<int>(inputs.size(), target), eps, schedule, observer);
}

SynthesisResult superres(const Classifier& model, const std::vector<Image>& low_res, int factor,
                         std::optional<std::vector<int>> labels, double eps, const PgdSchedule& schedule,
                         const FrameObserver& observer) {
  if (factor < 1) throw InvalidArgument("superres: factor must be >= 1");
  if (low_res.empty()) throw InvalidArgument("superres: no input images");
  std::vector<Image> up;
  for (const auto& x : low_res) up.push_back(factor == 1 ? x : upsample_nn(x, factor));
  check_batch(model, up, "superres");
  std::vector<int> y = labels ? *labels : classify(model, up);
  if (y.size() != up.size()) throw InvalidArgument("superres: one label per image is required");
  for (int v : y) check_class(model, v, "superres");
  return class_search(model, up, std::move(y), eps, schedule, observer);
}

SynthesisResult inpaint(const Classifier& model, const std::vector<Image>& corrupted, const std::vector<Image>& masks,
                        std::optional<std::vector<int>> labels, double lambda, const PgdSchedule& schedule,
                        double eps_domain, const FrameObserver& observer) {
  check_batch(model, corrupted, "inpaint");
  if (!(lambda >= 0)) throw InvalidArgument("inpaint: lambda must be >= 0");
  std::vector<int> y = labels ? *labels : classify(model, corrupted);
  if (y.size() != corrupted.size()) throw InvalidArgument("inpaint: one label per image is required");
  for (int v : y) check_class(model, v, "inpaint");
  const Tensor anchor = to_batch(corrupted);
  Objective obj;
  obj.direction = Direction::minimize;
  obj.terms.push_back(ObjectiveTerm::class_loss(y));
  if (lambda > 0) obj.terms.push_back(ObjectiveTerm::masked_l2(anchor, complement_weights(corrupted, masks), lambda));
  else complement_weights(corrupted, masks);  // still validates the masks
  PerturbationSet set(Norm::l2, eps_domain, anchor);
  return run(model, obj, set, schedule, corrupted, std::move(y), observer);
}

SynthesisResult feature_paint(const Classifier& model, const std::vector<Image>& inputs,
                              const std::vector<Image>& masks, int feature, double lambda_p,
                              const PgdSchedule& schedule, double eps_domain, const FrameObserver& observer) {
  check_batch(model, inputs, "feature_paint");
  if (feature < 0 || feature >= model.spec().representation_width()) {
    throw InvalidArgument("feature_paint: feature index " + std::to_string(feature) + " out of range [0, " +
                          std::to_string(model.spec().representation_width()) + ")");
  }
  if (!(lambda_p >= 0)) throw InvalidArgument("feature_paint: lambda must be >= 0");
  const Tensor anchor = to_batch(inputs);
  Objective obj;
  obj.direction = Direction::maximize;
  obj.terms.push_back(ObjectiveTerm::feature({feature}));
  Tensor w = complement_weights(inputs, masks);
  if (lambda_p > 0) obj.terms.push_back(ObjectiveTerm::masked_l2(anchor, w, -lambda_p));
  PerturbationSet set(Norm::l2, eps_domain, anchor);
  return run(model, obj, set, schedule, inputs, std::vector<int>(inputs.size(), feature), observer);
}

}  // namespace robustsyn
