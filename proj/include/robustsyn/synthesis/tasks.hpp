#pragma once

#include <optional>
#include <vector>

#include "robustsyn/data/image.hpp"
#include "robustsyn/robust/pgd.hpp"
#include "robustsyn/synthesis/seed_model.hpp"

namespace robustsyn {

// Each task is an Objective plus a PerturbationSet handed to pgd(), always with
// batch-norm in inference mode. Tasks take a batch of images and process them
// in one PGD run; per-sample results do not depend on the batch composition.
//
// Masks are single-channel images with entries in {0, 1}; 1 marks the region
// being edited or corrupted. The penalty acts on the complement.

struct SynthesisResult {
  std::vector<Image> images;
  std::vector<Image> starts;   // seeds, anchors or upsampled inputs
  std::vector<int> labels;     // target class per sample (feature index for painting)
  std::vector<double> trace;   // objective value per iterate, summed over the batch
  int steps_done = 0;
  bool cancelled = false;
};

// Observer for streaming intermediate frames; see PgdObserver.
using FrameObserver = PgdObserver;

// Clipped seed draws, one RNG stream per sample.
std::vector<Image> draw_seeds(const ClassSeedModel& seeds, std::size_t n, std::uint64_t seed);

// Minimizes the class loss of y within an L2 ball of radius eps around each
// clipped seed.
SynthesisResult generate(const Classifier& model, const ClassSeedModel& seeds, int y, double eps,
                         const PgdSchedule& schedule, std::size_t n, std::uint64_t seed,
                         const FrameObserver& observer = {});

// Same contract as generate with the given sketches as seeds.
SynthesisResult sketch_to_image(const Classifier& model, const std::vector<Image>& sketches, int y, double eps,
                                const PgdSchedule& schedule, const FrameObserver& observer = {});

// Minimizes L(x', y) + lambda * ||(x - x') * (1 - m)||_2 from start x inside an
// L2 ball of radius eps_domain. Labels default to the model's argmax on x.
SynthesisResult inpaint(const Classifier& model, const std::vector<Image>& corrupted, const std::vector<Image>& masks,
                        std::optional<std::vector<int>> labels, double lambda, const PgdSchedule& schedule,
                        double eps_domain, const FrameObserver& observer = {});

// Minimizes the class loss of the target domain within eps of x.
SynthesisResult translate(const Classifier& domain_model, const std::vector<Image>& inputs, int target, double eps,
                          const PgdSchedule& schedule, const FrameObserver& observer = {});

// Minimizes the class loss within eps of the nearest-neighbour upsampled
// input. Labels default to the model's argmax on the upsampled input.
SynthesisResult superres(const Classifier& model, const std::vector<Image>& low_res, int factor,
                         std::optional<std::vector<int>> labels, double eps, const PgdSchedule& schedule,
                         const FrameObserver& observer = {});

// Maximizes R(x')_f - lambda_p * ||(x - x') * (1 - m)||_2 within eps_domain.
SynthesisResult feature_paint(const Classifier& model, const std::vector<Image>& inputs,
                              const std::vector<Image>& masks, int feature, double lambda_p,
                              const PgdSchedule& schedule, double eps_domain, const FrameObserver& observer = {});

// Fraction of images the model assigns to class y.
double class_rate(const Classifier& model, const std::vector<Image>& images, int y);
std::vector<int> classify(const Classifier& model, const std::vector<Image>& images);

// Checks a mask is single-channel, binary and matches the image's spatial size.
void check_mask(const Image& mask, const Image& image);

}  // namespace robustsyn
