#include "robustsyn/cli/presets.hpp"

#include <map>

#include "robustsyn/common.hpp"

namespace robustsyn::cli {

namespace {

using nlohmann::json;

constexpr const char* kRef = "reference-table";
constexpr const char* kDesk = "desk-calibrated";

std::vector<Preset> build() {
  std::vector<Preset> p;
  auto train = [&](std::string name, std::string desc, double eps, int steps, double step, int epochs, double lr,
                   int batch, std::string drops) {
    p.push_back({std::move(name), "train", kRef, std::move(desc),
                 json{{"eps", eps},
                      {"attack-steps", steps},
                      {"attack-step-size", step},
                      {"epochs", epochs},
                      {"lr", lr},
                      {"batch-size", batch},
                      {"lr-drop-epochs", drops},
                      {"momentum", 0.9},
                      {"weight-decay", 5e-4}}});
  };
  train("reference-cifar10-train", "CIFAR-10 adversarial training", 0.5, 7, 0.1, 350, 0.01, 256, "150,250");
  train("reference-rimagenet-train", "restricted ImageNet adversarial training", 3.5, 7, 0.1, 110, 0.1, 128, "30,60");
  train("reference-imagenet-train", "ImageNet adversarial training", 3.0, 7, 0.5, 110, 0.1, 256, "100");
  for (const char* pair : {"horse-zebra", "apple-orange", "summer-winter"}) {
    train(std::string("reference-") + pair + "-train", std::string(pair) + " domain classifier", 5.0, 7, 0.9, 350,
          0.01, 64, "50,100");
  }
  p.push_back({"desk-train", "train", kDesk,
               "stripes-blobs desk twin: 5 epochs on 4000 samples, robust with the CIFAR-10 attack",
               json{{"dataset", "stripes-blobs"},
                    {"samples", 4000},
                    {"widths", "8,16,32"},
                    {"eps", 0.5},
                    {"attack-steps", 7},
                    {"attack-step-size", 0.1},
                    {"epochs", 5},
                    {"lr", 0.1},
                    {"batch-size", 64},
                    {"momentum", 0.9},
                    {"weight-decay", 5e-4}}});

  p.push_back({"reference-cifar10-eval", "eval-robust", kRef, "CIFAR-10 attack used for training",
               json{{"eps", "0.5"}, {"attack-steps", 7}, {"attack-step-size", 0.1}}});
  p.push_back({"desk-eval", "eval-robust", kDesk, "robust accuracy sweep on the desk datasets",
               json{{"eps", "0,0.25,0.5,1"}, {"attack-steps", 7}, {"attack-step-size", 0.1}}});

  p.push_back({"reference-rimagenet-targeted", "attack", kRef, "large targeted attack on restricted ImageNet",
               json{{"eps", 300.0}, {"steps", 500}, {"step-size", 1.0}}});
  p.push_back({"desk-attack", "attack", kDesk, "CIFAR-10 training attack",
               json{{"eps", 0.5}, {"steps", 7}, {"step-size", 0.1}}});

  p.push_back({"reference-cifar10-gen", "generate", kRef, "CIFAR-10 generation",
               json{{"eps", 30.0}, {"steps", 60}, {"step-size", 0.5}}});
  p.push_back({"reference-rimagenet-gen", "generate", kRef, "restricted ImageNet generation",
               json{{"eps", 40.0}, {"steps", 60}, {"step-size", 1.0}}});
  p.push_back({"reference-imagenet-gen", "generate", kRef, "ImageNet generation",
               json{{"eps", 40.0}, {"steps", 60}, {"step-size", 1.0}}});
  p.push_back({"reference-cifar10-seeds", "fit-seeds", kRef, "seed Gaussians fit at full resolution",
               json{{"downsample", 1}}});
  p.push_back({"reference-highres-seeds", "fit-seeds", kRef,
               "seed Gaussians for 224x224 images, fit at 1/4 resolution and upsampled by nearest neighbour",
               json{{"downsample", 4}}});

  p.push_back({"reference-rimagenet-inpaint", "inpaint", kRef,
               "restricted ImageNet inpainting; the published table lists steps and step size swapped, read as 720 "
               "steps of size 0.1",
               json{{"patch", 60}, {"eps", 21.0}, {"steps", 720}, {"step-size", 0.1}}});

  for (const char* pair : {"horse-zebra", "apple-orange", "summer-winter"}) {
    p.push_back({std::string("reference-") + pair + "-translate", "translate", kRef,
                 std::string(pair) + " translation", json{{"eps", 60.0}, {"steps", 80}, {"step-size", 0.5}}});
  }
  p.push_back({"reference-imagenet-translate", "translate", kRef, "translation with an ImageNet classifier",
               json{{"eps", 60.0}, {"steps", 80}, {"step-size", 1.0}}});

  p.push_back({"reference-cifar10-superres", "superres", kRef,
               "CIFAR-10 x7 super-resolution; steps and step size read swapped as in the inpainting table",
               json{{"factor", 7}, {"eps", 15.0}, {"steps", 50}, {"step-size", 1.0}}});
  p.push_back({"reference-rimagenet-superres", "superres", kRef, "restricted ImageNet x8 super-resolution",
               json{{"factor", 8}, {"eps", 8.0}, {"steps", 40}, {"step-size", 1.0}}});

  // Desk defaults. The acceptance harness reads these directly.
  p.push_back({"desk-seeds", "fit-seeds", kDesk, "seed Gaussians fitted at 8x8 and upsampled to 32x32",
               json{{"downsample", 4}}});
  p.push_back({"desk-gen", "generate", kDesk, "32x32 generation (CIFAR-10 schedule)",
               json{{"eps", 30.0}, {"steps", 60}, {"step-size", 0.5}}});
  p.push_back({"desk-sketch", "sketch", kDesk, "sketch-to-image with the generation schedule",
               json{{"eps", 30.0}, {"steps", 60}, {"step-size", 0.5}}});
  p.push_back({"desk-inpaint", "inpaint", kDesk, "32x32 inpainting with a 10-pixel patch",
               json{{"patch", 10}, {"eps", 1.0}, {"steps", 50}, {"step-size", 0.05}, {"lambda", 10.0}}});
  p.push_back({"desk-translate", "translate", kDesk, "two-domain stripes translation",
               json{{"eps", 60.0}, {"steps", 80}, {"step-size", 0.5}}});
  p.push_back({"desk-superres", "superres", kDesk, "32x32 x4 super-resolution",
               json{{"factor", 4}, {"eps", 0.25}, {"steps", 40}, {"step-size", 0.02}}});
  p.push_back({"desk-paint", "paint", kDesk, "feature painting on 32x32 images",
               json{{"eps", 21.0}, {"steps", 60}, {"step-size", 0.5}, {"lambda", 10.0}}});
  return p;
}

}  // namespace

const std::vector<Preset>& all_presets() {
  static const std::vector<Preset> presets = build();
  return presets;
}

const Preset& find_preset(const std::string& name, const std::string& command) {
  for (const auto& p : all_presets()) {
    if (p.name != name) continue;
    if (p.command != command) {
      throw InvalidArgument("preset '" + name + "' is for command '" + p.command + "', not '" + command + "'");
    }
    return p;
  }
  throw InvalidArgument("unknown preset '" + name + "'");
}

const Preset& default_preset(const std::string& command) {
  static const std::map<std::string, std::string> defaults = {
      {"train", "desk-train"},          {"eval-robust", "desk-eval"}, {"attack", "desk-attack"},
      {"generate", "desk-gen"},         {"fit-seeds", "desk-seeds"},  {"inpaint", "desk-inpaint"},
      {"translate", "desk-translate"},  {"superres", "desk-superres"}, {"sketch", "desk-sketch"},
      {"paint", "desk-paint"}};
  auto it = defaults.find(command);
  if (it == defaults.end()) throw InvalidArgument("command '" + command + "' has no presets");
  return find_preset(it->second, command);
}

}  // namespace robustsyn::cli
