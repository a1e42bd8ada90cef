#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "robustsyn/tensor/ops.hpp"
#include "robustsyn/tensor/tensor.hpp"

namespace robustsyn {

// Residual classifier layout: a 3x3 stem followed by one residual stage per
// entry of stage_widths. Every stage after the first halves the resolution.
// The representation is the global-average-pooled output of the last stage,
// so its width is stage_widths.back(); logits are a linear head on top.
struct ClassifierSpec {
  std::string arch = "micro-resnet-9";
  int channels = 3;
  int height = 32;
  int width = 32;
  int num_classes = 10;
  std::vector<int> stage_widths{32, 64, 128};
  std::vector<int> stage_depths{1, 1, 1};

  int representation_width() const { return stage_widths.empty() ? 0 : stage_widths.back(); }
  void validate() const;
  bool operator==(const ClassifierSpec&) const = default;
};

// Recorded in checkpoints so a model carries the regime it was trained under.
struct TrainingMetadata {
  std::string norm = "none";
  double epsilon = 0;
  int attack_steps = 0;
  double attack_step_size = 0;
  int epochs = 0;
  std::map<std::string, std::string> extra;

  bool operator==(const TrainingMetadata&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Classifier {
 public:
  struct Output {
    Tensor representation;  // [N, d_R]
    Tensor logits;          // [N, K]
  };

  static Classifier build(const ClassifierSpec& spec, std::uint64_t seed);

  Classifier(Classifier&&) = default;
  Classifier& operator=(Classifier&&) = default;
  Classifier(const Classifier&) = delete;
  Classifier& operator=(const Classifier&) = delete;
  Classifier clone() const;

  const ClassifierSpec& spec() const { return spec_; }
  TrainingMetadata& metadata() { return metadata_; }
  const TrainingMetadata& metadata() const { return metadata_; }

  // x is [N, C, H, W] matching the spec. `mode` must not be train here:
  // running statistics are only written through forward_train.
  Output forward(const Tensor& x, ops::BatchNormMode mode = ops::BatchNormMode::inference) const;
  Output forward_train(const Tensor& x);
  Tensor logits(const Tensor& x) const { return forward(x).logits; }
  Tensor representation(const Tensor& x) const { return forward(x).representation; }
  // Linear head applied to a representation batch.
  Tensor head(const Tensor& representation) const;

  // Learnable parameters in a fixed order.
  std::vector<NamedTensor> parameters() const;
  // Parameters followed by batch-norm running statistics (as tensors copied
  // out of / written back into the model).
  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& entries);

  void set_trainable(bool trainable);
  std::int64_t parameter_count() const;

 private:
  struct Conv {
    Tensor weight;
    int stride = 1;
    int pad = 1;
  };
  struct Norm {
    Tensor gamma, beta;
    ops::BatchNormStats stats;
  };
  struct Block {
    Conv conv1, conv2;
    Norm bn1, bn2;
    bool projection = false;
    Conv shortcut;
    Norm shortcut_bn;
  };

  Classifier() = default;
  // `writer` is this object when running statistics should be updated.
  Output run(const Tensor& x, ops::BatchNormMode mode, Classifier* writer) const;
  template <typename ParamFn, typename NormFn>
  void visit(ParamFn&& on_param, NormFn&& on_norm) const;

  ClassifierSpec spec_;
  TrainingMetadata metadata_;
  Conv stem_;
  Norm stem_bn_;
  std::vector<Block> blocks_;
  Tensor head_weight_, head_bias_;
};

}  // namespace robustsyn
