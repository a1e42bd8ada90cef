#pragma once

#include <functional>
#include <string>
#include <vector>

#include "robustsyn/data/dataset.hpp"
#include "robustsyn/robust/pgd.hpp"

namespace robustsyn {

// Attack used to build the inner maximization: untargeted cross-entropy
// ascent from the clean input.
struct AttackConfig {
  Norm norm = Norm::l2;
  double epsilon = 0.5;
  PgdSchedule schedule{7, 0.1, GradNormalization::l2, false, 0};
};

struct TrainConfig {
  int epochs = 5;
  int batch_size = 64;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // One step decay: lr *= lr_drop_factor from epoch max(1, floor(lr_drop_at * epochs)).
  double lr_drop_at = 0.6;
  double lr_drop_factor = 0.1;
  // When non-empty, replaces lr_drop_at: the rate is multiplied by
  // lr_drop_factor at each listed epoch.
  std::vector<int> lr_drop_epochs;
  bool augment = true;  // random crop (pad 4) + horizontal flip
  int crop_pad = 4;
  std::uint64_t seed = 0;  // init-independent: shuffling, augmentation, random starts

  void validate() const;
  double lr_for_epoch(int epoch) const;
};

struct EpochMetrics {
  int epoch = 0;
  double learning_rate = 0;
  double loss = 0;        // mean training loss on the (adversarial) batches
  double clean_acc = 0;   // training-batch accuracy on clean inputs
  double robust_acc = 0;  // training-batch accuracy on attacked inputs
  double eval_clean_acc = -1;   // optional held-out metrics, -1 when absent
  double eval_robust_acc = -1;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
};

// Loss diverged; the model has been restored to the state at the end of the
// last completed epoch (or its initial state).
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, int epoch) : NumericError(what), epoch(epoch) {}
  int epoch;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Adversarial training: every minibatch is first attacked (untargeted PGD on
// the cross-entropy, batch-norm on batch statistics without touching the
// running averages), then the model takes one SGD-with-momentum step on the
// attacked batch. epsilon == 0 or zero attack steps is plain ERM training.
TrainResult adv_train(Classifier& model, const Dataset& train, const TrainConfig& config, const AttackConfig& attack,
                      const Dataset* eval = nullptr, const EpochCallback& on_epoch = {});

struct RobustnessReport {
  double clean_acc = 0;
  double robust_acc = 0;
  std::size_t count = 0;
};

// Untargeted PGD in inference mode. Samples are processed in chunks of
// `batch_size`; results do not depend on the chunking.
RobustnessReport evaluate_robustness(const Classifier& model, const Dataset& data, const AttackConfig& attack,
                                     int batch_size = 128);

// Index of the largest logit per row.
std::vector<int> predict(const Classifier& model, const Tensor& x);
double accuracy(const Classifier& model, const Dataset& data, int batch_size = 256);

}  // namespace robustsyn
