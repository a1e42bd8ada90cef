#include "robustsyn/robust/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "robustsyn/data/transforms.hpp"

namespace robustsyn {

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be > 0");
  if (momentum < 0 || momentum >= 1) throw InvalidArgument("momentum must be in [0, 1)");
  if (weight_decay < 0) throw InvalidArgument("weight decay must be >= 0");
  if (crop_pad < 0) throw InvalidArgument("crop padding must be >= 0");
  for (int e : lr_drop_epochs)
    if (e < 0) throw InvalidArgument("learning-rate drop epochs must be >= 0");
}

double TrainConfig::lr_for_epoch(int epoch) const {
  if (!lr_drop_epochs.empty()) {
    double lr = learning_rate;
    for (int e : lr_drop_epochs)
      if (epoch >= e) lr *= lr_drop_factor;
    return lr;
  }
  const int drop_epoch = std::max(1, static_cast<int>(std::floor(lr_drop_at * epochs)));
  return epoch >= drop_epoch && lr_drop_at < 1.0 ? learning_rate * lr_drop_factor : learning_rate;
}

std::vector<int> predict(const Classifier& model, const Tensor& x) {
  Tensor logits = model.logits(x);
  const auto n = logits.dim(0), k = logits.dim(1);
  auto d = logits.data();
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const real* row = d.data() + i * k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const auto n = logits.dim(0), k = logits.dim(1);
  auto d = logits.data();
  std::vector<int> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const real* row = d.data() + i * k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

Tensor untargeted_attack(const Classifier& model, const Tensor& x, const std::vector<int>& labels,
                         const AttackConfig& attack, ops::BatchNormMode mode, std::uint64_t seed) {
  if (attack.epsilon == 0 || attack.schedule.steps == 0) return x;
  Objective obj;
  obj.direction = Direction::maximize;
  obj.terms.push_back(ObjectiveTerm::class_loss(labels));
  PerturbationSet set(attack.norm, attack.epsilon, x);
  PgdSchedule sched = attack.schedule;
  sched.seed = seed;
  return pgd(model, obj, set, sched, x, {}, mode).x;
}

std::vector<std::vector<real>> snapshot(const Classifier& model) {
  std::vector<std::vector<real>> out;
  for (const auto& e : model.state()) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

void restore(Classifier& model, const std::vector<std::vector<real>>& snap) {
  auto entries = model.state();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].tensor = Tensor::from(entries[i].tensor.shape(), snap[i]);
  }
  model.load_state(entries);
}

}  // namespace

TrainResult adv_train(Classifier& model, const Dataset& train, const TrainConfig& config, const AttackConfig& attack,
                      const Dataset* eval, const EpochCallback& on_epoch) {
  config.validate();
  attack.schedule.validate();
  train.validate();
  if (train.images.front().channels != model.spec().channels || train.images.front().height != model.spec().height ||
      train.images.front().width != model.spec().width) {
    throw ShapeError("training images do not match the classifier input shape");
  }
  for (int y : train.labels) {
    if (y >= model.spec().num_classes) throw InvalidArgument("training label exceeds classifier class count");
  }

  auto params = model.parameters();
  std::vector<std::vector<real>> velocity;
  for (const auto& p : params) velocity.emplace_back(static_cast<std::size_t>(p.tensor.numel()), real(0));
  auto last_good = snapshot(model);

  TrainResult result;
  const std::size_t n = train.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_for_epoch(epoch);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(stream_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng() % i)]);

    EpochMetrics m;
    m.epoch = epoch;
    m.learning_rate = lr;
    double loss_sum = 0;
    std::size_t clean_correct = 0, robust_correct = 0, batches = 0;
    try {
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
        std::vector<Image> images;
        std::vector<int> labels;
        for (std::size_t j = start; j < end; ++j) {
          const std::size_t idx = order[j];
          if (config.augment) {
            std::mt19937_64 aug(stream_seed(config.seed ^ 0xA5A5A5A5ULL, static_cast<std::uint64_t>(epoch) * n + j));
            images.push_back(augment_crop_flip(train.images[idx], config.crop_pad, aug));
          } else {
            images.push_back(train.images[idx]);
          }
          labels.push_back(train.labels[idx]);
        }
        Tensor x = to_batch(images);

        model.set_trainable(false);
        {
          auto pred = argmax_rows(model.forward(x, ops::BatchNormMode::batch).logits);
          for (std::size_t j = 0; j < labels.size(); ++j) clean_correct += pred[j] == labels[j];
        }
        Tensor x_adv = untargeted_attack(model, x, labels, attack, ops::BatchNormMode::batch,
                                         stream_seed(config.seed ^ 0x5A5A5A5AULL, batches + static_cast<std::uint64_t>(epoch) * n));

        model.set_trainable(true);
        for (auto& p : params) p.tensor.zero_grad();
        auto out = model.forward_train(x_adv);
        Tensor loss = ops::softmax_cross_entropy(out.logits, labels, ops::Reduction::mean);
        loss.backward();
        model.set_trainable(false);
        loss_sum += loss.item();
        auto pred = argmax_rows(out.logits);
        for (std::size_t j = 0; j < labels.size(); ++j) robust_correct += pred[j] == labels[j];

        const real mu = static_cast<real>(config.momentum), wd = static_cast<real>(config.weight_decay),
                   step = static_cast<real>(lr);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
          auto w = params[pi].tensor.mutable_data();
          auto g = params[pi].tensor.grad();
          auto& v = velocity[pi];
          for (std::size_t i = 0; i < w.size(); ++i) {
            const real gi = (g.empty() ? real(0) : g[i]) + wd * w[i];
            v[i] = mu * v[i] + gi;
            w[i] -= step * v[i];
          }
          check_finite(w, "parameter update");
          params[pi].tensor.zero_grad();
        }
        ++batches;
      }
    } catch (const NumericError& e) {
      model.set_trainable(false);
      restore(model, last_good);
      throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": " + e.what() +
                                 "; model restored to the last completed epoch",
                             epoch);
    }
    m.loss = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
    m.clean_acc = static_cast<double>(clean_correct) / static_cast<double>(n);
    m.robust_acc = static_cast<double>(robust_correct) / static_cast<double>(n);
    if (eval && !eval->empty()) {
      auto report = evaluate_robustness(model, *eval, attack);
      m.eval_clean_acc = report.clean_acc;
      m.eval_robust_acc = report.robust_acc;
    }
    last_good = snapshot(model);
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  model.set_trainable(false);
  return result;
}

RobustnessReport evaluate_robustness(const Classifier& model, const Dataset& data, const AttackConfig& attack,
                                     int batch_size) {
  if (data.empty()) throw InvalidArgument("evaluate_robustness: empty dataset");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  RobustnessReport r;
  std::size_t clean = 0, robust = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(start),
                            data.labels.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor x = to_batch(std::span<const Image>(data.images.data() + start, end - start));
    auto p0 = predict(model, x);
    Tensor xa = untargeted_attack(model, x, labels, attack, ops::BatchNormMode::inference, attack.schedule.seed + start);
    auto p1 = predict(model, xa);
    for (std::size_t j = 0; j < labels.size(); ++j) {
      clean += p0[j] == labels[j];
      robust += p1[j] == labels[j];
    }
  }
  r.count = data.size();
  r.clean_acc = static_cast<double>(clean) / static_cast<double>(data.size());
  r.robust_acc = static_cast<double>(robust) / static_cast<double>(data.size());
  return r;
}

double accuracy(const Classifier& model, const Dataset& data, int batch_size) {
  if (data.empty()) throw InvalidArgument("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    auto p = predict(model, to_batch(std::span<const Image>(data.images.data() + start, end - start)));
    for (std::size_t j = 0; j < p.size(); ++j) correct += p[j] == data.labels[start + j];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace robustsyn
