#include "robustsyn/models/classifier.hpp"

#include <cmath>
#include <random>

namespace robustsyn {

void ClassifierSpec::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) throw InvalidArgument("classifier spec: input dims must be positive");
  if (num_classes <= 0) throw InvalidArgument("classifier spec: class count must be positive");
  if (stage_widths.empty() || stage_widths.size() != stage_depths.size()) {
    throw InvalidArgument("classifier spec: stage widths/depths must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < stage_widths.size(); ++i) {
    if (stage_widths[i] <= 0 || stage_depths[i] <= 0) throw InvalidArgument("classifier spec: non-positive stage dims");
  }
  const int downsample = 1 << (stage_widths.size() - 1);
  if (height < downsample || width < downsample) {
    throw InvalidArgument("classifier spec: input too small for " + std::to_string(stage_widths.size()) + " stages");
  }
}

namespace {

Tensor kaiming(std::mt19937_64& rng, Shape shape) {
  const std::int64_t fan_in = shape[1] * shape[2] * shape[3];
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<real> w(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : w) v = static_cast<real>(dist(rng));
  return Tensor::from(std::move(shape), std::move(w));
}

}  // namespace

Classifier Classifier::build(const ClassifierSpec& spec, std::uint64_t seed) {
  spec.validate();
  Classifier m;
  m.spec_ = spec;
  std::mt19937_64 rng(seed);
  auto make_norm = [](int c) {
    Norm n;
    n.gamma = Tensor::full({c}, 1);
    n.beta = Tensor::zeros({c});
    n.stats.running_mean.assign(static_cast<std::size_t>(c), 0);
    n.stats.running_var.assign(static_cast<std::size_t>(c), 1);
    return n;
  };
  const int stem_width = spec.stage_widths.front();
  m.stem_ = {kaiming(rng, {stem_width, spec.channels, 3, 3}), 1, 1};
  m.stem_bn_ = make_norm(stem_width);
  int in = stem_width;
  for (std::size_t s = 0; s < spec.stage_widths.size(); ++s) {
    const int out = spec.stage_widths[s];
    for (int b = 0; b < spec.stage_depths[s]; ++b) {
      Block blk;
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      blk.conv1 = {kaiming(rng, {out, in, 3, 3}), stride, 1};
      blk.bn1 = make_norm(out);
      blk.conv2 = {kaiming(rng, {out, out, 3, 3}), 1, 1};
      blk.bn2 = make_norm(out);
      if (stride != 1 || in != out) {
        blk.projection = true;
        blk.shortcut = {kaiming(rng, {out, in, 1, 1}), stride, 0};
        blk.shortcut_bn = make_norm(out);
      }
      m.blocks_.push_back(std::move(blk));
      in = out;
    }
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> head_dist(-bound, bound);
  std::vector<real> hw(static_cast<std::size_t>(spec.num_classes * in));
  for (auto& v : hw) v = static_cast<real>(head_dist(rng));
  m.head_weight_ = Tensor::from({spec.num_classes, in}, std::move(hw));
  m.head_bias_ = Tensor::zeros({spec.num_classes});
  return m;
}

template <typename ParamFn, typename NormFn>
void Classifier::visit(ParamFn&& on_param, NormFn&& on_norm) const {
  on_param("stem.conv.weight", stem_.weight);
  on_norm("stem.bn", stem_bn_);
  std::size_t idx = 0;
  for (std::size_t s = 0; s < spec_.stage_widths.size(); ++s) {
    for (int b = 0; b < spec_.stage_depths[s]; ++b, ++idx) {
      const Block& blk = blocks_[idx];
      const std::string p = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
      on_param(p + "conv1.weight", blk.conv1.weight);
      on_norm(p + "bn1", blk.bn1);
      on_param(p + "conv2.weight", blk.conv2.weight);
      on_norm(p + "bn2", blk.bn2);
      if (blk.projection) {
        on_param(p + "shortcut.weight", blk.shortcut.weight);
        on_norm(p + "shortcut_bn", blk.shortcut_bn);
      }
    }
  }
  on_param("head.weight", head_weight_);
  on_param("head.bias", head_bias_);
}

std::vector<NamedTensor> Classifier::parameters() const {
  std::vector<NamedTensor> out;
  visit([&](const std::string& name, const Tensor& t) { out.push_back({name, t}); },
        [&](const std::string& name, const Norm& n) {
          out.push_back({name + ".gamma", n.gamma});
          out.push_back({name + ".beta", n.beta});
        });
  return out;
}

std::vector<NamedTensor> Classifier::state() const {
  auto out = parameters();
  visit([](const std::string&, const Tensor&) {},
        [&](const std::string& name, const Norm& n) {
          const auto c = static_cast<std::int64_t>(n.stats.running_mean.size());
          out.push_back({name + ".running_mean", Tensor::from({c}, n.stats.running_mean)});
          out.push_back({name + ".running_var", Tensor::from({c}, n.stats.running_var)});
        });
  return out;
}

void Classifier::load_state(const std::vector<NamedTensor>& entries) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e.tensor;
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("state entry missing: " + name);
    if (it->second->shape() != shape) {
      throw ShapeError("state entry " + name + " has shape " + shape_str(it->second->shape()) + ", expected " +
                       shape_str(shape));
    }
    return *it->second;
  };
  auto copy_into = [](Tensor dst, const Tensor& src) {
    auto d = dst.mutable_data();
    auto s = src.data();
    std::copy(s.begin(), s.end(), d.begin());
  };
  std::size_t used = 0;
  visit(
      [&](const std::string& name, const Tensor& t) {
        copy_into(t, fetch(name, t.shape()));
        ++used;
      },
      [&](const std::string& name, const Norm& n) {
        copy_into(n.gamma, fetch(name + ".gamma", n.gamma.shape()));
        copy_into(n.beta, fetch(name + ".beta", n.beta.shape()));
        const Shape cs{static_cast<std::int64_t>(n.stats.running_mean.size())};
        auto& stats = const_cast<ops::BatchNormStats&>(n.stats);
        auto rm = fetch(name + ".running_mean", cs).data();
        auto rv = fetch(name + ".running_var", cs).data();
        stats.running_mean.assign(rm.begin(), rm.end());
        stats.running_var.assign(rv.begin(), rv.end());
        used += 4;
      });
  if (used != entries.size()) throw FormatError("state has unexpected extra entries");
}

Classifier Classifier::clone() const {
  Classifier copy = build(spec_, 0);
  copy.load_state(state());
  copy.metadata_ = metadata_;
  return copy;
}

void Classifier::set_trainable(bool trainable) {
  for (auto& p : parameters()) p.tensor.set_requires_grad(trainable);
}

std::int64_t Classifier::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

Classifier::Output Classifier::run(const Tensor& x, ops::BatchNormMode mode, Classifier* writer) const {
  if (x.rank() != 4 || x.dim(1) != spec_.channels || x.dim(2) != spec_.height || x.dim(3) != spec_.width) {
    throw ShapeError("classifier expects [N," + std::to_string(spec_.channels) + "," + std::to_string(spec_.height) +
                     "," + std::to_string(spec_.width) + "], got " + shape_str(x.shape()));
  }
  auto norm = [&](const Tensor& h, const Norm& n) {
    auto* target = writer ? const_cast<ops::BatchNormStats*>(&n.stats) : nullptr;
    return ops::batch_norm(h, n.gamma, n.beta, n.stats, mode, target);
  };
  const Tensor none;
  Tensor h = ops::relu(norm(ops::conv2d(x, stem_.weight, none, stem_.stride, stem_.pad), stem_bn_));
  for (const Block& blk : blocks_) {
    Tensor r = ops::relu(norm(ops::conv2d(h, blk.conv1.weight, none, blk.conv1.stride, blk.conv1.pad), blk.bn1));
    r = norm(ops::conv2d(r, blk.conv2.weight, none, blk.conv2.stride, blk.conv2.pad), blk.bn2);
    Tensor skip = blk.projection
                      ? norm(ops::conv2d(h, blk.shortcut.weight, none, blk.shortcut.stride, blk.shortcut.pad),
                             blk.shortcut_bn)
                      : h;
    h = ops::relu(ops::add(r, skip));
  }
  Output out;
  out.representation = ops::global_avg_pool(h);
  out.logits = head(out.representation);
  return out;
}

Classifier::Output Classifier::forward(const Tensor& x, ops::BatchNormMode mode) const {
  if (mode == ops::BatchNormMode::train) throw GraphError("forward(): use forward_train to update running statistics");
  return run(x, mode, nullptr);
}

Classifier::Output Classifier::forward_train(const Tensor& x) { return run(x, ops::BatchNormMode::train, this); }

Tensor Classifier::head(const Tensor& representation) const {
  return ops::linear(representation, head_weight_, head_bias_);
}

}  // namespace robustsyn
