#pragma once

#include <span>
#include <vector>

#include "robustsyn/tensor/tensor.hpp"

// Differentiable operations. Images are NCHW. There is no implicit
// broadcasting apart from scalar * tensor and the per-channel bias inside
// conv2d/linear/batch_norm; every other shape mismatch throws ShapeError.
namespace robustsyn::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
Tensor sum(const Tensor& a);
Tensor relu(const Tensor& x);

// x [N,C,H,W], w [O,C,KH,KW], bias [O] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// x [N,F], w [O,F], bias [O] or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor max_pool2d(const Tensor& x, int kernel, int stride);
Tensor avg_pool2d(const Tensor& x, int kernel, int stride);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);
Tensor upsample_nearest(const Tensor& x, int factor);
// [N, ...] -> [N, prod(...)]
Tensor flatten(const Tensor& x);

enum class BatchNormMode {
  inference,  // running statistics, frozen
  batch,      // batch statistics, running statistics untouched
  train,      // batch statistics, running statistics updated
};

struct BatchNormStats {
  std::vector<real> running_mean;
  std::vector<real> running_var;
};

// In train mode the updated running statistics are written to *update (which
// may alias `running`); other modes never write.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormStats& running,
                  BatchNormMode mode, BatchNormStats* update = nullptr, real momentum = real(0.1),
                  real eps = real(1e-5));

enum class Reduction { mean, sum };

// logits [N,K]; labels in [0,K). Natural-log softmax cross-entropy.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             Reduction reduction = Reduction::mean);

// sqrt(sum x^2) over the whole tensor; gradient at 0 is taken as 0.
Tensor l2_norm(const Tensor& x);
// Per-sample ||(x - anchor) * weight||_2 -> [N]. anchor and weight are
// constants with the shape of x.
Tensor masked_l2(const Tensor& x, const Tensor& anchor, const Tensor& weight);

// x [N,K] -> [N] with out[n] = x[n, index[n]].
Tensor select(const Tensor& x, std::span<const int> index);

// Row-wise softmax of [N,K] values (no graph).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace robustsyn::ops
