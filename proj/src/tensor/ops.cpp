#include "robustsyn/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "robustsyn/tensor/kernels.hpp"

namespace robustsyn::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

TensorImpl* tracked(const Tensor& t) {
  return t.defined() && t.requires_grad() ? t.impl().get() : nullptr;
}

std::vector<real> zeros_like(const TensorImpl* t) { return std::vector<real>(t->data.size(), real(0)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<real> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  auto r = make_op_output("add", a.shape(), std::move(out), {&a, &b});
  if (r.node) {
    TensorImpl* ta = tracked(a);
    TensorImpl* tb = tracked(b);
    r.node->backward = [ta, tb](std::span<const real> g) {
      if (ta) ta->accumulate(g);
      if (tb) tb->accumulate(g);
    };
  }
  return r.out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<real> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  auto r = make_op_output("sub", a.shape(), std::move(out), {&a, &b});
  if (r.node) {
    TensorImpl* ta = tracked(a);
    TensorImpl* tb = tracked(b);
    r.node->backward = [ta, tb](std::span<const real> g) {
      if (ta) ta->accumulate(g);
      if (tb) {
        std::vector<real> neg(g.begin(), g.end());
        for (auto& v : neg) v = -v;
        tb->accumulate(neg);
      }
    };
  }
  return r.out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<real> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto r = make_op_output("mul", a.shape(), std::move(out), {&a, &b});
  if (r.node) {
    TensorImpl* ta = tracked(a);
    TensorImpl* tb = tracked(b);
    const TensorImpl* va = a.impl().get();
    const TensorImpl* vb = b.impl().get();
    r.node->backward = [ta, tb, va, vb](std::span<const real> g) {
      std::vector<real> tmp(g.size());
      if (ta) {
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * vb->data[i];
        ta->accumulate(tmp);
      }
      if (tb) {
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * va->data[i];
        tb->accumulate(tmp);
      }
    };
  }
  return r.out;
}

Tensor scale(const Tensor& a, real s) {
  std::vector<real> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  auto r = make_op_output("scale", a.shape(), std::move(out), {&a});
  if (r.node) {
    TensorImpl* ta = tracked(a);
    r.node->backward = [ta, s](std::span<const real> g) {
      std::vector<real> tmp(g.begin(), g.end());
      for (auto& v : tmp) v *= s;
      ta->accumulate(tmp);
    };
  }
  return r.out;
}

Tensor sum(const Tensor& a) {
  real s = 0;
  for (real v : a.data()) s += v;
  auto r = make_op_output("sum", {1}, {s}, {&a});
  if (r.node) {
    TensorImpl* ta = tracked(a);
    r.node->backward = [ta](std::span<const real> g) {
      ta->accumulate(std::vector<real>(ta->data.size(), g[0]));
    };
  }
  return r.out;
}

Tensor relu(const Tensor& x) {
  std::vector<real> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > 0 ? v : real(0);
  auto r = make_op_output("relu", x.shape(), std::move(out), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    r.node->backward = [tx](std::span<const real> g) {
      std::vector<real> tmp(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = tx->data[i] > 0 ? g[i] : real(0);
      tx->accumulate(tmp);
    };
  }
  return r.out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d weight");
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " vs weight " +
                     shape_str(w.shape()));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/padding");
  if (bias.defined() && bias.shape() != Shape{w.dim(0)}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), stride, pad};
  if (g.out_h() <= 0 || g.out_w() <= 0) throw ShapeError("conv2d: kernel larger than padded input");
  std::vector<real> out(static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w()));
  kernels::conv2d_forward(g, x.data().data(), w.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.data());
  auto r = make_op_output("conv2d", {g.batch, g.out_channels, g.out_h(), g.out_w()}, std::move(out),
                          {&x, &w, &bias});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    TensorImpl* tw = tracked(w);
    TensorImpl* tb = tracked(bias);
    const TensorImpl* vx = x.impl().get();
    const TensorImpl* vw = w.impl().get();
    r.node->backward = [g, tx, tw, tb, vx, vw](std::span<const real> gy) {
      if (tx) {
        auto gx = zeros_like(tx);
        kernels::conv2d_backward_input(g, gy.data(), vw->data.data(), gx.data());
        tx->accumulate(gx);
      }
      if (tw || tb) {
        std::vector<real> gw(vw->data.size(), real(0));
        std::vector<real> gb(static_cast<std::size_t>(g.out_channels), real(0));
        kernels::conv2d_backward_weight(g, vx->data.data(), gy.data(), gw.data(), gb.data());
        if (tw) tw->accumulate(gw);
        if (tb) tb->accumulate(gb);
      }
    };
  }
  return r.out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear weight");
  const std::int64_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
  if (w.dim(1) != f) throw ShapeError("linear: feature mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  if (bias.defined() && bias.shape() != Shape{o}) throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  std::vector<real> out(static_cast<std::size_t>(n * o));
  auto xd = x.data(), wd = w.data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < o; ++j) {
      real s = bias.defined() ? bias.data()[static_cast<std::size_t>(j)] : real(0);
      for (std::int64_t k = 0; k < f; ++k) s += xd[static_cast<std::size_t>(i * f + k)] * wd[static_cast<std::size_t>(j * f + k)];
      out[static_cast<std::size_t>(i * o + j)] = s;
    }
  }
  auto r = make_op_output("linear", {n, o}, std::move(out), {&x, &w, &bias});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    TensorImpl* tw = tracked(w);
    TensorImpl* tb = tracked(bias);
    const TensorImpl* vx = x.impl().get();
    const TensorImpl* vw = w.impl().get();
    r.node->backward = [n, f, o, tx, tw, tb, vx, vw](std::span<const real> g) {
      if (tx) {
        auto gx = zeros_like(tx);
        kernels::gemm_nn(n, f, o, g.data(), vw->data.data(), gx.data());
        tx->accumulate(gx);
      }
      if (tw) {
        std::vector<real> gw(vw->data.size(), real(0));
        kernels::gemm_tn(n, f, o, g.data(), vx->data.data(), gw.data());
        tw->accumulate(gw);
      }
      if (tb) {
        std::vector<real> gb(static_cast<std::size_t>(o), real(0));
        for (std::int64_t i = 0; i < n; ++i)
          for (std::int64_t j = 0; j < o; ++j) gb[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * o + j)];
        tb->accumulate(gb);
      }
    };
  }
  return r.out;
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride) {
  require_rank(x, 4, "max_pool2d");
  if (kernel < 1 || stride < 1 || kernel > x.dim(2) || kernel > x.dim(3)) throw ShapeError("max_pool2d: invalid window");
  kernels::PoolGeometry g{x.dim(0) * x.dim(1), x.dim(2), x.dim(3), kernel, stride};
  const std::size_t count = static_cast<std::size_t>(g.planes * g.out_h() * g.out_w());
  std::vector<real> out(count);
  std::vector<std::int64_t> argmax(count);
  kernels::max_pool_forward(g, x.data().data(), out.data(), argmax.data());
  auto r = make_op_output("max_pool2d", {x.dim(0), x.dim(1), g.out_h(), g.out_w()}, std::move(out), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    r.node->backward = [tx, argmax = std::move(argmax)](std::span<const real> gy) {
      auto gx = zeros_like(tx);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[static_cast<std::size_t>(argmax[i])] += gy[i];
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor avg_pool2d(const Tensor& x, int kernel, int stride) {
  require_rank(x, 4, "avg_pool2d");
  if (kernel < 1 || stride < 1 || kernel > x.dim(2) || kernel > x.dim(3)) throw ShapeError("avg_pool2d: invalid window");
  kernels::PoolGeometry g{x.dim(0) * x.dim(1), x.dim(2), x.dim(3), kernel, stride};
  std::vector<real> out(static_cast<std::size_t>(g.planes * g.out_h() * g.out_w()));
  kernels::avg_pool_forward(g, x.data().data(), out.data());
  auto r = make_op_output("avg_pool2d", {x.dim(0), x.dim(1), g.out_h(), g.out_w()}, std::move(out), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    r.node->backward = [g, tx](std::span<const real> gy) {
      auto gx = zeros_like(tx);
      kernels::avg_pool_backward(g, gy.data(), gx.data());
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t pix = x.dim(2) * x.dim(3);
  const real inv = real(1) / static_cast<real>(pix);
  std::vector<real> out(static_cast<std::size_t>(planes));
  auto xd = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    real s = 0;
    for (std::int64_t i = 0; i < pix; ++i) s += xd[static_cast<std::size_t>(p * pix + i)];
    out[static_cast<std::size_t>(p)] = s * inv;
  }
  auto r = make_op_output("global_avg_pool", {x.dim(0), x.dim(1)}, std::move(out), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    r.node->backward = [tx, pix, inv](std::span<const real> g) {
      std::vector<real> gx(tx->data.size());
      for (std::size_t p = 0; p < g.size(); ++p) {
        const real v = g[p] * inv;
        std::fill(gx.begin() + static_cast<std::ptrdiff_t>(p * pix),
                  gx.begin() + static_cast<std::ptrdiff_t>((p + 1) * pix), v);
      }
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  require_rank(x, 4, "upsample_nearest");
  if (factor < 1) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = h * factor, ow = w * factor;
  std::vector<real> out(static_cast<std::size_t>(planes * oh * ow));
  auto xd = x.data();
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t c = 0; c < ow; ++c)
        out[static_cast<std::size_t>((p * oh + y) * ow + c)] = xd[static_cast<std::size_t>((p * h + y / factor) * w + c / factor)];
  auto r = make_op_output("upsample_nearest", {x.dim(0), x.dim(1), oh, ow}, std::move(out), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    r.node->backward = [=](std::span<const real> g) {
      auto gx = zeros_like(tx);
      for (std::int64_t p = 0; p < planes; ++p)
        for (std::int64_t y = 0; y < oh; ++y)
          for (std::int64_t c = 0; c < ow; ++c)
            gx[static_cast<std::size_t>((p * h + y / factor) * w + c / factor)] += g[static_cast<std::size_t>((p * oh + y) * ow + c)];
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("flatten: rank 0");
  return x.reshape({x.dim(0), x.numel() / x.dim(0)});
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats,
                  BatchNormMode mode, BatchNormStats* update, real momentum, real eps) {
  require_rank(x, 4, "batch_norm");
  const std::int64_t n = x.dim(0), c = x.dim(1), pix = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) throw ShapeError("batch_norm: affine parameter shape");
  if (stats.running_mean.size() != static_cast<std::size_t>(c) || stats.running_var.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm: running statistics size");
  }
  const bool use_batch = mode != BatchNormMode::inference;
  if (mode == BatchNormMode::train && !update) throw GraphError("batch_norm: train mode needs a statistics target");
  const std::int64_t count = n * pix;
  if (use_batch && count < 2) throw ShapeError("batch_norm: batch statistics need more than one value per channel");

  auto xd = x.data();
  std::vector<real> mean(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const auto uc = static_cast<std::size_t>(ch);
    if (use_batch) {
      double s = 0, s2 = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        const real* p = xd.data() + (i * c + ch) * pix;
        for (std::int64_t k = 0; k < pix; ++k) s += p[k];
      }
      const double m = s / static_cast<double>(count);
      for (std::int64_t i = 0; i < n; ++i) {
        const real* p = xd.data() + (i * c + ch) * pix;
        for (std::int64_t k = 0; k < pix; ++k) s2 += (p[k] - m) * (p[k] - m);
      }
      const double var = s2 / static_cast<double>(count);
      mean[uc] = static_cast<real>(m);
      inv_std[uc] = static_cast<real>(1.0 / std::sqrt(var + eps));
      if (mode == BatchNormMode::train) {
        const double unbiased = s2 / static_cast<double>(count - 1);
        const double old_mean = stats.running_mean[uc];
        const double old_var = stats.running_var[uc];
        update->running_mean.resize(static_cast<std::size_t>(c));
        update->running_var.resize(static_cast<std::size_t>(c));
        update->running_mean[uc] = static_cast<real>((1 - momentum) * old_mean + momentum * m);
        update->running_var[uc] = static_cast<real>((1 - momentum) * old_var + momentum * unbiased);
      }
    } else {
      mean[uc] = stats.running_mean[uc];
      inv_std[uc] = static_cast<real>(1.0 / std::sqrt(static_cast<double>(stats.running_var[uc]) + eps));
    }
  }

  auto gd = gamma.data(), bd = beta.data();
  std::vector<real> xhat(xd.size()), out(xd.size());
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto uc = static_cast<std::size_t>(ch);
      const std::size_t base = static_cast<std::size_t>((i * c + ch) * pix);
      for (std::int64_t k = 0; k < pix; ++k) {
        const real h = (xd[base + k] - mean[uc]) * inv_std[uc];
        xhat[base + k] = h;
        out[base + k] = h * gd[uc] + bd[uc];
      }
    }
  }
  auto r = make_op_output("batch_norm", x.shape(), std::move(out), {&x, &gamma, &beta});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    TensorImpl* tg = tracked(gamma);
    TensorImpl* tb = tracked(beta);
    const TensorImpl* vg = gamma.impl().get();
    r.node->backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const real> g) {
      std::vector<real> sum_g(static_cast<std::size_t>(c), 0), sum_gh(static_cast<std::size_t>(c), 0);
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const std::size_t base = static_cast<std::size_t>((i * c + ch) * pix);
          real sg = 0, sgh = 0;
          for (std::int64_t k = 0; k < pix; ++k) {
            sg += g[base + k];
            sgh += g[base + k] * xhat[base + k];
          }
          sum_g[static_cast<std::size_t>(ch)] += sg;
          sum_gh[static_cast<std::size_t>(ch)] += sgh;
        }
      }
      if (tg) tg->accumulate(sum_gh);
      if (tb) tb->accumulate(sum_g);
      if (!tx) return;
      std::vector<real> gx(g.size());
      const real inv_count = real(1) / static_cast<real>(count);
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto uc = static_cast<std::size_t>(ch);
          const std::size_t base = static_cast<std::size_t>((i * c + ch) * pix);
          const real scale_c = vg->data[uc] * inv_std[uc];
          for (std::int64_t k = 0; k < pix; ++k) {
            if (use_batch) {
              gx[base + k] = scale_c * (g[base + k] - inv_count * sum_g[uc] - xhat[base + k] * inv_count * sum_gh[uc]);
            } else {
              gx[base + k] = scale_c * g[base + k];
            }
          }
        }
      }
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Reduction reduction) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) throw ShapeError("softmax_cross_entropy: label count mismatch");
  for (int y : labels) {
    if (y < 0 || y >= k) throw InvalidArgument("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
  }
  auto ld = logits.data();
  std::vector<real> probs(ld.size());
  double total = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const real* row = ld.data() + i * k;
    const real mx = *std::max_element(row, row + k);
    double z = 0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (std::int64_t j = 0; j < k; ++j) {
      probs[static_cast<std::size_t>(i * k + j)] = static_cast<real>(std::exp(static_cast<double>(row[j] - mx)) / z);
    }
    total += std::log(z) + mx - row[labels[static_cast<std::size_t>(i)]];
  }
  const real factor = reduction == Reduction::mean ? real(1) / static_cast<real>(n) : real(1);
  auto r = make_op_output("softmax_cross_entropy", {1}, {static_cast<real>(total) * factor}, {&logits});
  if (r.node) {
    TensorImpl* tl = tracked(logits);
    std::vector<int> ys(labels.begin(), labels.end());
    r.node->backward = [=, probs = std::move(probs), ys = std::move(ys)](std::span<const real> g) {
      std::vector<real> gl(probs);
      for (std::int64_t i = 0; i < n; ++i) gl[static_cast<std::size_t>(i * k + ys[static_cast<std::size_t>(i)])] -= 1;
      const real s = g[0] * factor;
      for (auto& v : gl) v *= s;
      tl->accumulate(gl);
    };
  }
  return r.out;
}

Tensor l2_norm(const Tensor& x) {
  double s = 0;
  for (real v : x.data()) s += static_cast<double>(v) * v;
  const real norm = static_cast<real>(std::sqrt(s));
  auto r = make_op_output("l2_norm", {1}, {norm}, {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    r.node->backward = [tx, norm](std::span<const real> g) {
      std::vector<real> gx(tx->data.size(), real(0));
      if (norm > 0) {
        const real s = g[0] / norm;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = tx->data[i] * s;
      }
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor masked_l2(const Tensor& x, const Tensor& anchor, const Tensor& weight) {
  require_same_shape(x, anchor, "masked_l2");
  require_same_shape(x, weight, "masked_l2");
  if (x.rank() < 1) throw ShapeError("masked_l2: rank 0");
  const std::int64_t n = x.dim(0);
  const std::int64_t per = x.numel() / n;
  auto xd = x.data(), ad = anchor.data(), wd = weight.data();
  std::vector<real> diff(xd.size());
  std::vector<real> norms(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < per; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i * per + j);
      const real d = (xd[idx] - ad[idx]) * wd[idx];
      diff[idx] = d;
      s += static_cast<double>(d) * d;
    }
    norms[static_cast<std::size_t>(i)] = static_cast<real>(std::sqrt(s));
  }
  auto out_norms = norms;
  auto r = make_op_output("masked_l2", {n}, std::move(out_norms), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    const TensorImpl* vw = weight.impl().get();
    // Keep the weight alive alongside the graph.
    r.node->inputs.push_back(weight.impl());
    r.node->backward = [=, diff = std::move(diff), norms = std::move(norms)](std::span<const real> g) {
      std::vector<real> gx(diff.size(), real(0));
      for (std::int64_t i = 0; i < n; ++i) {
        const real nv = norms[static_cast<std::size_t>(i)];
        if (nv <= 0) continue;
        const real s = g[static_cast<std::size_t>(i)] / nv;
        for (std::int64_t j = 0; j < per; ++j) {
          const std::size_t idx = static_cast<std::size_t>(i * per + j);
          gx[idx] = diff[idx] * vw->data[idx] * s;
        }
      }
      tx->accumulate(gx);
    };
  }
  return r.out;
}

Tensor select(const Tensor& x, std::span<const int> index) {
  require_rank(x, 2, "select");
  const std::int64_t n = x.dim(0), k = x.dim(1);
  if (static_cast<std::int64_t>(index.size()) != n) throw ShapeError("select: index count mismatch");
  std::vector<real> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const int j = index[static_cast<std::size_t>(i)];
    if (j < 0 || j >= k) throw InvalidArgument("select: index " + std::to_string(j) + " out of range");
    out[static_cast<std::size_t>(i)] = x.data()[static_cast<std::size_t>(i * k + j)];
  }
  auto r = make_op_output("select", {n}, std::move(out), {&x});
  if (r.node) {
    TensorImpl* tx = tracked(x);
    std::vector<int> idx(index.begin(), index.end());
    r.node->backward = [tx, k, idx = std::move(idx)](std::span<const real> g) {
      auto gx = zeros_like(tx);
      for (std::size_t i = 0; i < idx.size(); ++i) gx[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(idx[i])] += g[i];
      tx->accumulate(gx);
    };
  }
  return r.out;
}

std::vector<double> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  auto ld = logits.data();
  std::vector<double> out(ld.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const real* row = ld.data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    for (std::int64_t j = 0; j < k; ++j) out[static_cast<std::size_t>(i * k + j)] = std::exp(row[j] - mx) / z;
  }
  return out;
}

}  // namespace robustsyn::ops
