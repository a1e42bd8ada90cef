#include "robustsyn/tensor/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace robustsyn::kernels {

namespace {

// Batch chunk used for weight-gradient partial sums. Fixed so the reduction
// order never depends on the thread count.
constexpr std::int64_t kWeightChunk = 4;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const real* __restrict a,
             const real* __restrict b, real* __restrict c) {
  for (std::int64_t i = 0; i < m; ++i) {
    real* __restrict ci = c + i * n;
    const real* ai = a + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const real av = ai[p];
      if (av == 0) continue;
      const real* __restrict bp = b + p * n;
#pragma omp simd
      for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const real* __restrict a,
             const real* __restrict b, real* __restrict c) {
  for (std::int64_t i = 0; i < m; ++i) {
    const real* ai = a + i * k;
    const real* __restrict bi = b + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const real av = ai[p];
      if (av == 0) continue;
      real* __restrict cp = c + p * n;
#pragma omp simd
      for (std::int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const real* __restrict a,
             const real* __restrict b, real* __restrict c) {
  for (std::int64_t i = 0; i < m; ++i) {
    const real* __restrict ai = a + i * n;
    real* ci = c + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      const real* __restrict bp = b + p * n;
      real s = 0;
#pragma omp simd reduction(+ : s)
      for (std::int64_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

void im2col(const ConvGeometry& g, const real* image, real* col) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    const real* plane = image + c * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        real* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride - g.pad + ky;
          real* out = row + y * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(out, out + ow, real(0));
            continue;
          }
          const real* src = plane + iy * g.in_w;
          if (g.stride == 1) {
            const std::int64_t shift = kx - g.pad;
            const std::int64_t lo = std::clamp<std::int64_t>(-shift, 0, ow);
            const std::int64_t hi = std::clamp<std::int64_t>(g.in_w - shift, lo, ow);
            std::fill(out, out + lo, real(0));
            for (std::int64_t x = lo; x < hi; ++x) out[x] = src[x + shift];
            std::fill(out + hi, out + ow, real(0));
          } else {
            for (std::int64_t x = 0; x < ow; ++x) {
              const std::int64_t ix = x * g.stride - g.pad + kx;
              out[x] = (ix >= 0 && ix < g.in_w) ? src[ix] : real(0);
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const real* col, real* image) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t c = 0; c < g.in_channels; ++c) {
    real* plane = image + c * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
        const real* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          real* dst = plane + iy * g.in_w;
          const real* in = row + y * ow;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += in[x];
          }
        }
      }
    }
  }
}

namespace {
bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y) {
  const std::int64_t pix = g.out_h() * g.out_w();
  const std::int64_t patch = g.patch();
  const std::int64_t in_size = g.in_channels * g.in_h * g.in_w;
  const bool pointwise = is_pointwise(g);
#pragma omp parallel
  {
    std::vector<real> col(pointwise ? 0 : static_cast<std::size_t>(patch * pix));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      const real* xn = x + n * in_size;
      real* yn = y + n * g.out_channels * pix;
      for (std::int64_t o = 0; o < g.out_channels; ++o) {
        std::fill(yn + o * pix, yn + (o + 1) * pix, bias ? bias[o] : real(0));
      }
      const real* b = xn;
      if (!pointwise) {
        im2col(g, xn, col.data());
        b = col.data();
      }
      gemm_nn(g.out_channels, pix, patch, w, b, yn);
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const real* gy, const real* w, real* gx) {
  const std::int64_t pix = g.out_h() * g.out_w();
  const std::int64_t patch = g.patch();
  const std::int64_t in_size = g.in_channels * g.in_h * g.in_w;
  const bool pointwise = is_pointwise(g);
#pragma omp parallel
  {
    std::vector<real> col(static_cast<std::size_t>(patch * pix));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      const real* gyn = gy + n * g.out_channels * pix;
      if (pointwise) {
        gemm_tn(g.out_channels, pix, patch, w, gyn, gx + n * in_size);
        continue;
      }
      std::fill(col.begin(), col.end(), real(0));
      gemm_tn(g.out_channels, pix, patch, w, gyn, col.data());
      col2im(g, col.data(), gx + n * in_size);
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const real* x, const real* gy, real* gw, real* gb) {
  const std::int64_t pix = g.out_h() * g.out_w();
  const std::int64_t patch = g.patch();
  const std::int64_t in_size = g.in_channels * g.in_h * g.in_w;
  const std::int64_t wsize = g.out_channels * patch;
  const std::int64_t chunks = (g.batch + kWeightChunk - 1) / kWeightChunk;
  const bool pointwise = is_pointwise(g);
  std::vector<real> partial(static_cast<std::size_t>(chunks * wsize), real(0));
  std::vector<real> partial_bias(static_cast<std::size_t>(chunks * g.out_channels), real(0));
#pragma omp parallel
  {
    std::vector<real> col(pointwise ? 0 : static_cast<std::size_t>(patch * pix));
#pragma omp for schedule(static)
    for (std::int64_t ch = 0; ch < chunks; ++ch) {
      real* pw = partial.data() + ch * wsize;
      real* pb = partial_bias.data() + ch * g.out_channels;
      const std::int64_t end = std::min(g.batch, (ch + 1) * kWeightChunk);
      for (std::int64_t n = ch * kWeightChunk; n < end; ++n) {
        const real* gyn = gy + n * g.out_channels * pix;
        const real* b = x + n * in_size;
        if (!pointwise) {
          im2col(g, b, col.data());
          b = col.data();
        }
        gemm_nt(g.out_channels, pix, patch, gyn, b, pw);
        for (std::int64_t o = 0; o < g.out_channels; ++o) {
          real s = 0;
          const real* row = gyn + o * pix;
          for (std::int64_t p = 0; p < pix; ++p) s += row[p];
          pb[o] += s;
        }
      }
    }
  }
  for (std::int64_t ch = 0; ch < chunks; ++ch) {
    const real* pw = partial.data() + ch * wsize;
    for (std::int64_t i = 0; i < wsize; ++i) gw[i] += pw[i];
    if (gb) {
      const real* pb = partial_bias.data() + ch * g.out_channels;
      for (std::int64_t o = 0; o < g.out_channels; ++o) gb[o] += pb[o];
    }
  }
}

void max_pool_forward(const PoolGeometry& g, const real* x, real* y, std::int64_t* argmax) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < g.planes; ++p) {
    const real* plane = x + p * g.in_h * g.in_w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        std::int64_t best = (oy * g.stride) * g.in_w + ox * g.stride;
        real best_v = plane[best];
        for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
          for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
            const std::int64_t idx = (oy * g.stride + ky) * g.in_w + ox * g.stride + kx;
            if (plane[idx] > best_v) {
              best_v = plane[idx];
              best = idx;
            }
          }
        }
        const std::int64_t o = (p * oh + oy) * ow + ox;
        y[o] = best_v;
        argmax[o] = p * g.in_h * g.in_w + best;
      }
    }
  }
}

void avg_pool_forward(const PoolGeometry& g, const real* x, real* y) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const real inv = real(1) / static_cast<real>(g.kernel * g.kernel);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < g.planes; ++p) {
    const real* plane = x + p * g.in_h * g.in_w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        real s = 0;
        for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
          for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
            s += plane[(oy * g.stride + ky) * g.in_w + ox * g.stride + kx];
          }
        }
        y[(p * oh + oy) * ow + ox] = s * inv;
      }
    }
  }
}

void avg_pool_backward(const PoolGeometry& g, const real* gy, real* gx) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  const real inv = real(1) / static_cast<real>(g.kernel * g.kernel);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < g.planes; ++p) {
    real* plane = gx + p * g.in_h * g.in_w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const real v = gy[(p * oh + oy) * ow + ox] * inv;
        for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
          for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
            plane[(oy * g.stride + ky) * g.in_w + ox * g.stride + kx] += v;
          }
        }
      }
    }
  }
}

namespace reference {

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      real s = 0;
      for (std::int64_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          real s = bias ? bias[o] : real(0);
          for (std::int64_t c = 0; c < g.in_channels; ++c) {
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::int64_t iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                s += x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] *
                     w[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
          y[((n * g.out_channels + o) * oh + oy) * ow + ox] = s;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, const real* gy, const real* w, real* gx) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const real go = gy[((n * g.out_channels + o) * oh + oy) * ow + ox];
          for (std::int64_t c = 0; c < g.in_channels; ++c) {
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::int64_t iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                gx[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] +=
                    go * w[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, const real* x, const real* gy, real* gw, real* gb) {
  const std::int64_t oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t o = 0; o < g.out_channels; ++o) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const real go = gy[((n * g.out_channels + o) * oh + oy) * ow + ox];
          if (gb) gb[o] += go;
          for (std::int64_t c = 0; c < g.in_channels; ++c) {
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
              const std::int64_t iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const std::int64_t ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                gw[((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    go * x[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace reference

}  // namespace robustsyn::kernels
