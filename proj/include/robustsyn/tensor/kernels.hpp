#pragma once

#include <cstdint>
#include <span>

#include "robustsyn/common.hpp"

// Raw compute kernels behind the tensor ops. `kernels::` holds the optimized
// versions (im2col + GEMM, OpenMP across the batch); `kernels::reference::`
// holds direct serial loops that tests and benchmarks compare against.
//
// All kernels are deterministic for any thread count: reductions over the
// batch are split into fixed-size chunks and summed in a fixed order.
namespace robustsyn::kernels {

struct ConvGeometry {
  std::int64_t batch, in_channels, in_h, in_w;
  std::int64_t out_channels, kernel_h, kernel_w;
  std::int64_t stride, pad;

  std::int64_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
  std::int64_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
  std::int64_t patch() const { return in_channels * kernel_h * kernel_w; }
};

struct PoolGeometry {
  std::int64_t planes, in_h, in_w, kernel, stride;
  std::int64_t out_h() const { return (in_h - kernel) / stride + 1; }
  std::int64_t out_w() const { return (in_w - kernel) / stride + 1; }
};

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c);
// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c);
// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c);

void im2col(const ConvGeometry& g, const real* image, real* col);
void col2im(const ConvGeometry& g, const real* col, real* image);

// bias may be null.
void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y);
// gx += dL/dx
void conv2d_backward_input(const ConvGeometry& g, const real* gy, const real* w, real* gx);
// gw += dL/dw, gb += dL/db (gb may be null)
void conv2d_backward_weight(const ConvGeometry& g, const real* x, const real* gy, real* gw, real* gb);

// argmax receives the flat input index chosen for each output; ties keep the
// first index in row-major window order.
void max_pool_forward(const PoolGeometry& g, const real* x, real* y, std::int64_t* argmax);
void avg_pool_forward(const PoolGeometry& g, const real* x, real* y);
void avg_pool_backward(const PoolGeometry& g, const real* gy, real* gx);

namespace reference {

void conv2d_forward(const ConvGeometry& g, const real* x, const real* w, const real* bias, real* y);
void conv2d_backward_input(const ConvGeometry& g, const real* gy, const real* w, real* gx);
void conv2d_backward_weight(const ConvGeometry& g, const real* x, const real* gy, real* gw, real* gb);
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const real* a, const real* b, real* c);

}  // namespace reference

// Number of OpenMP threads kernels may use (1 when built without OpenMP).
int max_threads();
void set_max_threads(int n);

}  // namespace robustsyn::kernels
