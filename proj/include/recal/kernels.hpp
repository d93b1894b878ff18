#pragma once

#include <cstdint>

#include "recal/common.hpp"

namespace recal::kernels {

/// Kernel backend selection. `serial` is the reference implementation the
/// tests compare against; `openmp` parallelizes the same loops. Both compute
/// each output element with an identical summation order, so results are
/// bit-identical regardless of backend or thread count.
enum class Backend { serial, openmp };

Backend active_backend();
void set_backend(Backend b);
bool openmp_compiled();
int max_threads();

/// Geometry of one 2-D convolution (or pooling) call.
struct ConvDims {
  int64_t n = 0;      // batch
  int64_t cin = 0;    // input channels
  int64_t hin = 0;
  int64_t win = 0;
  int64_t cout = 0;   // output channels
  int64_t hout = 0;
  int64_t wout = 0;
  int64_t kh = 0;
  int64_t kw = 0;
  int64_t ph = 0;     // zero padding
  int64_t pw = 0;
  int64_t sh = 1;     // stride
  int64_t sw = 1;
  int64_t groups = 1;
};

// Layouts: x[n][c][h][w], w[cout][cin/groups][kh][kw], b[cout], y[n][cout][h'][w'].
// Backward kernels accumulate (+=) into their outputs.

void conv2d_forward(const ConvDims& d, const real* x, const real* w, const real* b, real* y);
void conv2d_backward_input(const ConvDims& d, const real* dy, const real* w, real* dx);
void conv2d_backward_weights(const ConvDims& d, const real* x, const real* dy, real* dw,
                             real* db);

// Average pooling divides by the full kernel area, counting zero-padded cells.
void avg_pool_forward(const ConvDims& d, const real* x, real* y);
void avg_pool_backward_input(const ConvDims& d, const real* dy, real* dx);

// 2x2 stride-2 max pooling; argmax holds the flat spatial index of the winner
// within each (n,c) slice, first occurrence on ties.
void max_pool2_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y,
                       int32_t* argmax);
void max_pool2_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                              const int32_t* argmax, real* dx);

// Bilinear 2x upsampling with half-pixel centers (align-corners off).
void bilinear2x_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y);
void bilinear2x_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                               real* dx);

namespace serial {
void conv2d_forward(const ConvDims& d, const real* x, const real* w, const real* b, real* y);
void conv2d_backward_input(const ConvDims& d, const real* dy, const real* w, real* dx);
void conv2d_backward_weights(const ConvDims& d, const real* x, const real* dy, real* dw,
                             real* db);
void avg_pool_forward(const ConvDims& d, const real* x, real* y);
void avg_pool_backward_input(const ConvDims& d, const real* dy, real* dx);
void max_pool2_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y,
                       int32_t* argmax);
void max_pool2_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                              const int32_t* argmax, real* dx);
void bilinear2x_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y);
void bilinear2x_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                               real* dx);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvDims& d, const real* x, const real* w, const real* b, real* y);
void conv2d_backward_input(const ConvDims& d, const real* dy, const real* w, real* dx);
void conv2d_backward_weights(const ConvDims& d, const real* x, const real* dy, real* dw,
                             real* db);
void avg_pool_forward(const ConvDims& d, const real* x, real* y);
void avg_pool_backward_input(const ConvDims& d, const real* dy, real* dx);
void max_pool2_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y,
                       int32_t* argmax);
void max_pool2_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                              const int32_t* argmax, real* dx);
void bilinear2x_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y);
void bilinear2x_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                               real* dx);
}  // namespace omp

/// Shared helper: the four bilinear taps for one 2x-upsampled axis.
/// For output index o, source coordinate is o/2 - 0.25 clamped to [0, len-1].
struct BilinearTap {
  int64_t lo;
  int64_t hi;
  real w_lo;
  real w_hi;
};
inline BilinearTap bilinear2x_tap(int64_t o, int64_t len) {
  real src = real(0.5) * static_cast<real>(o) - real(0.25);
  if (src < 0) src = 0;
  const real last = static_cast<real>(len - 1);
  if (src > last) src = last;
  int64_t lo = static_cast<int64_t>(src);
  if (lo > len - 2) lo = len - 2;
  if (lo < 0) lo = 0;
  const int64_t hi = (len == 1) ? 0 : lo + 1;
  const real frac = src - static_cast<real>(lo);
  return BilinearTap{lo, hi, real(1) - frac, frac};
}

}  // namespace recal::kernels
