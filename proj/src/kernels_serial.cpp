// Reference kernels. Plain loops, no threading; the OpenMP backend must
// reproduce these bit-for-bit, so any change here has to be mirrored in
// kernels_omp.cpp including the accumulation order within each output
// element.

#include <algorithm>

#include "recal/kernels.hpp"

namespace recal::kernels::serial {

namespace {
inline int64_t max64(int64_t a, int64_t b) { return a > b ? a : b; }
inline int64_t min64(int64_t a, int64_t b) { return a < b ? a : b; }
}  // namespace

void conv2d_forward(const ConvDims& d, const real* x, const real* w, const real* b,
                    real* y) {
  const int64_t cing = d.cin / d.groups;
  const int64_t coutg = d.cout / d.groups;
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      const int64_t g = oc / coutg;
      const real* wbase = w + oc * cing * d.kh * d.kw;
      real* yplane = y + (n * d.cout + oc) * d.hout * d.wout;
      const real bias = b ? b[oc] : real(0);
      for (int64_t oh = 0; oh < d.hout; ++oh) {
        real* yrow = yplane + oh * d.wout;
        for (int64_t ow = 0; ow < d.wout; ++ow) yrow[ow] = bias;
        const int64_t ih0 = oh * d.sh - d.ph;
        const int64_t khlo = max64(0, -ih0);
        const int64_t khhi = min64(d.kh, d.hin - ih0);
        for (int64_t cg = 0; cg < cing; ++cg) {
          const real* xplane = x + (n * d.cin + g * cing + cg) * d.hin * d.win;
          const real* wplane = wbase + cg * d.kh * d.kw;
          for (int64_t kh = khlo; kh < khhi; ++kh) {
            const real* xrow = xplane + (ih0 + kh) * d.win;
            const real* wrow = wplane + kh * d.kw;
            for (int64_t ow = 0; ow < d.wout; ++ow) {
              const int64_t iw0 = ow * d.sw - d.pw;
              const int64_t kwlo = max64(0, -iw0);
              const int64_t kwhi = min64(d.kw, d.win - iw0);
              real acc = 0;
              for (int64_t kw = kwlo; kw < kwhi; ++kw) {
                acc += wrow[kw] * xrow[iw0 + kw];
              }
              yrow[ow] += acc;
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvDims& d, const real* dy, const real* w, real* dx) {
  const int64_t cing = d.cin / d.groups;
  const int64_t coutg = d.cout / d.groups;
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.cin; ++c) {
      const int64_t g = c / cing;
      const int64_t cg = c - g * cing;
      real* dxplane = dx + (n * d.cin + c) * d.hin * d.win;
      for (int64_t ih = 0; ih < d.hin; ++ih) {
        for (int64_t iw = 0; iw < d.win; ++iw) {
          real acc = 0;
          for (int64_t oc = g * coutg; oc < (g + 1) * coutg; ++oc) {
            const real* dyplane = dy + (n * d.cout + oc) * d.hout * d.wout;
            const real* wplane = w + (oc * cing + cg) * d.kh * d.kw;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              const int64_t oh_num = ih + d.ph - kh;
              if (oh_num < 0 || oh_num % d.sh != 0) continue;
              const int64_t oh = oh_num / d.sh;
              if (oh >= d.hout) continue;
              const real* dyrow = dyplane + oh * d.wout;
              const real* wrow = wplane + kh * d.kw;
              for (int64_t kw = 0; kw < d.kw; ++kw) {
                const int64_t ow_num = iw + d.pw - kw;
                if (ow_num < 0 || ow_num % d.sw != 0) continue;
                const int64_t ow = ow_num / d.sw;
                if (ow >= d.wout) continue;
                acc += dyrow[ow] * wrow[kw];
              }
            }
          }
          dxplane[ih * d.win + iw] += acc;
        }
      }
    }
  }
}

void conv2d_backward_weights(const ConvDims& d, const real* x, const real* dy, real* dw,
                             real* db) {
  const int64_t cing = d.cin / d.groups;
  const int64_t coutg = d.cout / d.groups;
  for (int64_t oc = 0; oc < d.cout; ++oc) {
    const int64_t g = oc / coutg;
    for (int64_t cg = 0; cg < cing; ++cg) {
      const int64_t c = g * cing + cg;
      for (int64_t kh = 0; kh < d.kh; ++kh) {
        const int64_t ohlo = max64(0, (d.ph - kh + d.sh - 1) / d.sh);
        const int64_t oh_num = d.hin - 1 - kh + d.ph;
        const int64_t ohhi = oh_num < 0 ? 0 : min64(d.hout, oh_num / d.sh + 1);
        for (int64_t kw = 0; kw < d.kw; ++kw) {
          const int64_t owlo = max64(0, (d.pw - kw + d.sw - 1) / d.sw);
          const int64_t ow_num = d.win - 1 - kw + d.pw;
          const int64_t owhi = ow_num < 0 ? 0 : min64(d.wout, ow_num / d.sw + 1);
          real acc = 0;
          for (int64_t n = 0; n < d.n; ++n) {
            const real* dyplane = dy + (n * d.cout + oc) * d.hout * d.wout;
            const real* xplane = x + (n * d.cin + c) * d.hin * d.win;
            for (int64_t oh = ohlo; oh < ohhi; ++oh) {
              const real* dyrow = dyplane + oh * d.wout;
              const real* xrow = xplane + (oh * d.sh - d.ph + kh) * d.win;
              for (int64_t ow = owlo; ow < owhi; ++ow) {
                acc += dyrow[ow] * xrow[ow * d.sw - d.pw + kw];
              }
            }
          }
          dw[((oc * cing + cg) * d.kh + kh) * d.kw + kw] += acc;
        }
      }
    }
  }
  if (db) {
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      real acc = 0;
      for (int64_t n = 0; n < d.n; ++n) {
        const real* dyplane = dy + (n * d.cout + oc) * d.hout * d.wout;
        for (int64_t i = 0; i < d.hout * d.wout; ++i) acc += dyplane[i];
      }
      db[oc] += acc;
    }
  }
}

void avg_pool_forward(const ConvDims& d, const real* x, real* y) {
  const real inv = real(1) / static_cast<real>(d.kh * d.kw);
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.cin; ++c) {
      const real* xplane = x + (n * d.cin + c) * d.hin * d.win;
      real* yplane = y + (n * d.cin + c) * d.hout * d.wout;
      for (int64_t oh = 0; oh < d.hout; ++oh) {
        const int64_t ih0 = oh * d.sh - d.ph;
        const int64_t khlo = max64(0, -ih0);
        const int64_t khhi = min64(d.kh, d.hin - ih0);
        for (int64_t ow = 0; ow < d.wout; ++ow) {
          const int64_t iw0 = ow * d.sw - d.pw;
          const int64_t kwlo = max64(0, -iw0);
          const int64_t kwhi = min64(d.kw, d.win - iw0);
          real acc = 0;
          for (int64_t kh = khlo; kh < khhi; ++kh) {
            const real* xrow = xplane + (ih0 + kh) * d.win;
            for (int64_t kw = kwlo; kw < kwhi; ++kw) {
              acc += xrow[iw0 + kw];
            }
          }
          yplane[oh * d.wout + ow] = acc * inv;
        }
      }
    }
  }
}

void avg_pool_backward_input(const ConvDims& d, const real* dy, real* dx) {
  const real inv = real(1) / static_cast<real>(d.kh * d.kw);
  for (int64_t n = 0; n < d.n; ++n) {
    for (int64_t c = 0; c < d.cin; ++c) {
      const real* dyplane = dy + (n * d.cin + c) * d.hout * d.wout;
      real* dxplane = dx + (n * d.cin + c) * d.hin * d.win;
      for (int64_t ih = 0; ih < d.hin; ++ih) {
        for (int64_t iw = 0; iw < d.win; ++iw) {
          real acc = 0;
          for (int64_t kh = 0; kh < d.kh; ++kh) {
            const int64_t oh_num = ih + d.ph - kh;
            if (oh_num < 0 || oh_num % d.sh != 0) continue;
            const int64_t oh = oh_num / d.sh;
            if (oh >= d.hout) continue;
            const real* dyrow = dyplane + oh * d.wout;
            for (int64_t kw = 0; kw < d.kw; ++kw) {
              const int64_t ow_num = iw + d.pw - kw;
              if (ow_num < 0 || ow_num % d.sw != 0) continue;
              const int64_t ow = ow_num / d.sw;
              if (ow >= d.wout) continue;
              acc += dyrow[ow];
            }
          }
          dxplane[ih * d.win + iw] += acc * inv;
        }
      }
    }
  }
}

void max_pool2_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y,
                       int32_t* argmax) {
  const int64_t ho = h / 2;
  const int64_t wo = w / 2;
  for (int64_t i = 0; i < n * c; ++i) {
    const real* xplane = x + i * h * w;
    real* yplane = y + i * ho * wo;
    int32_t* aplane = argmax + i * ho * wo;
    for (int64_t oh = 0; oh < ho; ++oh) {
      for (int64_t ow = 0; ow < wo; ++ow) {
        const int64_t ih = oh * 2;
        const int64_t iw = ow * 2;
        int64_t best = ih * w + iw;
        real best_v = xplane[best];
        const int64_t cand[3] = {ih * w + iw + 1, (ih + 1) * w + iw, (ih + 1) * w + iw + 1};
        for (int64_t k = 0; k < 3; ++k) {
          if (xplane[cand[k]] > best_v) {
            best_v = xplane[cand[k]];
            best = cand[k];
          }
        }
        yplane[oh * wo + ow] = best_v;
        aplane[oh * wo + ow] = static_cast<int32_t>(best);
      }
    }
  }
}

void max_pool2_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                              const int32_t* argmax, real* dx) {
  const int64_t ho = h / 2;
  const int64_t wo = w / 2;
  for (int64_t i = 0; i < n * c; ++i) {
    const real* dyplane = dy + i * ho * wo;
    const int32_t* aplane = argmax + i * ho * wo;
    real* dxplane = dx + i * h * w;
    for (int64_t j = 0; j < ho * wo; ++j) {
      dxplane[aplane[j]] += dyplane[j];
    }
  }
}

void bilinear2x_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y) {
  const int64_t ho = h * 2;
  const int64_t wo = w * 2;
  for (int64_t i = 0; i < n * c; ++i) {
    const real* xplane = x + i * h * w;
    real* yplane = y + i * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy) {
      const BilinearTap ty = bilinear2x_tap(oy, h);
      const real* row_lo = xplane + ty.lo * w;
      const real* row_hi = xplane + ty.hi * w;
      real* yrow = yplane + oy * wo;
      for (int64_t ox = 0; ox < wo; ++ox) {
        const BilinearTap tx = bilinear2x_tap(ox, w);
        yrow[ox] = ty.w_lo * (tx.w_lo * row_lo[tx.lo] + tx.w_hi * row_lo[tx.hi]) +
                   ty.w_hi * (tx.w_lo * row_hi[tx.lo] + tx.w_hi * row_hi[tx.hi]);
      }
    }
  }
}

void bilinear2x_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                               real* dx) {
  const int64_t ho = h * 2;
  const int64_t wo = w * 2;
  for (int64_t i = 0; i < n * c; ++i) {
    const real* dyplane = dy + i * ho * wo;
    real* dxplane = dx + i * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      const BilinearTap ty = bilinear2x_tap(oy, h);
      const real* dyrow = dyplane + oy * wo;
      for (int64_t ox = 0; ox < wo; ++ox) {
        const BilinearTap tx = bilinear2x_tap(ox, w);
        const real g = dyrow[ox];
        dxplane[ty.lo * w + tx.lo] += ty.w_lo * tx.w_lo * g;
        dxplane[ty.lo * w + tx.hi] += ty.w_lo * tx.w_hi * g;
        dxplane[ty.hi * w + tx.lo] += ty.w_hi * tx.w_lo * g;
        dxplane[ty.hi * w + tx.hi] += ty.w_hi * tx.w_hi * g;
      }
    }
  }
}

}  // namespace recal::kernels::serial
