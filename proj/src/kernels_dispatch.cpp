#include "recal/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace recal::kernels {

namespace {
Backend& backend_state() {
#ifdef _OPENMP
  static Backend b = Backend::openmp;
#else
  static Backend b = Backend::serial;
#endif
  return b;
}
}  // namespace

Backend active_backend() { return backend_state(); }

void set_backend(Backend b) {
  if (b == Backend::openmp && !openmp_compiled()) {
    throw UsageError("openmp backend requested but this build has no OpenMP support");
  }
  backend_state() = b;
}

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv2d_forward(const ConvDims& d, const real* x, const real* w, const real* b, real* y) {
  if (active_backend() == Backend::openmp) {
    omp::conv2d_forward(d, x, w, b, y);
  } else {
    serial::conv2d_forward(d, x, w, b, y);
  }
}

void conv2d_backward_input(const ConvDims& d, const real* dy, const real* w, real* dx) {
  if (active_backend() == Backend::openmp) {
    omp::conv2d_backward_input(d, dy, w, dx);
  } else {
    serial::conv2d_backward_input(d, dy, w, dx);
  }
}

void conv2d_backward_weights(const ConvDims& d, const real* x, const real* dy, real* dw,
                             real* db) {
  if (active_backend() == Backend::openmp) {
    omp::conv2d_backward_weights(d, x, dy, dw, db);
  } else {
    serial::conv2d_backward_weights(d, x, dy, dw, db);
  }
}

void avg_pool_forward(const ConvDims& d, const real* x, real* y) {
  if (active_backend() == Backend::openmp) {
    omp::avg_pool_forward(d, x, y);
  } else {
    serial::avg_pool_forward(d, x, y);
  }
}

void avg_pool_backward_input(const ConvDims& d, const real* dy, real* dx) {
  if (active_backend() == Backend::openmp) {
    omp::avg_pool_backward_input(d, dy, dx);
  } else {
    serial::avg_pool_backward_input(d, dy, dx);
  }
}

void max_pool2_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y,
                       int32_t* argmax) {
  if (active_backend() == Backend::openmp) {
    omp::max_pool2_forward(n, c, h, w, x, y, argmax);
  } else {
    serial::max_pool2_forward(n, c, h, w, x, y, argmax);
  }
}

void max_pool2_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                              const int32_t* argmax, real* dx) {
  if (active_backend() == Backend::openmp) {
    omp::max_pool2_backward_input(n, c, h, w, dy, argmax, dx);
  } else {
    serial::max_pool2_backward_input(n, c, h, w, dy, argmax, dx);
  }
}

void bilinear2x_forward(int64_t n, int64_t c, int64_t h, int64_t w, const real* x, real* y) {
  if (active_backend() == Backend::openmp) {
    omp::bilinear2x_forward(n, c, h, w, x, y);
  } else {
    serial::bilinear2x_forward(n, c, h, w, x, y);
  }
}

void bilinear2x_backward_input(int64_t n, int64_t c, int64_t h, int64_t w, const real* dy,
                               real* dx) {
  if (active_backend() == Backend::openmp) {
    omp::bilinear2x_backward_input(n, c, h, w, dy, dx);
  } else {
    serial::bilinear2x_backward_input(n, c, h, w, dy, dx);
  }
}

}  // namespace recal::kernels
