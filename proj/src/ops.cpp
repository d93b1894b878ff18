#include "recal/ops.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "recal/kernels.hpp"

namespace recal {

namespace {

using detail::Node;

kernels::ConvDims conv_dims(const Shape4& in, const ConvSpec& s) {
  if (s.out_channels < 1) {
    throw ConfigError(str_cat("conv2d: out_channels must be >= 1, got ", s.out_channels));
  }
  if (s.kh < 1 || s.kw < 1 || s.sh < 1 || s.sw < 1 || s.ph < 0 || s.pw < 0 ||
      s.groups < 1) {
    throw ConfigError(str_cat("conv2d: invalid geometry kernel ", s.kh, "x", s.kw,
                              " stride ", s.sh, "x", s.sw, " padding ", s.ph, "x", s.pw,
                              " groups ", s.groups));
  }
  if (in.c % s.groups != 0) {
    throw ConfigError(str_cat("conv2d: input channels ", in.c,
                              " not divisible by groups ", s.groups));
  }
  if (s.out_channels % s.groups != 0) {
    throw ConfigError(str_cat("conv2d: out_channels ", s.out_channels,
                              " not divisible by groups ", s.groups));
  }
  const int64_t hnum = in.h + 2 * s.ph - s.kh;
  const int64_t wnum = in.w + 2 * s.pw - s.kw;
  if (hnum < 0) {
    throw ConfigError(str_cat("conv2d: kernel rows ", s.kh, " exceed padded input rows ",
                              in.h + 2 * s.ph));
  }
  if (wnum < 0) {
    throw ConfigError(str_cat("conv2d: kernel cols ", s.kw, " exceed padded input cols ",
                              in.w + 2 * s.pw));
  }
  kernels::ConvDims d;
  d.n = in.n;
  d.cin = in.c;
  d.hin = in.h;
  d.win = in.w;
  d.cout = s.out_channels;
  d.hout = hnum / s.sh + 1;
  d.wout = wnum / s.sw + 1;
  d.kh = s.kh;
  d.kw = s.kw;
  d.ph = s.ph;
  d.pw = s.pw;
  d.sh = s.sh;
  d.sw = s.sw;
  d.groups = s.groups;
  return d;
}

void check_param_shape(const char* op, const char* name, const Tensor4& t,
                       const Shape4& want) {
  if (!t.defined()) {
    throw ConfigError(str_cat(op, ": ", name, " tensor is undefined"));
  }
  if (!(t.shape() == want)) {
    throw ConfigError(str_cat(op, ": ", name, " shape ", to_string(t.shape()),
                              " does not match expected ", to_string(want)));
  }
}

}  // namespace

int64_t ConvSpec::weight_count(int64_t in_channels) const {
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError(str_cat("ConvSpec: groups ", groups, " must divide in_channels ",
                              in_channels, " and out_channels ", out_channels));
  }
  return kh * kw * in_channels * out_channels / groups;
}

Shape4 ConvSpec::weight_shape(int64_t in_channels) const {
  weight_count(in_channels);  // validates divisibility
  return Shape4{out_channels, in_channels / groups, kh, kw};
}

Tensor4 conv2d(const Tensor4& x, const ConvSpec& spec, const Tensor4& weight,
               const Tensor4& bias) {
  const kernels::ConvDims d = conv_dims(x.shape(), spec);
  check_param_shape("conv2d", "weight", weight, spec.weight_shape(x.shape().c));
  if (spec.has_bias) {
    check_param_shape("conv2d", "bias", bias, spec.bias_shape());
  } else if (bias.defined()) {
    throw ConfigError("conv2d: bias tensor given but spec.has_bias is false");
  }

  std::vector<Tensor4> parents{x, weight};
  if (spec.has_bias) parents.push_back(bias);
  const bool with_bias = spec.has_bias;

  Tensor4 y = detail::make_op_node(
      Shape4{d.n, d.cout, d.hout, d.wout}, std::move(parents), [d, with_bias](Node& self) {
        const real* dy = self.grad.data();
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        if (xn.requires_grad) {
          kernels::conv2d_backward_input(d, dy, wn.value.data(),
                                         xn.ensure_grad().data());
        }
        Node* bn = with_bias ? self.parents[2].get() : nullptr;
        if (wn.requires_grad) {
          real* db = (bn && bn->requires_grad) ? bn->ensure_grad().data() : nullptr;
          kernels::conv2d_backward_weights(d, xn.value.data(), dy,
                                           wn.ensure_grad().data(), db);
        } else if (bn && bn->requires_grad) {
          real* db = bn->ensure_grad().data();
          for (int64_t n = 0; n < d.n; ++n) {
            for (int64_t oc = 0; oc < d.cout; ++oc) {
              const real* plane = dy + (n * d.cout + oc) * d.hout * d.wout;
              real acc = 0;
              for (int64_t i = 0; i < d.hout * d.wout; ++i) acc += plane[i];
              db[oc] += acc;
            }
          }
        }
      });
  kernels::conv2d_forward(d, x.values().data(), weight.values().data(),
                          spec.has_bias ? bias.values().data() : nullptr,
                          y.values_mut().data());
  return y;
}

Tensor4 avg_pool(const Tensor4& x, int64_t kh, int64_t kw, int64_t stride) {
  if (kh % 2 == 0 || kw % 2 == 0 || kh < 1 || kw < 1) {
    throw ConfigError(str_cat("avg_pool: same-size padding requires an odd kernel, got ",
                              kh, "x", kw));
  }
  if (stride < 1) throw ConfigError(str_cat("avg_pool: stride must be >= 1, got ", stride));
  const Shape4& in = x.shape();
  if (in.h < 1 || in.w < 1) {
    throw ConfigError(str_cat("avg_pool: empty spatial extent in ", to_string(in)));
  }
  kernels::ConvDims d;
  d.n = in.n;
  d.cin = in.c;
  d.cout = in.c;
  d.hin = in.h;
  d.win = in.w;
  d.kh = kh;
  d.kw = kw;
  d.ph = (kh - 1) / 2;
  d.pw = (kw - 1) / 2;
  d.sh = stride;
  d.sw = stride;
  d.hout = (in.h - 1) / stride + 1;
  d.wout = (in.w - 1) / stride + 1;

  Tensor4 y = detail::make_op_node(Shape4{d.n, d.cin, d.hout, d.wout}, {x}, [d](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    kernels::avg_pool_backward_input(d, self.grad.data(), xn.ensure_grad().data());
  });
  kernels::avg_pool_forward(d, x.values().data(), y.values_mut().data());
  return y;
}

Tensor4 global_avg_pool(const Tensor4& x) {
  const Shape4& in = x.shape();
  if (in.h < 1 || in.w < 1) {
    throw ConfigError(str_cat("global_avg_pool: empty spatial extent in ", to_string(in)));
  }
  const int64_t hw = in.h * in.w;
  const real inv = real(1) / static_cast<real>(hw);

  Tensor4 y =
      detail::make_op_node(Shape4{in.n, in.c, 1, 1}, {x}, [hw, inv](Node& self) {
        Node& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        real* dx = xn.ensure_grad().data();
        const real* dy = self.grad.data();
        const int64_t planes = self.shape.n * self.shape.c;
        for (int64_t p = 0; p < planes; ++p) {
          const real g = dy[p] * inv;
          real* dxp = dx + p * hw;
          for (int64_t i = 0; i < hw; ++i) dxp[i] += g;
        }
      });
  const real* xv = x.values().data();
  real* yv = y.values_mut().data();
  const int64_t planes = in.n * in.c;
  for (int64_t p = 0; p < planes; ++p) {
    const real* xp = xv + p * hw;
    real acc = 0;
    for (int64_t i = 0; i < hw; ++i) acc += xp[i];
    yv[p] = acc * inv;
  }
  return y;
}

Tensor4 max_pool2(const Tensor4& x) {
  const Shape4& in = x.shape();
  if (in.h < 2 || in.w < 2 || in.h % 2 != 0 || in.w % 2 != 0) {
    throw ConfigError(str_cat("max_pool2: spatial dims must be even and >= 2, got ",
                              to_string(in)));
  }
  const int64_t n = in.n, c = in.c, h = in.h, w = in.w;
  Tensor4 y = detail::make_op_node(
      Shape4{n, c, h / 2, w / 2}, {x}, [n, c, h, w](Node& self) {
        Node& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        kernels::max_pool2_backward_input(n, c, h, w, self.grad.data(), self.aux.data(),
                                          xn.ensure_grad().data());
      });
  auto node = y.node();
  node->aux.resize(static_cast<size_t>(n * c * (h / 2) * (w / 2)));
  kernels::max_pool2_forward(n, c, h, w, x.values().data(), y.values_mut().data(),
                             node->aux.data());
  return y;
}

Tensor4 bilinear_upsample2(const Tensor4& x) {
  const Shape4& in = x.shape();
  if (in.h < 1 || in.w < 1) {
    throw ConfigError(str_cat("bilinear_upsample2: empty spatial extent in ",
                              to_string(in)));
  }
  const int64_t n = in.n, c = in.c, h = in.h, w = in.w;
  Tensor4 y = detail::make_op_node(
      Shape4{n, c, 2 * h, 2 * w}, {x}, [n, c, h, w](Node& self) {
        Node& xn = *self.parents[0];
        if (!xn.requires_grad) return;
        kernels::bilinear2x_backward_input(n, c, h, w, self.grad.data(),
                                           xn.ensure_grad().data());
      });
  kernels::bilinear2x_forward(n, c, h, w, x.values().data(), y.values_mut().data());
  return y;
}

Tensor4 relu(const Tensor4& x) {
  Tensor4 y = detail::make_op_node(x.shape(), {x}, [](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    real* dx = xn.ensure_grad().data();
    const real* dy = self.grad.data();
    const real* xv = xn.value.data();
    const int64_t m = self.shape.numel();
    for (int64_t i = 0; i < m; ++i) {
      if (xv[i] > 0) dx[i] += dy[i];
    }
  });
  const real* xv = x.values().data();
  real* yv = y.values_mut().data();
  const int64_t m = x.numel();
  for (int64_t i = 0; i < m; ++i) yv[i] = xv[i] > 0 ? xv[i] : real(0);
  return y;
}

Tensor4 sigmoid(const Tensor4& x) {
  Tensor4 y = detail::make_op_node(x.shape(), {x}, [](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    real* dx = xn.ensure_grad().data();
    const real* dy = self.grad.data();
    const real* yv = self.value.data();
    const int64_t m = self.shape.numel();
    for (int64_t i = 0; i < m; ++i) {
      dx[i] += dy[i] * yv[i] * (real(1) - yv[i]);
    }
  });
  const real* xv = x.values().data();
  real* yv = y.values_mut().data();
  const int64_t m = x.numel();
  for (int64_t i = 0; i < m; ++i) {
    const real v = xv[i];
    if (v >= 0) {
      yv[i] = real(1) / (real(1) + std::exp(-v));
    } else {
      const real e = std::exp(v);
      yv[i] = e / (real(1) + e);
    }
  }
  return y;
}

namespace {
enum class MulMode { same, channel_broadcast, spatial_broadcast };
}

Tensor4 elementwise_mul(const Tensor4& a, const Tensor4& b) {
  const Shape4& sa = a.shape();
  const Shape4& sb = b.shape();
  MulMode mode;
  if (sa == sb) {
    mode = MulMode::same;
  } else if (sb.n == sa.n && sb.c == 1 && sb.h == sa.h && sb.w == sa.w) {
    mode = MulMode::channel_broadcast;
  } else if (sb.n == sa.n && sb.c == sa.c && sb.h == 1 && sb.w == 1) {
    mode = MulMode::spatial_broadcast;
  } else {
    throw ConfigError(str_cat("elementwise_mul: shapes ", to_string(sa), " and ",
                              to_string(sb), " are not multiplication-compatible"));
  }
  const int64_t n = sa.n, c = sa.c, hw = sa.h * sa.w;

  Tensor4 y = detail::make_op_node(sa, {a, b}, [mode, n, c, hw](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const real* dy = self.grad.data();
    const real* av = an.value.data();
    const real* bv = bn.value.data();
    real* da = an.requires_grad ? an.ensure_grad().data() : nullptr;
    real* db = bn.requires_grad ? bn.ensure_grad().data() : nullptr;
    if (!da && !db) return;
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t ic = 0; ic < c; ++ic) {
        const int64_t base = (in * c + ic) * hw;
        int64_t bbase;
        switch (mode) {
          case MulMode::same: bbase = base; break;
          case MulMode::channel_broadcast: bbase = in * hw; break;
          default: bbase = in * c + ic; break;
        }
        for (int64_t i = 0; i < hw; ++i) {
          const int64_t bi = (mode == MulMode::spatial_broadcast) ? bbase : bbase + i;
          if (da) da[base + i] += dy[base + i] * bv[bi];
          if (db) db[bi] += dy[base + i] * av[base + i];
        }
      }
    }
  });
  const real* av = a.values().data();
  const real* bv = b.values().data();
  real* yv = y.values_mut().data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ic = 0; ic < c; ++ic) {
      const int64_t base = (in * c + ic) * hw;
      int64_t bbase;
      switch (mode) {
        case MulMode::same: bbase = base; break;
        case MulMode::channel_broadcast: bbase = in * hw; break;
        default: bbase = in * c + ic; break;
      }
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t bi = (mode == MulMode::spatial_broadcast) ? bbase : bbase + i;
        yv[base + i] = av[base + i] * bv[bi];
      }
    }
  }
  return y;
}

Tensor4 elementwise_max(const Tensor4& a, const Tensor4& b) {
  if (!(a.shape() == b.shape())) {
    throw ConfigError(str_cat("elementwise_max: shapes ", to_string(a.shape()), " and ",
                              to_string(b.shape()), " differ"));
  }
  Tensor4 y = detail::make_op_node(a.shape(), {a, b}, [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const real* dy = self.grad.data();
    const real* av = an.value.data();
    const real* bv = bn.value.data();
    real* da = an.requires_grad ? an.ensure_grad().data() : nullptr;
    real* db = bn.requires_grad ? bn.ensure_grad().data() : nullptr;
    const int64_t m = self.shape.numel();
    for (int64_t i = 0; i < m; ++i) {
      if (av[i] >= bv[i]) {
        if (da) da[i] += dy[i];
      } else if (db) {
        db[i] += dy[i];
      }
    }
  });
  const real* av = a.values().data();
  const real* bv = b.values().data();
  real* yv = y.values_mut().data();
  const int64_t m = a.numel();
  for (int64_t i = 0; i < m; ++i) yv[i] = av[i] >= bv[i] ? av[i] : bv[i];
  return y;
}

Tensor4 channel_concat(const Tensor4& a, const Tensor4& b) {
  const Shape4& sa = a.shape();
  const Shape4& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ConfigError(str_cat("channel_concat: shapes ", to_string(sa), " and ",
                              to_string(sb), " differ outside the channel axis"));
  }
  const int64_t n = sa.n, ca = sa.c, cb = sb.c, hw = sa.h * sa.w;
  Tensor4 y = detail::make_op_node(
      Shape4{n, ca + cb, sa.h, sa.w}, {a, b}, [n, ca, cb, hw](Node& self) {
        Node& an = *self.parents[0];
        Node& bn = *self.parents[1];
        const real* dy = self.grad.data();
        const int64_t c = ca + cb;
        if (an.requires_grad) {
          real* da = an.ensure_grad().data();
          for (int64_t in = 0; in < n; ++in) {
            const real* src = dy + in * c * hw;
            real* dst = da + in * ca * hw;
            for (int64_t i = 0; i < ca * hw; ++i) dst[i] += src[i];
          }
        }
        if (bn.requires_grad) {
          real* db = bn.ensure_grad().data();
          for (int64_t in = 0; in < n; ++in) {
            const real* src = dy + (in * c + ca) * hw;
            real* dst = db + in * cb * hw;
            for (int64_t i = 0; i < cb * hw; ++i) dst[i] += src[i];
          }
        }
      });
  const real* av = a.values().data();
  const real* bv = b.values().data();
  real* yv = y.values_mut().data();
  const int64_t c = ca + cb;
  for (int64_t in = 0; in < n; ++in) {
    real* dst = yv + in * c * hw;
    const real* pa = av + in * ca * hw;
    for (int64_t i = 0; i < ca * hw; ++i) dst[i] = pa[i];
    const real* pb = bv + in * cb * hw;
    real* dstb = dst + ca * hw;
    for (int64_t i = 0; i < cb * hw; ++i) dstb[i] = pb[i];
  }
  return y;
}

Tensor4 interleave_channels(const Tensor4& ch, const Tensor4& re) {
  if (!(ch.shape() == re.shape())) {
    throw ConfigError(str_cat("interleave_channels: shapes ", to_string(ch.shape()),
                              " and ", to_string(re.shape()), " differ"));
  }
  const Shape4& in = ch.shape();
  const int64_t n = in.n, c = in.c, hw = in.h * in.w;
  Tensor4 y = detail::make_op_node(
      Shape4{n, 2 * c, in.h, in.w}, {ch, re}, [n, c, hw](Node& self) {
        Node& cn = *self.parents[0];
        Node& rn = *self.parents[1];
        const real* dy = self.grad.data();
        real* dc = cn.requires_grad ? cn.ensure_grad().data() : nullptr;
        real* dr = rn.requires_grad ? rn.ensure_grad().data() : nullptr;
        for (int64_t in_ = 0; in_ < n; ++in_) {
          for (int64_t p = 0; p < c; ++p) {
            const real* even = dy + ((in_ * 2 * c + 2 * p) * hw);
            const real* odd = dy + ((in_ * 2 * c + 2 * p + 1) * hw);
            const int64_t base = (in_ * c + p) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              if (dc) dc[base + i] += even[i];
              if (dr) dr[base + i] += odd[i];
            }
          }
        }
      });
  const real* cv = ch.values().data();
  const real* rv = re.values().data();
  real* yv = y.values_mut().data();
  for (int64_t in_ = 0; in_ < n; ++in_) {
    for (int64_t p = 0; p < c; ++p) {
      const int64_t base = (in_ * c + p) * hw;
      real* even = yv + ((in_ * 2 * c + 2 * p) * hw);
      real* odd = yv + ((in_ * 2 * c + 2 * p + 1) * hw);
      for (int64_t i = 0; i < hw; ++i) {
        even[i] = cv[base + i];
        odd[i] = rv[base + i];
      }
    }
  }
  return y;
}

Tensor4 batch_norm(const Tensor4& x, const Tensor4& scale, const Tensor4& shift,
                   Tensor4& running_mean, Tensor4& running_var, bool training,
                   real momentum, real eps) {
  const Shape4& in = x.shape();
  const Shape4 pshape{1, in.c, 1, 1};
  check_param_shape("batch_norm", "scale", scale, pshape);
  check_param_shape("batch_norm", "shift", shift, pshape);
  check_param_shape("batch_norm", "running_mean", running_mean, pshape);
  check_param_shape("batch_norm", "running_var", running_var, pshape);
  const int64_t n = in.n, c = in.c, hw = in.h * in.w;
  const int64_t m = n * hw;
  if (training && m < 2) {
    throw ConfigError(str_cat("batch_norm: training mode needs N*H*W >= 2, got ", m,
                              " for shape ", to_string(in)));
  }

  std::vector<real> mean(static_cast<size_t>(c), real(0));
  std::vector<real> inv_std(static_cast<size_t>(c), real(0));
  const real* xv = x.values().data();
  if (training) {
    const real inv_m = real(1) / static_cast<real>(m);
    for (int64_t ic = 0; ic < c; ++ic) {
      real s = 0;
      for (int64_t in_ = 0; in_ < n; ++in_) {
        const real* plane = xv + (in_ * c + ic) * hw;
        for (int64_t i = 0; i < hw; ++i) s += plane[i];
      }
      const real mu = s * inv_m;
      real v = 0;
      for (int64_t in_ = 0; in_ < n; ++in_) {
        const real* plane = xv + (in_ * c + ic) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const real d = plane[i] - mu;
          v += d * d;
        }
      }
      const real var = v * inv_m;
      mean[static_cast<size_t>(ic)] = mu;
      inv_std[static_cast<size_t>(ic)] = real(1) / std::sqrt(var + eps);
      // Running stats carry the unbiased variance.
      const real var_unbiased = v / static_cast<real>(m - 1);
      real* rm = running_mean.values_mut().data();
      real* rv = running_var.values_mut().data();
      rm[ic] = (real(1) - momentum) * rm[ic] + momentum * mu;
      rv[ic] = (real(1) - momentum) * rv[ic] + momentum * var_unbiased;
    }
  } else {
    const real* rm = running_mean.values().data();
    const real* rv = running_var.values().data();
    for (int64_t ic = 0; ic < c; ++ic) {
      mean[static_cast<size_t>(ic)] = rm[ic];
      inv_std[static_cast<size_t>(ic)] = real(1) / std::sqrt(rv[ic] + eps);
    }
  }

  Tensor4 y = detail::make_op_node(
      in, {x, scale, shift},
      [n, c, hw, m, training, mean, inv_std](Node& self) {
        Node& xn = *self.parents[0];
        Node& scn = *self.parents[1];
        Node& shn = *self.parents[2];
        const real* dy = self.grad.data();
        const real* xv = xn.value.data();
        const real* sc = scn.value.data();
        real* dx = xn.requires_grad ? xn.ensure_grad().data() : nullptr;
        real* dsc = scn.requires_grad ? scn.ensure_grad().data() : nullptr;
        real* dsh = shn.requires_grad ? shn.ensure_grad().data() : nullptr;
        const real inv_m = real(1) / static_cast<real>(m);
        for (int64_t ic = 0; ic < c; ++ic) {
          const real mu = mean[static_cast<size_t>(ic)];
          const real is = inv_std[static_cast<size_t>(ic)];
          real s1 = 0, s2 = 0;
          for (int64_t in_ = 0; in_ < n; ++in_) {
            const int64_t base = (in_ * c + ic) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              const real g = dy[base + i];
              s1 += g;
              s2 += g * (xv[base + i] - mu) * is;
            }
          }
          if (dsc) dsc[ic] += s2;
          if (dsh) dsh[ic] += s1;
          if (!dx) continue;
          const real k = sc[ic] * is;
          if (training) {
            for (int64_t in_ = 0; in_ < n; ++in_) {
              const int64_t base = (in_ * c + ic) * hw;
              for (int64_t i = 0; i < hw; ++i) {
                const real xhat = (xv[base + i] - mu) * is;
                dx[base + i] += k * (dy[base + i] - s1 * inv_m - xhat * s2 * inv_m);
              }
            }
          } else {
            for (int64_t in_ = 0; in_ < n; ++in_) {
              const int64_t base = (in_ * c + ic) * hw;
              for (int64_t i = 0; i < hw; ++i) dx[base + i] += k * dy[base + i];
            }
          }
        }
      });
  real* yv = y.values_mut().data();
  const real* sc = scale.values().data();
  const real* sh = shift.values().data();
  for (int64_t in_ = 0; in_ < n; ++in_) {
    for (int64_t ic = 0; ic < c; ++ic) {
      const int64_t base = (in_ * c + ic) * hw;
      const real mu = mean[static_cast<size_t>(ic)];
      const real is = inv_std[static_cast<size_t>(ic)];
      const real a = sc[ic] * is;
      const real b = sh[ic] - a * mu;
      for (int64_t i = 0; i < hw; ++i) yv[base + i] = a * xv[base + i] + b;
    }
  }
  return y;
}

Tensor4 layer_norm(const Tensor4& x, const Tensor4& scale, const Tensor4& shift,
                   real eps) {
  const Shape4& in = x.shape();
  const Shape4 pshape{1, in.c, 1, 1};
  check_param_shape("layer_norm", "scale", scale, pshape);
  check_param_shape("layer_norm", "shift", shift, pshape);
  const int64_t n = in.n, c = in.c, hw = in.h * in.w;
  const int64_t m = c * hw;
  if (m < 1) {
    throw ConfigError(str_cat("layer_norm: empty sample in shape ", to_string(in)));
  }

  std::vector<real> mean(static_cast<size_t>(n), real(0));
  std::vector<real> inv_std(static_cast<size_t>(n), real(0));
  const real* xv = x.values().data();
  const real inv_m = real(1) / static_cast<real>(m);
  for (int64_t in_ = 0; in_ < n; ++in_) {
    const real* sample = xv + in_ * m;
    real s = 0;
    for (int64_t i = 0; i < m; ++i) s += sample[i];
    const real mu = s * inv_m;
    real v = 0;
    for (int64_t i = 0; i < m; ++i) {
      const real d = sample[i] - mu;
      v += d * d;
    }
    mean[static_cast<size_t>(in_)] = mu;
    inv_std[static_cast<size_t>(in_)] = real(1) / std::sqrt(v * inv_m + eps);
  }

  Tensor4 y = detail::make_op_node(
      in, {x, scale, shift}, [n, c, hw, m, mean, inv_std](Node& self) {
        Node& xn = *self.parents[0];
        Node& scn = *self.parents[1];
        Node& shn = *self.parents[2];
        const real* dy = self.grad.data();
        const real* xv = xn.value.data();
        const real* sc = scn.value.data();
        real* dx = xn.requires_grad ? xn.ensure_grad().data() : nullptr;
        real* dsc = scn.requires_grad ? scn.ensure_grad().data() : nullptr;
        real* dsh = shn.requires_grad ? shn.ensure_grad().data() : nullptr;
        const real inv_m = real(1) / static_cast<real>(m);
        for (int64_t in_ = 0; in_ < n; ++in_) {
          const real mu = mean[static_cast<size_t>(in_)];
          const real is = inv_std[static_cast<size_t>(in_)];
          const real* sample = xv + in_ * m;
          const real* gy = dy + in_ * m;
          real s1 = 0, s2 = 0;
          for (int64_t ic = 0; ic < c; ++ic) {
            const real k = sc[ic];
            for (int64_t i = 0; i < hw; ++i) {
              const int64_t j = ic * hw + i;
              const real g = gy[j] * k;
              s1 += g;
              s2 += g * (sample[j] - mu) * is;
            }
          }
          if (dx) {
            real* dxs = dx + in_ * m;
            for (int64_t ic = 0; ic < c; ++ic) {
              const real k = sc[ic];
              for (int64_t i = 0; i < hw; ++i) {
                const int64_t j = ic * hw + i;
                const real xhat = (sample[j] - mu) * is;
                dxs[j] += is * (gy[j] * k - s1 * inv_m - xhat * s2 * inv_m);
              }
            }
          }
          if (dsc || dsh) {
            for (int64_t ic = 0; ic < c; ++ic) {
              real a = 0, b = 0;
              for (int64_t i = 0; i < hw; ++i) {
                const int64_t j = ic * hw + i;
                a += gy[j] * (sample[j] - mu) * is;
                b += gy[j];
              }
              if (dsc) dsc[ic] += a;
              if (dsh) dsh[ic] += b;
            }
          }
        }
      });
  real* yv = y.values_mut().data();
  const real* sc = scale.values().data();
  const real* sh = shift.values().data();
  for (int64_t in_ = 0; in_ < n; ++in_) {
    const real mu = mean[static_cast<size_t>(in_)];
    const real is = inv_std[static_cast<size_t>(in_)];
    const real* sample = xv + in_ * m;
    real* out = yv + in_ * m;
    for (int64_t ic = 0; ic < c; ++ic) {
      const real a = sc[ic] * is;
      const real b = sh[ic] - a * mu;
      for (int64_t i = 0; i < hw; ++i) {
        const int64_t j = ic * hw + i;
        out[j] = a * sample[j] + b;
      }
    }
  }
  return y;
}

Tensor4 sum_all(const Tensor4& x) {
  Tensor4 y = detail::make_op_node(Shape4{1, 1, 1, 1}, {x}, [](Node& self) {
    Node& xn = *self.parents[0];
    if (!xn.requires_grad) return;
    real* dx = xn.ensure_grad().data();
    const real g = self.grad[0];
    const int64_t m = xn.shape.numel();
    for (int64_t i = 0; i < m; ++i) dx[i] += g;
  });
  const real* xv = x.values().data();
  real acc = 0;
  const int64_t m = x.numel();
  for (int64_t i = 0; i < m; ++i) acc += xv[i];
  y.values_mut()[0] = acc;
  return y;
}

Tensor4 bce_log_dice_loss(const Tensor4& pred, const Tensor4& truth, real lambda,
                          real sigma) {
  if (!(pred.shape() == truth.shape())) {
    throw ConfigError(str_cat("loss: prediction shape ", to_string(pred.shape()),
                              " does not match truth shape ", to_string(truth.shape())));
  }
  if (lambda < 0 || lambda > 1) {
    throw ConfigError(str_cat("loss: lambda must lie in [0,1], got ", lambda));
  }
  if (!(sigma > 0)) {
    throw ConfigError(str_cat("loss: sigma must be positive, got ", sigma));
  }
  const int64_t m = pred.numel();
  const real* pv = pred.values().data();
  const real* tv = truth.values().data();
  real bce = 0, s_tp = 0, s_t = 0, s_p = 0;
  for (int64_t i = 0; i < m; ++i) {
    const real p = pv[i];
    const real t = tv[i];
    if (t != 0 && t != 1) {
      throw ConfigError(str_cat("loss: truth value ", t, " at flat index ", i,
                                " is not binary"));
    }
    // The open-interval domain check, without silent clamping. A prediction
    // exactly on the boundary is admitted only when it matches the truth,
    // where the cross-entropy limit is 0 and the derivative stays finite.
    if (!(p >= 0 && p <= 1) || (p == 0 && t == 1) || (p == 1 && t == 0)) {
      throw NumericError(str_cat("loss: prediction ", p, " at flat index ", i,
                                 " lies outside (0,1)"));
    }
    bce -= t == 1 ? std::log(p) : std::log(real(1) - p);
    s_tp += t * p;
    s_t += t;
    s_p += p;
  }
  bce /= static_cast<real>(m);
  const real num = 2 * s_tp + sigma;
  const real den = s_t + s_p + sigma;
  const real value = lambda * bce - (real(1) - lambda) * std::log(num / den);

  Tensor4 y = detail::make_op_node(
      Shape4{1, 1, 1, 1}, {pred, truth},
      [m, lambda, num, den](Node& self) {
        Node& pn = *self.parents[0];
        if (!pn.requires_grad) return;
        const Node& tn = *self.parents[1];
        const real g = self.grad[0];
        const real* pv = pn.value.data();
        const real* tv = tn.value.data();
        real* dp = pn.ensure_grad().data();
        const real inv_m = real(1) / static_cast<real>(m);
        const real w_dice = real(1) - lambda;
        for (int64_t i = 0; i < m; ++i) {
          const real p = pv[i];
          const real t = tv[i];
          const real d_bce =
              (t == 1 ? -real(1) / p : real(1) / (real(1) - p)) * inv_m;
          const real d_dice = 2 * t / num - real(1) / den;
          dp[i] += g * (lambda * d_bce - w_dice * d_dice);
        }
      });
  y.values_mut()[0] = value;
  return y;
}

}  // namespace recal
