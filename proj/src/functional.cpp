#include "dfd/functional.hpp"

#include <cmath>

#include "gemm.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

namespace {

struct ConvDims {
  std::size_t n, c, h, w;
  std::size_t o, kh, kw;
  std::size_t oh, ow;
  std::size_t groups, cg, og;  // channels per group in/out
  std::size_t stride, pad;
  std::size_t k() const { return cg * kh * kw; }
  std::size_t spatial() const { return oh * ow; }
};

// cols: [cg*kh*kw, oh*ow] for one sample and one group.
void im2col(const Real* x, const ConvDims& d, std::size_t group, Real* cols) {
  const std::size_t sp = d.spatial();
  for (std::size_t ci = 0; ci < d.cg; ++ci) {
    const Real* plane = x + (group * d.cg + ci) * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        Real* row = cols + ((ci * d.kh + ky) * d.kw + kx) * sp;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) -
                                    static_cast<std::ptrdiff_t>(d.pad);
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * d.stride + kx) -
                                      static_cast<std::ptrdiff_t>(d.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(d.h) &&
                                ix < static_cast<std::ptrdiff_t>(d.w);
            row[oy * d.ow + ox] = inside ? plane[iy * static_cast<std::ptrdiff_t>(d.w) + ix] : Real(0);
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, const ConvDims& d, std::size_t group, Real* gx) {
  const std::size_t sp = d.spatial();
  for (std::size_t ci = 0; ci < d.cg; ++ci) {
    Real* plane = gx + (group * d.cg + ci) * d.h * d.w;
    for (std::size_t ky = 0; ky < d.kh; ++ky) {
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const Real* row = cols + ((ci * d.kh + ky) * d.kw + kx) * sp;
        for (std::size_t oy = 0; oy < d.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * d.stride + ky) -
                                    static_cast<std::ptrdiff_t>(d.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * d.stride + kx) -
                                      static_cast<std::ptrdiff_t>(d.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
            plane[iy * static_cast<std::ptrdiff_t>(d.w) + ix] += row[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.extent(1)) {
    throw ShapeError("linear input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t in = weight.extent(1), out_f = weight.extent(0);
  if (bias && (bias->rank() != 1 || bias->extent(0) != out_f)) {
    throw ShapeError("linear bias shape " + shape_str(bias->shape()));
  }
  const std::size_t rows = x.size() / in;
  std::vector<Real> out(rows * out_f, Real(0));
  detail::gemm_nt(rows, out_f, in, x.data().data(), weight.data().data(), out.data());
  if (bias) {
    auto bv = bias->data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_f; ++j) out[r * out_f + j] += bv[j];
    }
  }
  Shape shape = x.shape();
  shape.back() = out_f;
  Tensor b = bias ? *bias : Tensor::zeros({0});
  return make_result(std::move(shape), std::move(out), {&x, &weight, &b},
                     [x, weight, b, rows, in, out_f](const Tensor& o) mutable {
                       const Real* g = o.grad().data();
                       if (x.requires_grad()) {
                         detail::gemm_nn(rows, in, out_f, g, weight.data().data(),
                                         x.mutable_grad().data());
                       }
                       if (weight.requires_grad()) {
                         detail::gemm_tn(out_f, in, rows, g, x.data().data(),
                                         weight.mutable_grad().data());
                       }
                       if (b.requires_grad() && b.size() == out_f) {
                         auto gb = b.mutable_grad();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < out_f; ++j) gb[j] += g[r * out_f + j];
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              const Conv2dGeometry& geometry) {
  if (x.rank() != 4 || weight.rank() != 4) {
    throw ShapeError("conv2d expects [N,C,H,W] input and [O,C/g,kh,kw] weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(weight.shape()));
  }
  ConvDims d{};
  d.n = x.extent(0);
  d.c = x.extent(1);
  d.h = x.extent(2);
  d.w = x.extent(3);
  d.o = weight.extent(0);
  d.kh = weight.extent(2);
  d.kw = weight.extent(3);
  d.groups = geometry.groups;
  d.stride = geometry.stride;
  d.pad = geometry.padding;
  if (d.groups == 0 || d.stride == 0 || d.c % d.groups != 0 || d.o % d.groups != 0) {
    throw ShapeError("conv2d channels " + std::to_string(d.c) + "->" + std::to_string(d.o) +
                     " not divisible by groups " + std::to_string(d.groups));
  }
  d.cg = d.c / d.groups;
  d.og = d.o / d.groups;
  if (weight.extent(1) != d.cg) {
    throw ShapeError("conv2d weight " + shape_str(weight.shape()) + " does not match " +
                     std::to_string(d.c) + " input channels in " + std::to_string(d.groups) +
                     " groups");
  }
  if (bias && (bias->rank() != 1 || bias->extent(0) != d.o)) {
    throw ShapeError("conv2d bias shape " + shape_str(bias->shape()));
  }
  const std::size_t ph = d.h + 2 * d.pad, pw = d.w + 2 * d.pad;
  const bool ragged = (ph >= d.kh && (ph - d.kh) % d.stride != 0) ||
                      (pw >= d.kw && (pw - d.kw) % d.stride != 0);
  if (ph < d.kh || pw < d.kw || (ragged && !geometry.floor_extent)) {
    throw ShapeError("conv2d output extent is not integral for input " + shape_str(x.shape()) +
                     ", kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
                     ", stride " + std::to_string(d.stride) + ", padding " +
                     std::to_string(d.pad));
  }
  d.oh = (ph - d.kh) / d.stride + 1;
  d.ow = (pw - d.kw) / d.stride + 1;

  const std::size_t sp = d.spatial();
  const std::size_t in_plane = d.c * d.h * d.w;
  const std::size_t out_plane = d.o * sp;
  std::vector<Real> out(d.n * out_plane, Real(0));
  std::vector<Real> cols(d.k() * sp);
  const Real* wv = weight.data().data();
  for (std::size_t s = 0; s < d.n; ++s) {
    for (std::size_t g = 0; g < d.groups; ++g) {
      im2col(x.data().data() + s * in_plane, d, g, cols.data());
      Real* dst = out.data() + s * out_plane + g * d.og * sp;
      detail::gemm_nn(d.og, sp, d.k(), wv + g * d.og * d.k(), cols.data(), dst);
    }
    if (bias) {
      for (std::size_t oc = 0; oc < d.o; ++oc) {
        const Real b = bias->data()[oc];
        Real* dst = out.data() + s * out_plane + oc * sp;
        for (std::size_t i = 0; i < sp; ++i) dst[i] += b;
      }
    }
  }

  Tensor b = bias ? *bias : Tensor::zeros({0});
  return make_result(
      {d.n, d.o, d.oh, d.ow}, std::move(out), {&x, &weight, &b},
      [x, weight, b, d, has_bias = bias.has_value()](const Tensor& o) mutable {
        const std::size_t sp = d.spatial();
        const std::size_t in_plane = d.c * d.h * d.w;
        const std::size_t out_plane = d.o * sp;
        const Real* g = o.grad().data();
        std::vector<Real> cols(d.k() * sp);
        std::vector<Real> gcols(d.k() * sp);
        for (std::size_t s = 0; s < d.n; ++s) {
          for (std::size_t grp = 0; grp < d.groups; ++grp) {
            const Real* gout = g + s * out_plane + grp * d.og * sp;
            if (weight.requires_grad()) {
              im2col(x.data().data() + s * in_plane, d, grp, cols.data());
              detail::gemm_nt(d.og, d.k(), sp, gout, cols.data(),
                              weight.mutable_grad().data() + grp * d.og * d.k());
            }
            if (x.requires_grad()) {
              std::fill(gcols.begin(), gcols.end(), Real(0));
              detail::gemm_tn(d.k(), sp, d.og, weight.data().data() + grp * d.og * d.k(), gout,
                              gcols.data());
              col2im(gcols.data(), d, grp, x.mutable_grad().data() + s * in_plane);
            }
          }
          if (has_bias && b.requires_grad()) {
            auto gb = b.mutable_grad();
            for (std::size_t oc = 0; oc < d.o; ++oc) {
              const Real* src = g + s * out_plane + oc * sp;
              Real acc = 0;
              for (std::size_t i = 0; i < sp; ++i) acc += src[i];
              gb[oc] += acc;
            }
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  if (x.rank() < 1 || gamma.rank() != 1 || beta.shape() != gamma.shape() ||
      x.shape().back() != gamma.extent(0)) {
    throw ShapeError("layer_norm feature extent mismatch: input " + shape_str(x.shape()) +
                     ", gamma " + shape_str(gamma.shape()));
  }
  const std::size_t f = gamma.extent(0);
  const std::size_t rows = x.size() / f;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<Real> out(x.size());
  std::vector<Real> xhat(x.size());
  std::vector<Real> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * f;
    Real mu = 0;
    for (std::size_t i = 0; i < f; ++i) mu += row[i];
    mu /= static_cast<Real>(f);
    Real var = 0;
    for (std::size_t i = 0; i < f; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<Real>(f);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < f; ++i) {
      const Real h = (row[i] - mu) * is;
      xhat[r * f + i] = h;
      out[r * f + i] = h * gv[i] + bv[i];
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [x, gamma, beta, f, rows, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Tensor& o) mutable {
        auto g = o.grad();
        auto gv = gamma.data();
        if (gamma.requires_grad() || beta.requires_grad()) {
          auto gg = gamma.mutable_grad();
          auto gb = beta.mutable_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < f; ++i) {
              gg[i] += g[r * f + i] * xhat[r * f + i];
              gb[i] += g[r * f + i];
            }
          }
        }
        if (!x.requires_grad()) return;
        auto gx = x.mutable_grad();
        const Real inv_f = Real(1) / static_cast<Real>(f);
        for (std::size_t r = 0; r < rows; ++r) {
          Real sum_dh = 0, sum_dh_h = 0;
          for (std::size_t i = 0; i < f; ++i) {
            const Real dh = g[r * f + i] * gv[i];
            sum_dh += dh;
            sum_dh_h += dh * xhat[r * f + i];
          }
          for (std::size_t i = 0; i < f; ++i) {
            const Real dh = g[r * f + i] * gv[i];
            gx[r * f + i] +=
                inv_std[r] * (dh - sum_dh * inv_f - xhat[r * f + i] * sum_dh_h * inv_f);
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training) {
  if ((x.rank() != 2 && x.rank() != 4) || gamma.rank() != 1 || beta.shape() != gamma.shape() ||
      x.extent(1) != gamma.extent(0)) {
    throw ShapeError("batch_norm feature extent mismatch: input " + shape_str(x.shape()) +
                     ", gamma " + shape_str(gamma.shape()));
  }
  const std::size_t n = x.extent(0), c = x.extent(1);
  const std::size_t sp = x.rank() == 4 ? x.extent(2) * x.extent(3) : 1;
  const std::size_t count = n * sp;
  auto xv = x.data();
  std::vector<Real> mean(c, Real(0)), inv_std(c, Real(0));
  if (training) {
    if (count == 0) throw ShapeError("batch_norm on an empty batch");
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      Real mu = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const Real* p = xv.data() + (s * c + ch) * sp;
        for (std::size_t i = 0; i < sp; ++i) mu += p[i];
      }
      mu /= static_cast<Real>(count);
      Real var = 0;
      for (std::size_t s = 0; s < n; ++s) {
        const Real* p = xv.data() + (s * c + ch) * sp;
        for (std::size_t i = 0; i < sp; ++i) var += (p[i] - mu) * (p[i] - mu);
      }
      const Real biased = var / static_cast<Real>(count);
      const Real unbiased = count > 1 ? var / static_cast<Real>(count - 1) : biased;
      mean[ch] = mu;
      inv_std[ch] = Real(1) / std::sqrt(biased + state.eps);
      rm[ch] = (Real(1) - state.momentum) * rm[ch] + state.momentum * mu;
      rv[ch] = (Real(1) - state.momentum) * rv[ch] + state.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = Real(1) / std::sqrt(rv[ch] + state.eps);
    }
  }
  auto gv = gamma.data();
  auto bv = beta.data();
  std::vector<Real> xhat(x.size());
  std::vector<Real> out(x.size());
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        const Real h = (xv[base + i] - mean[ch]) * inv_std[ch];
        xhat[base + i] = h;
        out[base + i] = h * gv[ch] + bv[ch];
      }
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [x, gamma, beta, n, c, sp, count, training, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const Tensor& o) mutable {
        auto g = o.grad();
        auto gv = gamma.data();
        std::vector<Real> sum_g(c, Real(0)), sum_gh(c, Real(0));
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * sp;
            for (std::size_t i = 0; i < sp; ++i) {
              sum_g[ch] += g[base + i];
              sum_gh[ch] += g[base + i] * xhat[base + i];
            }
          }
        }
        if (gamma.requires_grad() || beta.requires_grad()) {
          auto gg = gamma.mutable_grad();
          auto gb = beta.mutable_grad();
          for (std::size_t ch = 0; ch < c; ++ch) {
            gg[ch] += sum_gh[ch];
            gb[ch] += sum_g[ch];
          }
        }
        if (!x.requires_grad()) return;
        auto gx = x.mutable_grad();
        const Real inv_count = Real(1) / static_cast<Real>(count);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (s * c + ch) * sp;
            const Real k = gv[ch] * inv_std[ch];
            for (std::size_t i = 0; i < sp; ++i) {
              if (training) {
                gx[base + i] += k * (g[base + i] - sum_g[ch] * inv_count -
                                     xhat[base + i] * sum_gh[ch] * inv_count);
              } else {
                gx[base + i] += k * g[base + i];
              }
            }
          }
        }
      });
}

Tensor avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw ShapeError("avg_pool2d expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  if (out_h == 0 || out_w == 0 || h % out_h != 0 || w % out_w != 0) {
    throw ShapeError("avg_pool2d output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " does not tile input " + shape_str(x.shape()));
  }
  const std::size_t th = h / out_h, tw = w / out_w;
  const Real inv = Real(1) / static_cast<Real>(th * tw);
  auto xv = x.data();
  std::vector<Real> out(n * c * out_h * out_w, Real(0));
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(p * out_h + y / th) * out_w + xx / tw] += xv[(p * h + y) * w + xx];
      }
    }
  }
  for (auto& v : out) v *= inv;
  return make_result({n, c, out_h, out_w}, std::move(out), {&x},
                     [x, n, c, h, w, out_h, out_w, th, tw, inv](const Tensor& o) mutable {
                       auto g = o.grad();
                       auto gx = x.mutable_grad();
                       for (std::size_t p = 0; p < n * c; ++p) {
                         for (std::size_t y = 0; y < h; ++y) {
                           for (std::size_t xx = 0; xx < w; ++xx) {
                             gx[(p * h + y) * w + xx] +=
                                 g[(p * out_h + y / th) * out_w + xx / tw] * inv;
                           }
                         }
                       }
                     });
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
