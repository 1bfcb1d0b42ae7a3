#include "dfd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemm.hpp"

namespace dfd {
inline namespace DFD_PRECISION_NS {

namespace {

void accumulate(const Tensor& target, std::span<const Real> delta) {
  if (!target.requires_grad()) return;
  auto g = target.mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// Splits `shape` around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<Real> out(m * n, Real(0));
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), {&a, &b}, [a, b, m, n, k](const Tensor& o) mutable {
    const Real* g = o.grad().data();
    if (a.requires_grad()) detail::gemm_nt(m, k, n, g, b.data().data(), a.mutable_grad().data());
    if (b.requires_grad()) detail::gemm_tn(k, n, m, a.data().data(), g, b.mutable_grad().data());
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0)) {
    throw ShapeError("bmm needs rank-3 operands with equal batch, got " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.extent(0), m = a.extent(1), k = a.extent(2);
  const std::size_t n = transpose_b ? b.extent(1) : b.extent(2);
  if ((transpose_b ? b.extent(2) : b.extent(1)) != k) {
    throw ShapeError("bmm inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<Real> out(batch * m * n, Real(0));
  for (std::size_t i = 0; i < batch; ++i) {
    const Real* ap = a.data().data() + i * m * k;
    const Real* bp = b.data().data() + i * k * n;
    Real* cp = out.data() + i * m * n;
    if (transpose_b) {
      detail::gemm_nt(m, n, k, ap, bp, cp);
    } else {
      detail::gemm_nn(m, n, k, ap, bp, cp);
    }
  }
  return make_result(
      {batch, m, n}, std::move(out), {&a, &b},
      [a, b, batch, m, n, k, transpose_b](const Tensor& o) mutable {
        for (std::size_t i = 0; i < batch; ++i) {
          const Real* g = o.grad().data() + i * m * n;
          const Real* ap = a.data().data() + i * m * k;
          const Real* bp = b.data().data() + i * k * n;
          if (a.requires_grad()) {
            Real* ga = a.mutable_grad().data() + i * m * k;
            // dA = G * B^T (or G * B when B was used transposed)
            if (transpose_b) {
              detail::gemm_nn(m, k, n, g, bp, ga);
            } else {
              detail::gemm_nt(m, k, n, g, bp, ga);
            }
          }
          if (b.requires_grad()) {
            Real* gb = b.mutable_grad().data() + i * k * n;
            if (transpose_b) {
              detail::gemm_tn(n, k, m, g, ap, gb);  // dB[n,k] = G^T * A
            } else {
              detail::gemm_tn(k, n, m, ap, g, gb);  // dB[k,n] = A^T * G
            }
          }
        }
      });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.extent(0);
  if (!same && !bias) {
    throw ShapeError("elementwise operands " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are not broadcast-compatible");
  }
  const std::size_t n = a.size();
  const std::size_t period = b.size();
  auto av = a.data();
  auto bv = b.data();
  std::vector<Real> out(n);
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i % period];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i % period];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i % period];
      break;
  }
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [a, b, op, n, period](const Tensor& o) mutable {
                       auto g = o.grad();
                       if (a.requires_grad()) {
                         auto ga = a.mutable_grad();
                         if (op == ElementwiseOp::kMul) {
                           auto bv = b.data();
                           for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i % period];
                         } else {
                           for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                         }
                       }
                       if (b.requires_grad()) {
                         auto gb = b.mutable_grad();
                         auto av = a.data();
                         for (std::size_t i = 0; i < n; ++i) {
                           switch (op) {
                             case ElementwiseOp::kAdd: gb[i % period] += g[i]; break;
                             case ElementwiseOp::kSub: gb[i % period] -= g[i]; break;
                             case ElementwiseOp::kMul: gb[i % period] += g[i] * av[i]; break;
                           }
                         }
                       }
                     });
}

Tensor scale(const Tensor& a, Real factor) {
  std::vector<Real> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [a, factor](const Tensor& o) mutable {
    auto g = o.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::optional<std::size_t> axis) {
  if (!axis) {
    Real total = 0;
    for (Real v : a.data()) total += v;
    const Real count = static_cast<Real>(a.size());
    const Real factor = op == ReduceOp::kMean ? Real(1) / count : Real(1);
    return make_result({}, {total * factor}, {&a}, [a, factor](const Tensor& o) mutable {
      const Real g = o.grad()[0] * factor;
      for (Real& v : a.mutable_grad()) v += g;
    });
  }
  if (*axis >= a.rank()) {
    throw AxisError("axis " + std::to_string(*axis) + " out of range for shape " +
                    shape_str(a.shape()));
  }
  const AxisSplit s = split_at(a.shape(), *axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
  const Real factor = op == ReduceOp::kMean ? Real(1) / static_cast<Real>(s.extent) : Real(1);
  std::vector<Real> out(s.outer * s.inner, Real(0));
  auto av = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const Real* src = av.data() + (o * s.extent + e) * s.inner;
      Real* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : out) v *= factor;
  return make_result(std::move(out_shape), std::move(out), {&a},
                     [a, s, factor](const Tensor& o) mutable {
                       auto g = o.grad();
                       auto ga = a.mutable_grad();
                       for (std::size_t oo = 0; oo < s.outer; ++oo) {
                         for (std::size_t e = 0; e < s.extent; ++e) {
                           Real* dst = ga.data() + (oo * s.extent + e) * s.inner;
                           const Real* src = g.data() + oo * s.inner;
                           for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * factor;
                         }
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<Real> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {&a}, [a](const Tensor& o) mutable {
    accumulate(a, o.grad());
  });
}

Tensor permute(const Tensor& a, std::span<const std::size_t> order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw AxisError("permutation rank mismatch for " + shape_str(a.shape()));
  std::vector<bool> seen(r, false);
  for (std::size_t ax : order) {
    if (ax >= r || seen[ax]) throw AxisError("invalid permutation for " + shape_str(a.shape()));
    seen[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.shape()[order[i]];

  // in_strides[order[i]] gives the source stride for output axis i.
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.shape()[i];
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[order[i]];

  // Gather map: out index -> source index.
  const std::size_t n = a.size();
  std::vector<std::size_t> gather(n);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += idx[i] * src_stride[i];
    gather[flat] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto av = a.data();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = av[gather[i]];
  return make_result(std::move(out_shape), std::move(out), {&a},
                     [a, gather = std::move(gather)](const Tensor& o) mutable {
                       auto g = o.grad();
                       auto ga = a.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[gather[i]] += g[i];
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw AxisError("concat axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw ShapeError("concat rank mismatch");
    probe[axis] = first[axis];
    if (probe != first) {
      throw ShapeError("concat extents differ off-axis: " + shape_str(first) + " vs " +
                       shape_str(p.shape()));
    }
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit s = split_at(out_shape, axis);
  std::vector<Real> out(numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[axis] * s.inner;
    auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * s.extent * s.inner + offset);
    }
    offset += chunk;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(
      std::move(out_shape), std::move(out), std::span<const Tensor>(inputs),
      [inputs, offsets, axis, s](const Tensor& o) mutable {
        auto g = o.grad();
        for (std::size_t p = 0; p < inputs.size(); ++p) {
          if (!inputs[p].requires_grad()) continue;
          const std::size_t chunk = inputs[p].shape()[axis] * s.inner;
          auto gp = inputs[p].mutable_grad();
          for (std::size_t oo = 0; oo < s.outer; ++oo) {
            const Real* src = g.data() + oo * s.extent * s.inner + offsets[p];
            Real* dst = gp.data() + oo * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
      });
}

Tensor relu(const Tensor& x) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > Real(0) ? v : Real(0);
  return make_result(x.shape(), std::move(out), {&x}, [x](const Tensor& o) mutable {
    auto g = o.grad();
    auto xv = x.data();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > Real(0)) gx[i] += g[i];
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw AxisError("softmax axis " + std::to_string(axis) + " for shape " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  auto xv = x.data();
  std::vector<Real> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      Real mx = xv[base];
      for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, xv[base + e * s.inner]);
      Real total = 0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const Real v = std::exp(xv[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  return make_result(x.shape(), std::move(out), {&x}, [x, s](const Tensor& o) mutable {
    auto g = o.grad();
    auto y = o.data();
    auto gx = x.mutable_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = oo * s.extent * s.inner + i;
        Real dot = 0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          dot += g[base + e * s.inner] * y[base + e * s.inner];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t j = base + e * s.inner;
          gx[j] += y[j] * (g[j] - dot);
        }
      }
    }
  });
}

}  // namespace DFD_PRECISION_NS
}  // namespace dfd
