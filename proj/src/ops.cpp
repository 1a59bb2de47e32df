#include "star/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "star/errors.hpp"
#include "star/kernels.hpp"

namespace star {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Row-major view of a tensor around one axis: [outer, axis, inner].
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

std::size_t last_dim(const Tensor& t) {
  if (t.rank() == 0) throw DimensionError("operation needs rank >= 1");
  return t.shape().back();
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(av.shape()) + " by " +
                         shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kernels::gemm(false, false, m, n, k, av.raw(), k, bv.raw(), n, out.raw(), n, false);
  return a.tape().record(std::move(out), {a, b},
                         [a, b, m, n, k](const Tensor& g, std::span<Tensor* const> grads) {
                           if (grads[0]) {
                             kernels::gemm(false, true, m, k, n, g.raw(), n, b.value().raw(), n,
                                           grads[0]->raw(), k, true);
                           }
                           if (grads[1]) {
                             kernels::gemm(true, false, k, n, m, a.value().raw(), k, g.raw(), n,
                                           grads[1]->raw(), n, true);
                           }
                         });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out.add_scaled(b.value());
  return a.tape().record(std::move(out), {a, b},
                         [](const Tensor& g, std::span<Tensor* const> grads) {
                           if (grads[0]) grads[0]->add_scaled(g);
                           if (grads[1]) grads[1]->add_scaled(g);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  Tensor out = a.value();
  out.add_scaled(b.value(), -1.0);
  return a.tape().record(std::move(out), {a, b},
                         [](const Tensor& g, std::span<Tensor* const> grads) {
                           if (grads[0]) grads[0]->add_scaled(g);
                           if (grads[1]) grads[1]->add_scaled(g, -1.0);
                         });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b},
                         [a, b](const Tensor& g, std::span<Tensor* const> grads) {
                           const Tensor& av = a.value();
                           const Tensor& bv = b.value();
                           if (grads[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i] * bv[i];
                           if (grads[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] += g[i] * av[i];
                         });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return a.tape().record(std::move(out), {a},
                         [factor](const Tensor& g, std::span<Tensor* const> grads) {
                           if (grads[0]) grads[0]->add_scaled(g, factor);
                         });
}

Var sum(Var a) {
  return a.tape().record(Tensor::scalar(a.value().sum()), {a},
                         [](const Tensor& g, std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           for (double& v : grads[0]->data()) v += g[0];
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a},
                         [](const Tensor& g, std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           auto dst = grads[0]->data();
                           for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                         });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t n = last_dim(av);
  const std::size_t rows = n ? av.size() / n : 0;
  Tensor out = av;
  for (std::size_t r = 0; r < rows; ++r) kernels::softmax_row(out.data().subspan(r * n, n));
  Tensor saved = out;
  return a.tape().record(
      std::move(out), {a},
      [y = std::move(saved), rows, n](const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* yr = y.raw() + r * n;
          const double* gr = g.raw() + r * n;
          const double inner = kernels::dot(yr, gr, n);
          double* dr = grads[0]->raw() + r * n;
          for (std::size_t j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - inner);
        }
      });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const Tensor& av = a.value();
  const std::size_t d = last_dim(av);
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.value().shape()) + "/" +
                         shape_string(bias.value().shape()) + " do not match last dim of " +
                         shape_string(av.shape()));
  }
  const std::size_t rows = av.size() / d;
  Tensor xhat(av.shape());
  Tensor inv_std({rows});
  Tensor out(av.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.raw() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* xh = xhat.raw() + r * d;
    double* y = out.raw() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (x[j] - mean) * is;
      y[j] = gv[j] * xh[j] + bv[j];
    }
  }
  return a.tape().record(
      std::move(out), {a, gain, bias},
      [gain, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](
          const Tensor& g, std::span<Tensor* const> grads) {
        const Tensor& gv = gain.value();
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.raw() + r * d;
          const double* xh = xhat.raw() + r * d;
          if (grads[1])
            for (std::size_t j = 0; j < d; ++j) (*grads[1])[j] += gr[j] * xh[j];
          if (grads[2])
            for (std::size_t j = 0; j < d; ++j) (*grads[2])[j] += gr[j];
          if (!grads[0]) continue;
          double mean_dxhat = 0.0;
          double mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = gr[j] * gv[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          double* dx = grads[0]->raw() + r * d;
          for (std::size_t j = 0; j < d; ++j)
            dx[j] += inv_std[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
      });
}

Var affine(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const std::size_t din = last_dim(xv);
  if (wv.rank() != 2 || wv.dim(0) != din || b.value().shape() != Shape{wv.dim(1)}) {
    throw DimensionError("affine: input " + shape_string(xv.shape()) + ", weight " +
                         shape_string(wv.shape()) + ", bias " + shape_string(b.value().shape()));
  }
  const std::size_t dout = wv.dim(1);
  const std::size_t rows = xv.size() / din;
  Shape out_shape = xv.shape();
  out_shape.back() = dout;
  Tensor out(out_shape);
  const Tensor& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dout; ++j) out[r * dout + j] = bv[j];
  kernels::gemm(false, false, rows, dout, din, xv.raw(), din, wv.raw(), dout, out.raw(), dout,
                true);
  return x.tape().record(
      std::move(out), {x, w, b},
      [x, w, rows, din, dout](const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) {
          kernels::gemm(false, true, rows, din, dout, g.raw(), dout, w.value().raw(), dout,
                        grads[0]->raw(), din, true);
        }
        if (grads[1]) {
          kernels::gemm(true, false, din, dout, rows, x.value().raw(), din, g.raw(), dout,
                        grads[1]->raw(), dout, true);
        }
        if (grads[2]) {
          double* db = grads[2]->raw();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < dout; ++j) db[j] += g[r * dout + j];
        }
      });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  return a.tape().record(std::move(out), {a}, [a](const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    const Tensor& x = a.value();
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double xi = x[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * std::numbers::sqrt2 / 2.0));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
      (*grads[0])[i] += g[i] * (cdf + xi * pdf);
    }
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts.front().value().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Var& p : parts) {
    Shape s = p.value().shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: shape " + shape_string(s) + " incompatible with " +
                             shape_string(first) + " on axis " + std::to_string(axis));
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisView view = axis_view(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& src = parts[p].value();
    const std::size_t block = extents[p] * view.inner;
    for (std::size_t o = 0; o < view.outer; ++o) {
      std::copy_n(src.raw() + o * block, block,
                  out.raw() + o * view.extent * view.inner + offset * view.inner);
    }
    offset += extents[p];
  }
  return parts.front().tape().record(
      std::move(out), parts,
      [extents, view](const Tensor& g, std::span<Tensor* const> grads) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          const std::size_t block = extents[p] * view.inner;
          if (grads[p]) {
            for (std::size_t o = 0; o < view.outer; ++o) {
              const double* src = g.raw() + o * view.extent * view.inner + offset * view.inner;
              double* dst = grads[p]->raw() + o * block;
              for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          offset += extents[p];
        }
      });
}

std::vector<Var> split(Var a, std::size_t axis, const std::vector<std::size_t>& sizes) {
  const Shape& shape = a.value().shape();
  const AxisView view = axis_view(shape, axis);
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (total != view.extent) {
    throw DimensionError("split: sizes sum to " + std::to_string(total) + " but axis " +
                         std::to_string(axis) + " of " + shape_string(shape) + " has " +
                         std::to_string(view.extent));
  }
  std::vector<Var> out;
  std::size_t offset = 0;
  for (std::size_t size : sizes) {
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = offset + i;
    out.push_back(index_select(a, axis, idx));
    offset += size;
  }
  return out;
}

Var mean_over(Var a, std::size_t axis) {
  const Shape& shape = a.value().shape();
  const AxisView view = axis_view(shape, axis);
  if (view.extent == 0) throw ContractError("mean_over an empty axis");
  Shape out_shape = shape;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const Tensor& av = a.value();
  const double inv = 1.0 / static_cast<double>(view.extent);
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t e = 0; e < view.extent; ++e)
      for (std::size_t i = 0; i < view.inner; ++i)
        out[o * view.inner + i] += av[(o * view.extent + e) * view.inner + i];
  for (double& v : out.data()) v *= inv;
  return a.tape().record(std::move(out), {a},
                         [view, inv](const Tensor& g, std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           for (std::size_t o = 0; o < view.outer; ++o)
                             for (std::size_t e = 0; e < view.extent; ++e)
                               for (std::size_t i = 0; i < view.inner; ++i)
                                 (*grads[0])[(o * view.extent + e) * view.inner + i] +=
                                     inv * g[o * view.inner + i];
                         });
}

Var index_select(Var a, std::size_t axis, const std::vector<std::size_t>& indices) {
  const Shape& shape = a.value().shape();
  const AxisView view = axis_view(shape, axis);
  for (std::size_t idx : indices) {
    if (idx >= view.extent) {
      throw DimensionError("index_select: index " + std::to_string(idx) + " out of range for axis " +
                           std::to_string(axis) + " of " + shape_string(shape));
    }
  }
  Shape out_shape = shape;
  out_shape[axis] = indices.size();
  Tensor out(out_shape);
  const Tensor& av = a.value();
  const std::size_t n = indices.size();
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t e = 0; e < n; ++e)
      std::copy_n(av.raw() + (o * view.extent + indices[e]) * view.inner, view.inner,
                  out.raw() + (o * n + e) * view.inner);
  return a.tape().record(std::move(out), {a},
                         [view, indices](const Tensor& g, std::span<Tensor* const> grads) {
                           if (!grads[0]) return;
                           const std::size_t n = indices.size();
                           for (std::size_t o = 0; o < view.outer; ++o)
                             for (std::size_t e = 0; e < n; ++e) {
                               const double* src = g.raw() + (o * n + e) * view.inner;
                               double* dst =
                                   grads[0]->raw() + (o * view.extent + indices[e]) * view.inner;
                               for (std::size_t i = 0; i < view.inner; ++i) dst[i] += src[i];
                             }
                         });
}

Var repeat(Var a, std::size_t axis, std::size_t count) {
  const Shape& shape = a.value().shape();
  const AxisView view = axis_view(shape, axis);
  if (view.extent != 1) {
    throw DimensionError("repeat: axis " + std::to_string(axis) + " of " + shape_string(shape) +
                         " must have size 1");
  }
  return index_select(a, axis, std::vector<std::size_t>(count, 0));
}

}  // namespace star
