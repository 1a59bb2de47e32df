#pragma once

#include <cstddef>
#include <vector>

#include "star/tape.hpp"

namespace star {

inline constexpr double kLayerNormEps = 1e-5;

/// [m x k] * [k x n].
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Sum of all elements as a shape-[1] tensor.
Var sum(Var a);
Var reshape(Var a, Shape shape);

/// Softmax over the last axis, stabilized by subtracting each row's max.
Var softmax_rows(Var a);
/// Normalizes each vector along the last axis, then applies gain and bias.
Var layer_norm(Var a, Var gain, Var bias, double eps = kLayerNormEps);
/// x * W + b over the last axis of x.
Var affine(Var x, Var w, Var b);
/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
Var gelu(Var a);

Var concat(const std::vector<Var>& parts, std::size_t axis);
std::vector<Var> split(Var a, std::size_t axis, const std::vector<std::size_t>& sizes);
/// Mean over one axis; the axis is removed from the shape.
Var mean_over(Var a, std::size_t axis);
/// Gathers slices `indices` along `axis` (repeats allowed).
Var index_select(Var a, std::size_t axis, const std::vector<std::size_t>& indices);
/// Tiles a size-1 axis `count` times.
Var repeat(Var a, std::size_t axis, std::size_t count);

}  // namespace star
