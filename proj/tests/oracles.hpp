#pragma once
// Test-only reference implementations. Everything here is written with plain
// loops and std:: math so it stays independent of the library kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "star/attention.hpp"
#include "star/ops.hpp"
#include "star/random.hpp"
#include "star/tape.hpp"
#include "star/tensor.hpp"

namespace oracle {

using star::Tensor;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += a.at(i, l) * b.at(l, j);
      c.at(i, j) = s;
    }
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += out[i] = std::exp(logits[i] - mx);
  for (double& v : out) v /= total;
  return out;
}

inline Tensor random_tensor(star::Shape shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  star::Rng rng(seed);
  return rng.uniform_tensor(std::move(shape), lo, hi);
}

/// Builds a scalar loss from inputs on a fresh tape.
using LossBuilder = std::function<star::Var(star::Tape&, const std::vector<star::Var>&)>;

inline double evaluate(const LossBuilder& build, const std::vector<Tensor>& inputs) {
  star::Tape tape;
  std::vector<star::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return build(tape, vars).value()[0];
}

/// Relative error with a floor so near-zero gradients are compared absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Max relative error between tape gradients and central differences at
/// `coords` random coordinates of every input.
inline double finite_difference_error(const LossBuilder& build, std::vector<Tensor> inputs,
                                      int coords = 20, double h = 1e-5, std::uint64_t seed = 99) {
  star::Tape tape;
  std::vector<star::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  star::Var loss = build(tape, vars);
  tape.backward(loss);
  star::Rng rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tape.grad(vars[i]);
    for (int c = 0; c < coords; ++c) {
      const std::size_t idx = rng.below(inputs[i].size());
      const double saved = inputs[i][idx];
      inputs[i][idx] = saved + h;
      const double up = evaluate(build, inputs);
      inputs[i][idx] = saved - h;
      const double down = evaluate(build, inputs);
      inputs[i][idx] = saved;
      worst = std::max(worst, relative_error(analytic[idx], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

/// Contracts an arbitrary output with fixed random weights into a scalar so
/// every output element contributes a distinct gradient.
inline star::Var project_to_scalar(star::Var out, std::uint64_t seed = 5) {
  star::Var w = out.tape().constant(random_tensor(out.shape(), seed));
  return star::sum(star::mul(out, w));
}

using star::AttentionVars;
using star::AttentionWeights;
using star::Tape;

inline AttentionWeights random_weights(std::size_t d, std::uint64_t seed) {
  return {random_tensor({d, d}, seed, -0.6, 0.6), random_tensor({d, d}, seed + 1, -0.6, 0.6),
          random_tensor({d, d}, seed + 2, -0.6, 0.6), random_tensor({d, d}, seed + 3, -0.6, 0.6)};
}

inline AttentionVars bind(Tape& tape, const AttentionWeights& w) {
  return {tape.constant(w.wq), tape.constant(w.wk), tape.constant(w.wv), tape.constant(w.wo)};
}

// Attention written out element by element. Rows of xq attend over rows of xkv.
inline Tensor brute_attention(const Tensor& xq, const Tensor& xkv, const AttentionWeights& w, std::size_t heads) {
  const std::size_t d = xq.dim(1), dh = d / heads;
  const Tensor q = matmul(xq, w.wq), k = matmul(xkv, w.wk), v = matmul(xkv, w.wv);
  Tensor mixed({xq.dim(0), d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < xq.dim(0); ++i) {
      std::vector<double> logits;
      for (std::size_t j = 0; j < xkv.dim(0); ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
        logits.push_back(s / std::sqrt(static_cast<double>(dh)));
      }
      const auto p = softmax(logits);
      for (std::size_t c = 0; c < dh; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) s += p[j] * v.at(j, h * dh + c);
        mixed.at(i, h * dh + c) = s;
      }
    }
  return matmul(mixed, w.wo);
}

inline Tensor frames_of(const Tensor& z, const std::vector<std::size_t>& frames) {
  const std::size_t s = z.dim(0), d = z.dim(2);
  Tensor out({s * frames.size(), d});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t k = 0; k < frames.size(); ++k)
      for (std::size_t c = 0; c < d; ++c) out.at(i * frames.size() + k, c) = z.at(i, frames[k], c);
  return out;
}

// Joint-map pooling written straight from the definition: one exp per pixel.
inline double jm_oracle(const Tensor& local, std::size_t ch, double x, double y, double sigma) {
  const std::size_t h = local.dim(1), w = local.dim(2);
  double s = 0.0;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const double di = static_cast<double>(i) - y * static_cast<double>(h);
      const double dj = static_cast<double>(j) - x * static_cast<double>(w);
      s += local.at(ch, i, j) * std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
    }
  return s;
}

}  // namespace oracle
