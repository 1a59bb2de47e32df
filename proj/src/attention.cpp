#include "star/attention.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "star/errors.hpp"
#include "star/kernels.hpp"
#include "star/ops.hpp"

namespace star {
namespace {

thread_local DotProductTally g_tally;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Full: return "F";
    case AttentionKind::Zigzag: return "Z";
    case AttentionKind::Binary: return "B";
  }
  return "?";
}

std::string to_string(Scheme scheme) { return scheme == Scheme::Zigzag ? "zigzag" : "binary"; }

AttentionKind parse_attention_kind(const std::string& text) {
  const std::string t = lower(text);
  if (t == "f" || t == "full") return AttentionKind::Full;
  if (t == "z" || t == "zigzag") return AttentionKind::Zigzag;
  if (t == "b" || t == "binary") return AttentionKind::Binary;
  throw ConfigError("unknown attention kind '" + text + "' (expected F, Z or B)");
}

Scheme scheme_of(AttentionKind kind) {
  if (kind == AttentionKind::Full) throw ContractError("full attention has no grouping scheme");
  return kind == AttentionKind::Zigzag ? Scheme::Zigzag : Scheme::Binary;
}

void AttentionConfig::validate() const {
  if (heads == 0 || model_dim == 0 || model_dim % heads != 0) {
    throw ConfigError("model dim " + std::to_string(model_dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

GroupSplit make_group_split(std::size_t frames, Scheme scheme) {
  if (frames == 0 || frames % 2 != 0) {
    throw ContractError("T must be even (got T=" + std::to_string(frames) + ")");
  }
  GroupSplit split;
  split.scheme = scheme;
  split.frames = frames;
  const std::size_t half = frames / 2;
  for (std::size_t i = 0; i < half; ++i) {
    if (scheme == Scheme::Zigzag) {
      split.group_a.push_back(2 * i);
      split.group_b.push_back(2 * i + 1);
    } else {
      split.group_a.push_back(i);
      split.group_b.push_back(half + i);
    }
  }
  return split;
}

AttentionOutput multi_head_attention(Var queries, Var keys_values, const AttentionVars& weights,
                                     const AttentionConfig& config, bool keep_weights) {
  config.validate();
  const std::size_t d = config.model_dim;
  const std::size_t heads = config.heads;
  const std::size_t dh = config.head_dim();
  if (queries.shape().size() != 2 || queries.dim(1) != d || keys_values.shape().size() != 2 ||
      keys_values.dim(1) != d) {
    throw DimensionError("attention: queries " + shape_string(queries.shape()) + " and keys " +
                         shape_string(keys_values.shape()) + " must both be [M x " +
                         std::to_string(d) + "]");
  }
  for (const Var* w : {&weights.wq, &weights.wk, &weights.wv, &weights.wo}) {
    if (w->shape() != Shape{d, d}) {
      throw DimensionError("attention weight " + shape_string(w->shape()) + " is not [" +
                           std::to_string(d) + "x" + std::to_string(d) + "]");
    }
  }
  const std::size_t mq = queries.dim(0);
  const std::size_t mk = keys_values.dim(0);
  Var q = matmul(queries, weights.wq);
  Var k = matmul(keys_values, weights.wk);
  Var v = matmul(keys_values, weights.wv);

  const double temperature = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  std::vector<Tensor> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) probs.emplace_back(Shape{mq, mk});
  Tensor mixed({mq, d});
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor& p = probs[h];
    kernels::gemm(false, true, mq, mk, dh, qv.raw() + h * dh, d, kv.raw() + h * dh, d, p.raw(), mk,
                  false);
    for (std::size_t i = 0; i < mq; ++i) {
      auto row = p.data().subspan(i * mk, mk);
      kernels::softmax_row(row, temperature);
      g_tally.head_scores += mk;
      if (h == 0) g_tally.pairs += mk;
    }
    kernels::gemm(false, false, mq, dh, mk, p.raw(), mk, vv.raw() + h * dh, d, mixed.raw() + h * dh,
                  d, false);
  }

  AttentionOutput result;
  if (keep_weights) {
    result.weights = Tensor({mq, mk});
    for (const Tensor& p : probs) result.weights.add_scaled(p, 1.0 / static_cast<double>(heads));
  }

  Var attended = q.tape().record(
      std::move(mixed), {q, k, v},
      [q, k, v, probs = std::move(probs), mq, mk, d, dh, heads, temperature](
          const Tensor& g, std::span<Tensor* const> grads) {
        const Tensor& qv = q.value();
        const Tensor& kv = k.value();
        const Tensor& vv = v.value();
        Tensor dp({mq, mk});
        for (std::size_t h = 0; h < heads; ++h) {
          const Tensor& p = probs[h];
          if (grads[2]) {
            kernels::gemm(true, false, mk, dh, mq, p.raw(), mk, g.raw() + h * dh, d,
                          grads[2]->raw() + h * dh, d, true);
          }
          if (!grads[0] && !grads[1]) continue;
          kernels::gemm(false, true, mq, mk, dh, g.raw() + h * dh, d, vv.raw() + h * dh, d, dp.raw(),
                        mk, false);
          for (std::size_t i = 0; i < mq; ++i) {
            const double* pr = p.raw() + i * mk;
            double* dr = dp.raw() + i * mk;
            const double inner = kernels::dot(pr, dr, mk);
            for (std::size_t j = 0; j < mk; ++j) dr[j] = temperature * pr[j] * (dr[j] - inner);
          }
          if (grads[0]) {
            kernels::gemm(false, false, mq, dh, mk, dp.raw(), mk, kv.raw() + h * dh, d,
                          grads[0]->raw() + h * dh, d, true);
          }
          if (grads[1]) {
            kernels::gemm(true, false, mk, dh, mq, dp.raw(), mk, qv.raw() + h * dh, d,
                          grads[1]->raw() + h * dh, d, true);
          }
        }
      });
  result.out = matmul(attended, weights.wo);
  return result;
}

AttentionOutput full_attention(Var z, const AttentionVars& weights, const AttentionConfig& config,
                               bool keep_weights) {
  const Shape shape = z.shape();
  if (shape.size() != 3) throw DimensionError("full_attention expects [S x T x D], got " + shape_string(shape));
  Var flat = reshape(z, {shape[0] * shape[1], shape[2]});
  AttentionOutput out = multi_head_attention(flat, flat, weights, config, keep_weights);
  out.out = reshape(out.out, shape);
  return out;
}

Decoupled decouple(Var z, Scheme scheme) {
  const Shape& shape = z.shape();
  if (shape.size() != 3) throw DimensionError("decouple expects [S x T x D], got " + shape_string(shape));
  GroupSplit split = make_group_split(shape[1], scheme);
  Var a = index_select(z, 1, split.group_a);
  Var b = index_select(z, 1, split.group_b);
  return Decoupled{a, b, std::move(split)};
}

CrossGroupOutput cross_group_attention(Var group_a, Var group_b, const AttentionVars& weights,
                                       const AttentionConfig& config, bool keep_weights) {
  const Shape shape = group_a.shape();
  if (shape.size() != 3 || group_b.shape() != shape) {
    throw ContractError("cross_group_attention: group shapes " + shape_string(shape) + " and " +
                        shape_string(group_b.shape()) + " must be equal [S x T/2 x D]");
  }
  const Shape flat_shape{shape[0] * shape[1], shape[2]};
  Var fa = reshape(group_a, flat_shape);
  Var fb = reshape(group_b, flat_shape);
  AttentionOutput ab = multi_head_attention(fa, fb, weights, config, keep_weights);
  AttentionOutput ba = multi_head_attention(fb, fa, weights, config, keep_weights);
  return CrossGroupOutput{reshape(ab.out, shape), reshape(ba.out, shape), std::move(ab.weights),
                          std::move(ba.weights)};
}

Var recompose(Var out_a, Var out_b, const GroupSplit& split) {
  const std::size_t half = split.group_a.size();
  if (split.group_b.size() != half || 2 * half != split.frames) {
    throw ContractError("recompose: groups of size " + std::to_string(half) + " and " +
                        std::to_string(split.group_b.size()) + " do not cover T=" +
                        std::to_string(split.frames));
  }
  std::vector<std::size_t> source(split.frames, split.frames);
  auto place = [&](const std::vector<std::size_t>& group, std::size_t offset) {
    for (std::size_t k = 0; k < group.size(); ++k) {
      const std::size_t t = group[k];
      if (t >= split.frames || source[t] != split.frames) {
        throw ContractError("recompose: frame index " + std::to_string(t) +
                            " is out of range or assigned twice");
      }
      source[t] = offset + k;
    }
  };
  place(split.group_a, 0);
  place(split.group_b, half);
  if (out_a.shape().size() != 3 || out_a.dim(1) != half || out_b.shape() != out_a.shape()) {
    throw ContractError("recompose: group tensors " + shape_string(out_a.shape()) + " and " +
                        shape_string(out_b.shape()) + " do not match the split");
  }
  return index_select(concat({out_a, out_b}, 1), 1, source);
}

DotProductCount count_dot_products(std::size_t spatial, std::size_t frames, AttentionKind kind) {
  const std::uint64_t m = static_cast<std::uint64_t>(spatial) * frames;
  if (kind == AttentionKind::Full) return {m * m, m * m};
  if (frames % 2 != 0) throw ContractError("T must be even (got T=" + std::to_string(frames) + ")");
  const std::uint64_t half = m / 2;
  return {half * half, 2 * half * half};
}

DotProductTally dot_product_tally() { return g_tally; }

void reset_dot_product_tally() { g_tally = DotProductTally{}; }

}  // namespace star
