#pragma once

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "star/tape.hpp"
#include "star/tensor.hpp"

namespace star {

/// Which attention a block runs: all S*T tokens jointly, or one of the two
/// cross-group variants over a decoupled time axis.
enum class AttentionKind { Full, Zigzag, Binary };

/// Time-axis grouping used by the cross-group variants.
enum class Scheme { Zigzag, Binary };

std::string to_string(AttentionKind kind);
std::string to_string(Scheme scheme);
/// "F"/"Z"/"B" (also accepts full, zigzag, binary); throws ConfigError otherwise.
AttentionKind parse_attention_kind(const std::string& text);
Scheme scheme_of(AttentionKind kind);

struct AttentionConfig {
  std::size_t model_dim = 64;
  std::size_t heads = 4;

  std::size_t head_dim() const { return model_dim / heads; }
  /// Throws ConfigError unless heads > 0 and divides model_dim.
  void validate() const;
};

/// Fused-over-heads projections; each is [D x D] and applied as x * W.
template <class T>
struct AttentionWeightsT {
  T wq;
  T wk;
  T wv;
  T wo;

  template <class Self, class Fn>
  static void fields(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "wq", self.wq);
    fn(prefix + "wk", self.wk);
    fn(prefix + "wv", self.wv);
    fn(prefix + "wo", self.wo);
  }

  template <class Fn>
  auto map(Fn&& fn) const -> AttentionWeightsT<std::decay_t<decltype(fn(wq))>> {
    return {fn(wq), fn(wk), fn(wv), fn(wo)};
  }
};

using AttentionWeights = AttentionWeightsT<Tensor>;
using AttentionVars = AttentionWeightsT<Var>;

/// Partition of frame indices 0..T-1 into two ordered halves.
struct GroupSplit {
  Scheme scheme = Scheme::Zigzag;
  std::size_t frames = 0;
  std::vector<std::size_t> group_a;  // zigzag: 0,2,4,...  binary: 0..T/2-1
  std::vector<std::size_t> group_b;  // zigzag: 1,3,5,...  binary: T/2..T-1
};

/// Throws ContractError("T must be even") for odd or zero T.
GroupSplit make_group_split(std::size_t frames, Scheme scheme);

/// Output of the attention kernel. `weights` is the head-averaged
/// [queries x keys] probability matrix, filled only when requested.
struct AttentionOutput {
  Var out;
  Tensor weights;
};

/// Multi-head scaled dot-product attention over flattened token rows:
/// queries [Mq x D], keys/values [Mk x D]. Softmax runs over keys for each
/// query and head with temperature sqrt(d_h).
AttentionOutput multi_head_attention(Var queries, Var keys_values, const AttentionVars& weights,
                                     const AttentionConfig& config, bool keep_weights = false);

/// Attention over all S*T tokens of z [S x T x D]; token (s, t) is row s*T + t.
AttentionOutput full_attention(Var z, const AttentionVars& weights, const AttentionConfig& config,
                               bool keep_weights = false);

struct Decoupled {
  Var group_a;  // [S x T/2 x D]
  Var group_b;
  GroupSplit split;
};

Decoupled decouple(Var z, Scheme scheme);

struct CrossGroupOutput {
  Var out_a;           // queries from group a, keys/values from group b
  Var out_b;           // queries from group b, keys/values from group a
  Tensor weights_ab;   // [S*T/2 x S*T/2], rows are group-a queries
  Tensor weights_ba;
};

CrossGroupOutput cross_group_attention(Var group_a, Var group_b, const AttentionVars& weights,
                                       const AttentionConfig& config, bool keep_weights = false);

/// Places each group's frames back at their original time indices.
Var recompose(Var out_a, Var out_b, const GroupSplit& split);

struct DotProductCount {
  std::uint64_t per_group = 0;  // equals total for Full
  std::uint64_t total = 0;
};

/// Query-key dot products: Full (S T)^2; grouped (S T / 2)^2 per group, twice that in total.
DotProductCount count_dot_products(std::size_t spatial, std::size_t frames, AttentionKind kind);

/// Runtime tally kept by the attention kernel on the calling thread.
struct DotProductTally {
  std::uint64_t pairs = 0;        // query-key pairs scored (one per pair, all heads together)
  std::uint64_t head_scores = 0;  // per-head score evaluations (pairs * heads)
};

DotProductTally dot_product_tally();
void reset_dot_product_tally();

}  // namespace star
