#pragma once

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "star/attention.hpp"
#include "star/tape.hpp"
#include "star/tokenization.hpp"

namespace star {

/// Learnable tensors of one encoder or decoder layer.
template <class T>
struct StarLayerParamsT {
  AttentionWeightsT<T> fattn;  // full spatio-temporal attention
  AttentionWeightsT<T> sta;    // second attention: full, zigzag or binary
  T ln1_gain, ln1_bias;        // after full attention
  T ln2_gain, ln2_bias;        // after the second attention
  T ln3_gain, ln3_bias;        // after the MLP
  T mlp_w1, mlp_b1;            // [D x 4D], [4D]
  T mlp_w2, mlp_b2;            // [4D x D], [D]

  template <class Self, class Fn>
  static void fields(Self& self, const std::string& prefix, Fn&& fn) {
    AttentionWeightsT<T>::fields(self.fattn, prefix + "fattn.", fn);
    AttentionWeightsT<T>::fields(self.sta, prefix + "sta.", fn);
    fn(prefix + "ln1.gain", self.ln1_gain);
    fn(prefix + "ln1.bias", self.ln1_bias);
    fn(prefix + "ln2.gain", self.ln2_gain);
    fn(prefix + "ln2.bias", self.ln2_bias);
    fn(prefix + "ln3.gain", self.ln3_gain);
    fn(prefix + "ln3.bias", self.ln3_bias);
    fn(prefix + "mlp.w1", self.mlp_w1);
    fn(prefix + "mlp.b1", self.mlp_b1);
    fn(prefix + "mlp.w2", self.mlp_w2);
    fn(prefix + "mlp.b2", self.mlp_b2);
  }

  template <class Fn>
  auto map(Fn&& fn) const -> StarLayerParamsT<std::decay_t<decltype(fn(ln1_gain))>> {
    return {fattn.map(fn), sta.map(fn),   fn(ln1_gain), fn(ln1_bias), fn(ln2_gain), fn(ln2_bias),
            fn(ln3_gain),  fn(ln3_bias), fn(mlp_w1),   fn(mlp_b1),   fn(mlp_w2),   fn(mlp_b2)};
  }
};

template <class T>
struct StarModelParamsT {
  TokenizerParamsT<T> tokenizer;
  std::vector<StarLayerParamsT<T>> encoder;
  std::vector<StarLayerParamsT<T>> decoder;
  T head_w;  // [D x classes]
  T head_b;  // [classes]

  /// Visits every tensor with a stable dotted name ("enc.0.fattn.wq", ...).
  template <class Self, class Fn>
  static void fields(Self& self, Fn&& fn) {
    TokenizerParamsT<T>::fields(self.tokenizer, "tok.", fn);
    for (std::size_t l = 0; l < self.encoder.size(); ++l)
      StarLayerParamsT<T>::fields(self.encoder[l], "enc." + std::to_string(l) + ".", fn);
    for (std::size_t l = 0; l < self.decoder.size(); ++l)
      StarLayerParamsT<T>::fields(self.decoder[l], "dec." + std::to_string(l) + ".", fn);
    fn(std::string("head.w"), self.head_w);
    fn(std::string("head.b"), self.head_b);
  }

  template <class Fn>
  auto map(Fn&& fn) const -> StarModelParamsT<std::decay_t<decltype(fn(head_w))>> {
    StarModelParamsT<std::decay_t<decltype(fn(head_w))>> out;
    out.tokenizer = tokenizer.map(fn);
    for (const auto& l : encoder) out.encoder.push_back(l.map(fn));
    for (const auto& l : decoder) out.decoder.push_back(l.map(fn));
    out.head_w = fn(head_w);
    out.head_b = fn(head_b);
    return out;
  }
};

using StarLayerParams = StarLayerParamsT<Tensor>;
using StarLayerVars = StarLayerParamsT<Var>;
using StarModelParams = StarModelParamsT<Tensor>;
using StarModelVars = StarModelParamsT<Var>;

struct ModelConfig {
  std::size_t global_channels = 64;  // C
  std::size_t local_channels = 32;   // C'
  std::size_t joints = 13;           // N
  std::size_t model_dim = 64;        // D
  std::size_t heads = 4;             // H
  std::size_t layers = 3;            // L, per encoder and per decoder
  std::size_t num_classes = 3;
  double sigma = 2.0;                                  // heat map scale on the local grid
  AttentionKind encoder_sta = AttentionKind::Zigzag;   // "F-Z"
  AttentionKind decoder_sta = AttentionKind::Binary;   // "F-B"

  AttentionConfig attention() const { return {model_dim, heads}; }
  void validate() const;
};

/// "F-Z" style label for a stack whose second attention is `kind`.
std::string structure_label(AttentionKind kind);
/// Parses "F-Z"; the first letter must be F. Throws ConfigError listing valid values.
AttentionKind parse_structure_label(const std::string& label);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit LN
/// gains, and class tokens / pos drawn from Uniform(-0.02, 0.02).
StarModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Puts every tensor on the tape, as variables when `trainable`.
StarModelVars bind_params(Tape& tape, const StarModelParams& params, bool trainable);

/// Attention probabilities of one block, kept for rollout.
struct AttentionRecord {
  std::string name;  // e.g. "enc.1.sta"
  AttentionKind kind = AttentionKind::Full;
  Tensor weights;     // Full: [M x M]
  Tensor weights_ab;  // grouped: [M/2 x M/2], group-a queries over group-b keys
  Tensor weights_ba;
  GroupSplit split;
};

struct LayerOutput {
  Var out;
  std::vector<AttentionRecord> records;
};

/// One layer: zbar = LN(FAttn(z) + z); split zbar by `sta_kind`; second
/// attention with residual per group, recompose, LN; then LN(MLP + residual).
LayerOutput star_layer_forward(Var z, const StarLayerVars& params, AttentionKind sta_kind,
                               const AttentionConfig& config, bool keep_attention = false,
                               const std::string& name = "layer");

/// Token grids of one clip, computed once from features and pose.
struct ClipTokens {
  TokenGrid grid;    // [P x T x C]
  TokenGrid joints;  // [N x T x C']
};

ClipTokens tokenize_clip(const std::vector<FrameFeatures>& features, const PoseSequence& pose,
                         double sigma);

struct RolloutInputs {
  TokenLayout layout;
  std::vector<AttentionRecord> records;  // in execution order
};

struct ForwardResult {
  Var logits;  // [classes]
  RolloutInputs rollout;
};

/// Aggregate -> L encoder layers -> L decoder layers -> average of the three
/// class tokens (each averaged over time) -> affine head.
ForwardResult model_forward(Tape& tape, const StarModelVars& params, const ModelConfig& config,
                            const ClipTokens& clip, bool keep_attention = false);

/// Argmax with lowest-index tie-break.
std::size_t predict(const Tensor& logits);
Tensor softmax_probabilities(const Tensor& logits);

}  // namespace star
