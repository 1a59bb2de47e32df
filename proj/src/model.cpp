#include "star/model.hpp"

#include <cmath>

#include "star/errors.hpp"
#include "star/ops.hpp"
#include "star/random.hpp"

namespace star {

void ModelConfig::validate() const {
  attention().validate();
  if (global_channels == 0 || local_channels == 0) throw ConfigError("channel counts must be positive");
  if (joints == 0) throw ConfigError("joints must be positive");
  if (layers == 0) throw ConfigError("layers must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
}

std::string structure_label(AttentionKind kind) { return "F-" + to_string(kind); }

AttentionKind parse_structure_label(const std::string& label) {
  if (label.size() != 3 || label[0] != 'F' || label[1] != '-')
    throw ConfigError("unknown structure '" + label + "' (expected one of F-F, F-Z, F-B)");
  return parse_attention_kind(label.substr(2));
}

namespace {

Tensor uniform_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_tensor({fan_in, fan_out}, -bound, bound);
}

AttentionWeights init_attention(Rng& rng, std::size_t d) {
  AttentionWeights w;
  w.wq = uniform_weight(rng, d, d);
  w.wk = uniform_weight(rng, d, d);
  w.wv = uniform_weight(rng, d, d);
  w.wo = uniform_weight(rng, d, d);
  return w;
}

StarLayerParams init_layer(Rng& rng, std::size_t d) {
  StarLayerParams p;
  p.fattn = init_attention(rng, d);
  p.sta = init_attention(rng, d);
  p.ln1_gain = Tensor::filled({d}, 1.0);
  p.ln1_bias = Tensor::zeros({d});
  p.ln2_gain = Tensor::filled({d}, 1.0);
  p.ln2_bias = Tensor::zeros({d});
  p.ln3_gain = Tensor::filled({d}, 1.0);
  p.ln3_bias = Tensor::zeros({d});
  p.mlp_w1 = uniform_weight(rng, d, 4 * d);
  p.mlp_b1 = Tensor::zeros({4 * d});
  p.mlp_w2 = uniform_weight(rng, 4 * d, d);
  p.mlp_b2 = Tensor::zeros({d});
  return p;
}

}  // namespace

StarModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.model_dim;
  Rng rng(seed);
  StarModelParams p;
  p.tokenizer.proj_g_w = uniform_weight(rng, config.global_channels, d);
  p.tokenizer.proj_g_b = Tensor::zeros({d});
  p.tokenizer.proj_j_w = uniform_weight(rng, config.local_channels, d);
  p.tokenizer.proj_j_b = Tensor::zeros({d});
  p.tokenizer.cls_glob = rng.uniform_tensor({d}, -0.02, 0.02);
  p.tokenizer.cls_joint = rng.uniform_tensor({d}, -0.02, 0.02);
  p.tokenizer.cls_total = rng.uniform_tensor({d}, -0.02, 0.02);
  p.tokenizer.pos = rng.uniform_tensor({config.joints, d}, -0.02, 0.02);
  for (std::size_t l = 0; l < config.layers; ++l) p.encoder.push_back(init_layer(rng, d));
  for (std::size_t l = 0; l < config.layers; ++l) p.decoder.push_back(init_layer(rng, d));
  p.head_w = uniform_weight(rng, d, config.num_classes);
  p.head_b = Tensor::zeros({config.num_classes});
  return p;
}

StarModelVars bind_params(Tape& tape, const StarModelParams& params, bool trainable) {
  return params.map([&](const Tensor& t) { return trainable ? tape.variable(t) : tape.constant(t); });
}

LayerOutput star_layer_forward(Var z, const StarLayerVars& p, AttentionKind sta_kind,
                               const AttentionConfig& config, bool keep_attention,
                               const std::string& name) {
  LayerOutput result;
  AttentionOutput first = full_attention(z, p.fattn, config, keep_attention);
  const Var zbar = layer_norm(add(first.out, z), p.ln1_gain, p.ln1_bias);
  if (keep_attention) {
    AttentionRecord rec;
    rec.name = name + ".fattn";
    rec.kind = AttentionKind::Full;
    rec.weights = std::move(first.weights);
    result.records.push_back(std::move(rec));
  }

  Var ztilde;
  if (sta_kind == AttentionKind::Full) {
    AttentionOutput second = full_attention(zbar, p.sta, config, keep_attention);
    ztilde = layer_norm(add(second.out, zbar), p.ln2_gain, p.ln2_bias);
    if (keep_attention) {
      AttentionRecord rec;
      rec.name = name + ".sta";
      rec.kind = AttentionKind::Full;
      rec.weights = std::move(second.weights);
      result.records.push_back(std::move(rec));
    }
  } else {
    Decoupled parts = decouple(zbar, scheme_of(sta_kind));
    CrossGroupOutput cross = cross_group_attention(parts.group_a, parts.group_b, p.sta, config,
                                                   keep_attention);
    const Var merged = recompose(add(cross.out_a, parts.group_a), add(cross.out_b, parts.group_b),
                                 parts.split);
    ztilde = layer_norm(merged, p.ln2_gain, p.ln2_bias);
    if (keep_attention) {
      AttentionRecord rec;
      rec.name = name + ".sta";
      rec.kind = sta_kind;
      rec.weights_ab = std::move(cross.weights_ab);
      rec.weights_ba = std::move(cross.weights_ba);
      rec.split = parts.split;
      result.records.push_back(std::move(rec));
    }
  }

  const Var hidden = gelu(affine(ztilde, p.mlp_w1, p.mlp_b1));
  const Var mlp = affine(hidden, p.mlp_w2, p.mlp_b2);
  result.out = layer_norm(add(mlp, ztilde), p.ln3_gain, p.ln3_bias);
  return result;
}

ClipTokens tokenize_clip(const std::vector<FrameFeatures>& features, const PoseSequence& pose,
                         double sigma) {
  return {make_gg_tokens(features), make_jm_tokens(features, pose, sigma)};
}

ForwardResult model_forward(Tape& tape, const StarModelVars& params, const ModelConfig& config,
                            const ClipTokens& clip, bool keep_attention) {
  if (clip.grid.dim() != config.global_channels)
    throw DimensionError("grid tokens have " + std::to_string(clip.grid.dim()) +
                         " channels, model expects " + std::to_string(config.global_channels));
  if (clip.joints.dim() != config.local_channels)
    throw DimensionError("joint tokens have " + std::to_string(clip.joints.dim()) +
                         " channels, model expects " + std::to_string(config.local_channels));
  if (clip.joints.spatial() != config.joints)
    throw DimensionError("clip has " + std::to_string(clip.joints.spatial()) +
                         " joints, model expects " + std::to_string(config.joints));
  if (params.encoder.size() != config.layers || params.decoder.size() != config.layers)
    throw ContractError("parameter layer count does not match the config");

  ForwardResult result;
  TokenLayout& layout = result.rollout.layout;
  layout.grid_tokens = clip.grid.spatial();
  layout.joint_tokens = clip.joints.spatial();
  layout.frames = clip.grid.frames();

  const AttentionConfig att = config.attention();
  Var z = aggregate_multiclass(tape.constant(clip.grid.tokens), tape.constant(clip.joints.tokens),
                               params.tokenizer);
  const auto run_stack = [&](const std::vector<StarLayerVars>& stack, AttentionKind kind,
                             const std::string& prefix) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      LayerOutput out = star_layer_forward(z, stack[l], kind, att, keep_attention,
                                           prefix + std::to_string(l));
      z = out.out;
      for (auto& rec : out.records) result.rollout.records.push_back(std::move(rec));
    }
  };
  run_stack(params.encoder, config.encoder_sta, "enc.");
  run_stack(params.decoder, config.decoder_sta, "dec.");

  const Var cls = index_select(
      z, 0, {layout.cls_glob_slot(), layout.cls_joint_slot(), layout.cls_total_slot()});
  const Var pooled = mean_over(mean_over(cls, 1), 0);  // [D]
  result.logits = affine(pooled, params.head_w, params.head_b);
  return result;
}

std::size_t predict(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

Tensor softmax_probabilities(const Tensor& logits) {
  Tensor out = logits;
  double mx = out[0];
  for (std::size_t i = 0; i < out.size(); ++i) mx = std::max(mx, out[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += (out[i] = std::exp(out[i] - mx));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= total;
  return out;
}

}  // namespace star
