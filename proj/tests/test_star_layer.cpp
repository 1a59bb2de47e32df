#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "star/errors.hpp"
#include "star/model.hpp"
#include "star/training.hpp"

using namespace star;

namespace {

// ---- straight-line reference for one layer, on flattened [S*T x D] rows ----

Tensor ln_rows(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t m = x.dim(0), d = x.dim(1);
  Tensor out({m, d});
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += x.at(i, c) / d;
    for (std::size_t c = 0; c < d; ++c) var += (x.at(i, c) - mean) * (x.at(i, c) - mean) / d;
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = (x.at(i, c) - mean) / std::sqrt(var + 1e-5) * gain[c] + bias[c];
  }
  return out;
}

Tensor plus(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = oracle::matmul(x, w);
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t c = 0; c < y.dim(1); ++c) y.at(i, c) += b[c];
  return y;
}

Tensor attend(const Tensor& xq, const Tensor& xkv, const AttentionWeights& w, std::size_t heads) {
  const std::size_t d = xq.dim(1), dh = d / heads;
  const Tensor q = oracle::matmul(xq, w.wq), k = oracle::matmul(xkv, w.wk), v = oracle::matmul(xkv, w.wv);
  Tensor mixed({xq.dim(0), d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < xq.dim(0); ++i) {
      std::vector<double> logits;
      for (std::size_t j = 0; j < xkv.dim(0); ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
        logits.push_back(s / std::sqrt(static_cast<double>(dh)));
      }
      const auto p = oracle::softmax(logits);
      for (std::size_t c = 0; c < dh; ++c)
        for (std::size_t j = 0; j < p.size(); ++j) mixed.at(i, h * dh + c) += p[j] * v.at(j, h * dh + c);
    }
  return oracle::matmul(mixed, w.wo);
}

// Rows of token (s, t) live at s*T + t.
std::vector<std::size_t> rows_for(std::size_t s_count, std::size_t t_count, const std::vector<std::size_t>& frames) {
  std::vector<std::size_t> rows;
  for (std::size_t s = 0; s < s_count; ++s)
    for (std::size_t t : frames) rows.push_back(s * t_count + t);
  return rows;
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out({rows.size(), x.dim(1)});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < x.dim(1); ++c) out.at(i, c) = x.at(rows[i], c);
  return out;
}

Tensor reference_layer(const Tensor& z, const StarLayerParams& p, AttentionKind kind, std::size_t heads) {
  const std::size_t s = z.dim(0), t = z.dim(1), d = z.dim(2);
  const Tensor x = z.reshaped({s * t, d});
  const Tensor zbar = ln_rows(plus(attend(x, x, p.fattn, heads), x), p.ln1_gain, p.ln1_bias);
  Tensor merged = zbar;
  if (kind == AttentionKind::Full) {
    merged = plus(attend(zbar, zbar, p.sta, heads), zbar);
  } else {
    std::vector<std::size_t> fa, fb;
    for (std::size_t f = 0; f < t; ++f) {
      const bool in_a = kind == AttentionKind::Zigzag ? f % 2 == 0 : f < t / 2;
      (in_a ? fa : fb).push_back(f);
    }
    const auto ra = rows_for(s, t, fa), rb = rows_for(s, t, fb);
    const Tensor a = gather(zbar, ra), b = gather(zbar, rb);
    const Tensor oa = plus(attend(a, b, p.sta, heads), a), ob = plus(attend(b, a, p.sta, heads), b);
    for (std::size_t i = 0; i < ra.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        merged.at(ra[i], c) = oa.at(i, c);
        merged.at(rb[i], c) = ob.at(i, c);
      }
  }
  const Tensor ztilde = ln_rows(merged, p.ln2_gain, p.ln2_bias);
  Tensor hidden = dense(ztilde, p.mlp_w1, p.mlp_b1);
  for (double& v : hidden.data()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  const Tensor out = ln_rows(plus(dense(hidden, p.mlp_w2, p.mlp_b2), ztilde), p.ln3_gain, p.ln3_bias);
  return out.reshaped({s, t, d});
}

StarLayerParams random_layer(std::size_t d, std::uint64_t seed) {
  auto r = [&](Shape shape, double scale) { return oracle::random_tensor(std::move(shape), seed++, -scale, scale); };
  StarLayerParams p;
  p.fattn = {r({d, d}, 0.7), r({d, d}, 0.7), r({d, d}, 0.7), r({d, d}, 0.7)};
  p.sta = {r({d, d}, 0.7), r({d, d}, 0.7), r({d, d}, 0.7), r({d, d}, 0.7)};
  p.ln1_gain = r({d}, 1.5);
  p.ln1_bias = r({d}, 0.5);
  p.ln2_gain = r({d}, 1.5);
  p.ln2_bias = r({d}, 0.5);
  p.ln3_gain = r({d}, 1.5);
  p.ln3_bias = r({d}, 0.5);
  p.mlp_w1 = r({d, 4 * d}, 0.5);
  p.mlp_b1 = r({4 * d}, 0.2);
  p.mlp_w2 = r({4 * d, d}, 0.5);
  p.mlp_b2 = r({d}, 0.2);
  return p;
}

StarLayerVars bind_layer(Tape& tape, const StarLayerParams& p) {
  return p.map([&](const Tensor& t) { return tape.constant(t); });
}

ModelConfig small_config() {
  ModelConfig c;
  c.global_channels = 5;
  c.local_channels = 3;
  c.joints = 2;
  c.model_dim = 8;
  c.heads = 2;
  c.layers = 2;
  c.num_classes = 3;
  return c;
}

ClipTokens random_clip(const ModelConfig& c, std::size_t p, std::size_t t, std::uint64_t seed) {
  return {TokenGrid{oracle::random_tensor({p, t, c.global_channels}, seed)},
          TokenGrid{oracle::random_tensor({c.joints, t, c.local_channels}, seed + 1)}};
}

Tensor logits_of(const StarModelParams& params, const ModelConfig& c, const ClipTokens& clip) {
  Tape tape;
  return model_forward(tape, bind_params(tape, params, false), c, clip).logits.value();
}

void zero_residual_branches(StarModelParams& params) {
  for (auto* stack : {&params.encoder, &params.decoder})
    for (StarLayerParams& l : *stack) {
      l.fattn.wo.fill(0.0);
      l.sta.wo.fill(0.0);
      l.mlp_w2.fill(0.0);
      l.mlp_b2.fill(0.0);
    }
}

}  // namespace

TEST_CASE("layer forward") {
  SUBCASE("matches the straight-line reference (S=2, T=2, D=4, H=1)") {
    const Tensor z = oracle::random_tensor({2, 2, 4}, 1, -2, 2);
    const StarLayerParams p = random_layer(4, 100);
    for (AttentionKind kind : {AttentionKind::Full, AttentionKind::Zigzag, AttentionKind::Binary}) {
      Tape tape;
      const Tensor got = star_layer_forward(tape.constant(z), bind_layer(tape, p), kind, {4, 1}).out.value();
      CHECK(max_abs_diff(got, reference_layer(z, p, kind, 1)) <= 1e-10);
    }
  }
  SUBCASE("matches the reference with more frames and heads") {
    const Tensor z = oracle::random_tensor({3, 6, 8}, 2, -2, 2);
    const StarLayerParams p = random_layer(8, 200);
    for (AttentionKind kind : {AttentionKind::Zigzag, AttentionKind::Binary}) {
      Tape tape;
      const Tensor got = star_layer_forward(tape.constant(z), bind_layer(tape, p), kind, {8, 2}).out.value();
      CHECK(max_abs_diff(got, reference_layer(z, p, kind, 2)) <= 1e-10);
    }
  }
  SUBCASE("shape is preserved") {
    for (AttentionKind kind : {AttentionKind::Full, AttentionKind::Zigzag, AttentionKind::Binary})
      for (std::size_t t : {2, 4, 8}) {
        Tape tape;
        const Var z = tape.constant(oracle::random_tensor({5, t, 4}, 3));
        CHECK(star_layer_forward(z, bind_layer(tape, random_layer(4, 300)), kind, {4, 2}).out.shape() ==
              Shape{5, t, 4});
      }
  }
  SUBCASE("zeroed output projections leave three layer norms") {
    StarLayerParams p = random_layer(4, 400);
    p.fattn.wo.fill(0.0);
    p.sta.wo.fill(0.0);
    p.mlp_w2.fill(0.0);
    p.mlp_b2.fill(0.0);
    const Tensor z = oracle::random_tensor({3, 4, 4}, 4, -3, 3);
    const Tensor x = z.reshaped({12, 4});
    const Tensor want =
        ln_rows(ln_rows(ln_rows(x, p.ln1_gain, p.ln1_bias), p.ln2_gain, p.ln2_bias), p.ln3_gain, p.ln3_bias);
    for (AttentionKind kind : {AttentionKind::Zigzag, AttentionKind::Binary}) {
      Tape tape;
      const Tensor got = star_layer_forward(tape.constant(z), bind_layer(tape, p), kind, {4, 2}).out.value();
      CHECK(max_abs_diff(got.reshaped({12, 4}), want) <= 1e-12);
    }
  }
  SUBCASE("odd frame count is rejected") {
    Tape tape;
    CHECK_THROWS_AS(star_layer_forward(tape.constant(Tensor({2, 3, 4})), bind_layer(tape, random_layer(4, 1)),
                                       AttentionKind::Zigzag, {4, 2}),
                    ContractError);
  }
  SUBCASE("layer gradients match central differences") {
    const StarLayerParams p = random_layer(4, 500);
    const oracle::LossBuilder build = [&](Tape& tape, const std::vector<Var>& in) {
      StarLayerVars v = bind_layer(tape, p);
      v.sta.wq = in[1];
      v.mlp_w1 = in[2];
      v.ln2_gain = in[3];
      return oracle::project_to_scalar(star_layer_forward(in[0], v, AttentionKind::Binary, {4, 2}).out);
    };
    CHECK(oracle::finite_difference_error(build, {oracle::random_tensor({2, 4, 4}, 5), p.sta.wq, p.mlp_w1, p.ln2_gain}) <=
          1e-6);
  }
}

TEST_CASE("model forward") {
  const ModelConfig cfg = small_config();
  const StarModelParams params = init_model(cfg, 9);
  const ClipTokens clip = random_clip(cfg, 4, 4, 10);

  SUBCASE("logits are deterministic, finite and sized by classes") {
    const Tensor a = logits_of(params, cfg, clip);
    CHECK(a == logits_of(params, cfg, clip));
    CHECK(a.shape() == Shape{3});
    CHECK(a.all_finite());
    CHECK(init_model(cfg, 9).head_w == params.head_w);
  }
  SUBCASE("scheme tags follow the configured structure") {
    Tape tape;
    const auto out = model_forward(tape, bind_params(tape, params, false), cfg, clip, true);
    REQUIRE(out.rollout.records.size() == 4 * cfg.layers);
    for (const AttentionRecord& r : out.rollout.records) {
      const bool sta = r.name.ends_with(".sta");
      const AttentionKind want =
          !sta ? AttentionKind::Full : (r.name.starts_with("enc.") ? AttentionKind::Zigzag : AttentionKind::Binary);
      CHECK(r.kind == want);
    }
    CHECK(out.rollout.layout.spatial() == 4 + 2 + 3);
  }
  SUBCASE("with residual branches zeroed, logits ignore the clip") {
    StarModelParams zeroed = params;
    zero_residual_branches(zeroed);
    const Tensor a = logits_of(zeroed, cfg, clip);
    const Tensor b = logits_of(zeroed, cfg, random_clip(cfg, 4, 4, 77));
    CHECK(max_abs_diff(a, b) == 0.0);
    CHECK(max_abs_diff(logits_of(params, cfg, clip), logits_of(params, cfg, random_clip(cfg, 4, 4, 77))) > 0.0);
  }
  SUBCASE("every parameter tensor receives a gradient") {
    ModelConfig c = cfg;
    c.encoder_sta = AttentionKind::Zigzag;
    const LossAndGrad lg = loss_and_grad(params, c, clip, 1);
    std::vector<std::string> dead;
    StarModelParams::fields(lg.grads, [&](const std::string& name, const Tensor& g) {
      if (g.max_abs() == 0.0) dead.push_back(name);
    });
    CHECK(dead.empty());
    for (const auto& name : dead) MESSAGE(name);
  }
  SUBCASE("layer count mismatch") {
    ModelConfig c = cfg;
    c.layers = 3;
    Tape tape;
    CHECK_THROWS_AS(model_forward(tape, bind_params(tape, params, false), c, clip), ContractError);
  }
  SUBCASE("permuting grid slots within every frame leaves logits unchanged") {
    ClipTokens shuffled = clip;
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < cfg.global_channels; ++c)
          shuffled.grid.tokens.at(p, t, c) = clip.grid.tokens.at(perm[p], t, c);
    CHECK(max_abs_diff(logits_of(params, cfg, clip), logits_of(params, cfg, shuffled)) <= 1e-12);
  }
}

TEST_CASE("initialization") {
  const ModelConfig cfg = small_config();
  const StarModelParams p = init_model(cfg, 3);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.model_dim));
  CHECK(p.encoder[0].fattn.wq.max_abs() <= bound);
  CHECK(p.encoder[0].mlp_w2.max_abs() <= 1.0 / std::sqrt(4.0 * cfg.model_dim));
  CHECK(p.tokenizer.cls_total.max_abs() <= 0.02);
  CHECK(p.tokenizer.pos.max_abs() <= 0.02);
  CHECK(p.encoder[1].ln3_gain == Tensor::filled({cfg.model_dim}, 1.0));
  CHECK(p.head_b.max_abs() == 0.0);
  CHECK(p.encoder.size() == cfg.layers);
}

TEST_CASE("structure labels") {
  CHECK(structure_label(AttentionKind::Zigzag) == "F-Z");
  CHECK(parse_structure_label("F-B") == AttentionKind::Binary);
  CHECK_THROWS_AS(parse_structure_label("Z-B"), ConfigError);
  const ModelConfig defaults;
  CHECK(defaults.encoder_sta == AttentionKind::Zigzag);
  CHECK(defaults.decoder_sta == AttentionKind::Binary);
  CHECK(defaults.layers == 3);
}

TEST_CASE("predict and probabilities") {
  CHECK(predict(Tensor::vector({0.1, 0.9})) == 1);
  CHECK(predict(Tensor::vector({0.5, 0.5})) == 0);
  const Tensor p = softmax_probabilities(Tensor::vector({3.0, -1.0, 0.5}));
  CHECK(std::abs(p.sum() - 1.0) <= 1e-15);
}
