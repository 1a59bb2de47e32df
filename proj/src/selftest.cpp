#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "star/checkpoint.hpp"
#include "star/errors.hpp"
#include "star/harness.hpp"
#include "star/ops.hpp"
#include "star/random.hpp"
#include "star/stf.hpp"

namespace star {

namespace {

std::string sci(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", value);
  return buf;
}

// Literal attention over token rows x [M x D]: per head, q_i . k_j / sqrt(dh),
// softmax over j, weighted sum of v_j, then the output projection.
Tensor loop_attention(const Tensor& xq, const Tensor& xkv, const AttentionWeights& w,
                      std::size_t heads) {
  const std::size_t mq = xq.dim(0), mk = xkv.dim(0), d = xq.dim(1), dh = d / heads;
  auto project = [d](const Tensor& x, const Tensor& m) {
    Tensor out({x.dim(0), d});
    for (std::size_t i = 0; i < x.dim(0); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t e = 0; e < d; ++e) s += x.at(i, e) * m.at(e, c);
        out.at(i, c) = s;
      }
    return out;
  };
  const Tensor q = project(xq, w.wq), k = project(xkv, w.wk), v = project(xkv, w.wv);
  Tensor mixed({mq, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < mq; ++i) {
      std::vector<double> score(mk);
      double top = -INFINITY;
      for (std::size_t j = 0; j < mk; ++j) {
        double s = 0.0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += q.at(i, c) * k.at(j, c);
        score[j] = s / std::sqrt(static_cast<double>(dh));
        top = std::max(top, score[j]);
      }
      double total = 0.0;
      for (double& s : score) total += (s = std::exp(s - top));
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < mk; ++j) s += score[j] / total * v.at(j, c);
        mixed.at(i, c) = s;
      }
    }
  return project(mixed, w.wo);
}

AttentionWeights random_weights(Rng& rng, std::size_t d) {
  return {rng.uniform_tensor({d, d}, -0.5, 0.5), rng.uniform_tensor({d, d}, -0.5, 0.5),
          rng.uniform_tensor({d, d}, -0.5, 0.5), rng.uniform_tensor({d, d}, -0.5, 0.5)};
}

AttentionVars constants(Tape& tape, const AttentionWeights& w) {
  return {tape.constant(w.wq), tape.constant(w.wk), tape.constant(w.wv), tape.constant(w.wo)};
}

SelftestCheck check_full_attention() {
  const std::size_t s = 2, t = 2, d = 4, heads = 2;
  Rng rng(11);
  const Tensor z = rng.uniform_tensor({s, t, d}, -1.0, 1.0);
  const AttentionWeights w = random_weights(rng, d);
  Tape tape;
  const Tensor got = full_attention(tape.constant(z), constants(tape, w), {d, heads}).out.value();
  const Tensor flat = z.reshaped({s * t, d});
  const double err = max_abs_diff(got.reshaped({s * t, d}), loop_attention(flat, flat, w, heads));
  return {"full attention matches loop oracle (S=2, T=2)", err <= 1e-10, "max abs err " + sci(err)};
}

// Whole grouped path: split frames, attend across groups, put frames back.
SelftestCheck check_grouped_attention(Scheme scheme) {
  const std::size_t s = 1, t = 4, d = 4, heads = 2;
  Rng rng(scheme == Scheme::Zigzag ? 12 : 13);
  const Tensor z = rng.uniform_tensor({s, t, d}, -1.0, 1.0);
  const AttentionWeights w = random_weights(rng, d);
  Tape tape;
  const Decoupled parts = decouple(tape.constant(z), scheme);
  const CrossGroupOutput cross =
      cross_group_attention(parts.group_a, parts.group_b, constants(tape, w), {d, heads});
  const Tensor got = recompose(cross.out_a, cross.out_b, parts.split).value();

  const std::vector<std::size_t> ga = scheme == Scheme::Zigzag ? std::vector<std::size_t>{0, 2}
                                                               : std::vector<std::size_t>{0, 1};
  const std::vector<std::size_t> gb = scheme == Scheme::Zigzag ? std::vector<std::size_t>{1, 3}
                                                               : std::vector<std::size_t>{2, 3};
  auto rows = [&](const std::vector<std::size_t>& frames) {
    Tensor out({frames.size(), d});
    for (std::size_t k = 0; k < frames.size(); ++k)
      for (std::size_t c = 0; c < d; ++c) out.at(k, c) = z.at(0, frames[k], c);
    return out;
  };
  const Tensor a = rows(ga), b = rows(gb);
  const Tensor oa = loop_attention(a, b, w, heads), ob = loop_attention(b, a, w, heads);
  Tensor want({s, t, d});
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < d; ++c) {
      want.at(0, ga[k], c) = oa.at(k, c);
      want.at(0, gb[k], c) = ob.at(k, c);
    }
  const double err = max_abs_diff(got, want);
  return {to_string(scheme) + " cross-group attention matches loop oracle (S=1, T=4)", err <= 1e-10,
          "max abs err " + sci(err)};
}

SelftestCheck check_round_trip() {
  Rng rng(14);
  std::size_t failures = 0;
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const std::size_t s = 1 + rng.below(6), t = 2 * (1 + rng.below(8)), d = 1 + rng.below(5);
    const Tensor z = rng.uniform_tensor({s, t, d}, -1.0, 1.0);
    for (Scheme scheme : {Scheme::Zigzag, Scheme::Binary}) {
      Tape tape;
      const Decoupled parts = decouple(tape.constant(z), scheme);
      if (!(recompose(parts.group_a, parts.group_b, parts.split).value() == z)) ++failures;
    }
  }
  return {"recompose(decouple(z)) == z, 100 grids x 2 schemes", failures == 0,
          std::to_string(failures) + " mismatches"};
}

SelftestCheck check_joint_tokens() {
  const std::size_t c = 3, h = 4, w = 4, t = 2, n = 2;
  const double sigma = 1.3;
  Rng rng(15);
  std::vector<FrameFeatures> features;
  for (std::size_t f = 0; f < t; ++f)
    features.push_back({rng.uniform_tensor({5, 2, 2}, -1.0, 1.0), rng.uniform_tensor({c, h, w}, -1.0, 1.0)});
  const PoseSequence pose(rng.uniform_tensor({t, n, 2}, 0.0, 1.0));
  const Tensor got = make_jm_tokens(features, pose, sigma).tokens;
  double err = 0.0;
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t k = 0; k < w; ++k) {
            const double di = static_cast<double>(i) - pose.y(f, j) * h;
            const double dk = static_cast<double>(k) - pose.x(f, j) * w;
            s += features[f].local_map.at(ch, i, k) * std::exp(-(di * di + dk * dk) / (2 * sigma * sigma));
          }
        err = std::max(err, std::abs(s - got.at(j, f, ch)));
      }
  return {"joint tokens match the direct double sum (4x4 local maps)", err <= 1e-12,
          "max abs err " + sci(err)};
}

SelftestCheck check_token_layout() {
  const std::size_t p = 4, n = 3, t = 2, d = 4;
  Rng rng(16);
  Tape tape;
  TokenizerVars params{tape.constant(rng.uniform_tensor({5, d}, -1, 1)), tape.constant(Tensor({d})),
                       tape.constant(rng.uniform_tensor({6, d}, -1, 1)), tape.constant(Tensor({d})),
                       tape.constant(Tensor::filled({d}, 1.0)),        tape.constant(Tensor::filled({d}, 2.0)),
                       tape.constant(Tensor::filled({d}, 3.0)),        tape.constant(Tensor({n, d}))};
  const Tensor out = aggregate_multiclass(tape.constant(rng.uniform_tensor({p, t, 5}, -1, 1)),
                                          tape.constant(rng.uniform_tensor({n, t, 6}, -1, 1)), params)
                         .value();
  const TokenLayout layout{p, n, t};
  bool ok = out.dim(0) == p + n + 3 && layout.spatial() == p + n + 3;
  for (std::size_t f = 0; ok && f < t; ++f)
    ok = out.at(layout.cls_glob_slot(), f, 0) == 1.0 && out.at(layout.cls_joint_slot(), f, 0) == 2.0 &&
         out.at(layout.cls_total_slot(), f, 0) == 3.0;
  return {"aggregated grid has S = P+N+3 with class tokens in place", ok,
          "S = " + std::to_string(out.dim(0))};
}

SelftestCheck check_stf() {
  Rng rng(17);
  const Tensor x = rng.uniform_tensor({3, 1, 4}, -1e3, 1e3);
  const bool ok = decode_stf(encode_stf(x)) == x;
  return {"STF encode/decode is bitwise exact", ok, ""};
}

SelftestCheck check_rollout() {
  Rng rng(18);
  const std::size_t m = 12;
  std::vector<Tensor> layers;
  for (std::size_t l = 0; l < 3; ++l) {
    Tensor a = rng.uniform_tensor({m, m}, 0.0, 1.0);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += a.at(i, j);
      for (std::size_t j = 0; j < m; ++j) a.at(i, j) /= s;
    }
    layers.push_back(std::move(a));
  }
  const Tensor r = attention_rollout(layers);
  double worst = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += r.at(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  const std::vector<Tensor> identities(4, Tensor::identity(m));
  const double id_err = max_abs_diff(attention_rollout(identities), Tensor::identity(m));
  return {"rollout rows sum to 1 and identity stacks roll out to identity",
          worst <= 1e-9 && id_err == 0.0, "row err " + sci(worst) + ", identity err " + sci(id_err)};
}

SelftestCheck check_complexity() {
  const ComplexityOptions defaults;
  bool ok = true;
  for (std::size_t i = 0; i < defaults.spatial.size(); ++i) {
    const ComplexityRow row = measure_complexity(defaults.spatial[i], defaults.frames[i]);
    ok = ok && row.counts_match() && row.per_group_ratio() == 0.25 && row.total_ratio() == 0.5;
  }
  return {"instrumented dot-product counts equal closed form", ok, ""};
}

SelftestCheck check_checkpoint() {
  const GradcheckSetup setup = gradcheck_setup(8, 3);
  const Checkpoint saved{setup.model, BackboneConfig{6, 5, 4, 2}, 3, 4, init_model(setup.model, 5)};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("star_selftest_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, saved);
  const Checkpoint loaded = load_checkpoint(dir);
  std::filesystem::remove_all(dir);
  bool ok = loaded.seed == saved.seed && loaded.backbone_seed == saved.backbone_seed;
  std::vector<const Tensor*> a, b;
  StarModelParams::fields(saved.params, [&](const std::string&, const Tensor& x) { a.push_back(&x); });
  StarModelParams::fields(loaded.params, [&](const std::string&, const Tensor& x) { b.push_back(&x); });
  ok = ok && a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) ok = *a[i] == *b[i];
  return {"checkpoint save/load is bitwise exact", ok, std::to_string(a.size()) + " tensors"};
}

SelftestCheck check_gradients() {
  const auto results = gradcheck_all_pairs(8, 1e-4, 0, 4);
  double worst = 0.0;
  bool ok = true;
  for (const PairGradcheck& r : results) {
    ok = ok && r.report.pass();
    worst = std::max(worst, r.report.max_rel_error());
  }
  return {"model gradients match central differences, all 9 structure pairs", ok,
          "max rel err " + sci(worst)};
}

template <class Fn>
SelftestCheck guarded(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {name, false, std::string("threw: ") + e.what()};
  }
}

}  // namespace

std::vector<SelftestCheck> run_selftest() {
  return {
      guarded("full attention oracle", check_full_attention),
      guarded("zigzag oracle", [] { return check_grouped_attention(Scheme::Zigzag); }),
      guarded("binary oracle", [] { return check_grouped_attention(Scheme::Binary); }),
      guarded("decouple round trip", check_round_trip),
      guarded("joint tokens", check_joint_tokens),
      guarded("token layout", check_token_layout),
      guarded("stf round trip", check_stf),
      guarded("rollout", check_rollout),
      guarded("complexity", check_complexity),
      guarded("checkpoint round trip", check_checkpoint),
      guarded("gradients", check_gradients),
  };
}

}  // namespace star
