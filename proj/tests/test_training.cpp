#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "star/dataset.hpp"
#include "star/errors.hpp"
#include "star/training.hpp"

using namespace star;

namespace {

DataConfig tiny_data() {
  DataConfig d;
  d.clips_per_class = 2;
  d.frames = 4;
  d.joints = 3;
  d.height = 16;
  d.width = 16;
  return d;
}

const BackboneConfig kTinyBackbone{6, 5, 4, 2};

ModelConfig tiny_model() {
  ModelConfig m;
  m.global_channels = 6;
  m.local_channels = 5;
  m.joints = 3;
  m.model_dim = 8;
  m.heads = 2;
  m.layers = 1;
  m.sigma = 1.0;
  return m;
}

std::vector<LabeledTokens> tiny_tokens(std::uint64_t seed) {
  return tokenize_dataset(gen_synthetic_dataset(tiny_data(), seed), kTinyBackbone, seed + 1, 1.0);
}

// Mean of each colour channel over a frame.
std::vector<double> frame_means(const Tensor& frames, std::size_t t) {
  const std::size_t hw = frames.dim(2) * frames.dim(3);
  std::vector<double> out(3, 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i) out[c] += frames[(t * 3 + c) * hw + i] / hw;
  return out;
}

}  // namespace

TEST_CASE("synthetic dataset") {
  DataConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  const auto a = gen_synthetic_dataset(cfg, 5);

  SUBCASE("deterministic and balanced") {
    const auto b = gen_synthetic_dataset(cfg, 5);
    REQUIRE(a.size() == 24);
    std::map<std::size_t, int> counts;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].frames == b[i].frames);
      CHECK(a[i].pose.tensor() == b[i].pose.tensor());
      ++counts[a[i].label];
    }
    CHECK(counts == std::map<std::size_t, int>{{0, 8}, {1, 8}, {2, 8}});
    CHECK(!(gen_synthetic_dataset(cfg, 6)[0].frames == a[0].frames));
  }
  SUBCASE("every class shows the same set of phases") {
    for (std::size_t label = 1; label < 3; ++label) {
      auto s0 = position_schedule(cfg, 0), s = position_schedule(cfg, label);
      std::sort(s0.begin(), s0.end());
      std::sort(s.begin(), s.end());
      CHECK(s == s0);
    }
  }
  SUBCASE("frame order carries the class, the bag of frames does not") {
    // Nearest-centroid classifiers on per-frame colour means, once with frames
    // in order and once sorted (which discards order).
    auto features = [&](const SyntheticClip& clip, bool sorted) {
      std::vector<std::vector<double>> frames;
      for (std::size_t t = 0; t < cfg.frames; ++t) frames.push_back(frame_means(clip.frames, t));
      if (sorted) std::sort(frames.begin(), frames.end());
      std::vector<double> flat;
      for (const auto& f : frames) flat.insert(flat.end(), f.begin(), f.end());
      return flat;
    };
    auto spread = [&](bool sorted) {
      std::vector<std::vector<double>> centroid(3);
      for (const auto& clip : a) {
        const auto f = features(clip, sorted);
        if (centroid[clip.label].empty()) centroid[clip.label].assign(f.size(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) centroid[clip.label][i] += f[i] / 8.0;
      }
      double worst = 0.0;
      for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t y = x + 1; y < 3; ++y)
          for (std::size_t i = 0; i < centroid[x].size(); ++i)
            worst = std::max(worst, std::abs(centroid[x][i] - centroid[y][i]));
      return worst;
    };
    const double ordered = spread(false), bag = spread(true);
    CHECK(ordered > 0.5);
    CHECK(bag < 0.01);
  }
  SUBCASE("windowed clips move only inside the window") {
    DataConfig w = cfg;
    w.window_start = 6;
    w.window_length = 4;
    CHECK(w.moving_frames() == std::vector<std::size_t>{6, 7, 8, 9});
    const auto clips = gen_synthetic_dataset(w, 1);
    for (std::size_t t : {0, 5, 10, 15}) {
      const auto m = frame_means(clips[0].frames, t);
      CHECK(std::abs(m[0] - m[2]) < 0.01);  // unlit: no red/blue imbalance
    }
    const auto lit = frame_means(clips[0].frames, 6);
    CHECK(std::abs(lit[0] - lit[2]) > 0.5);
  }
  SUBCASE("invalid configs") {
    DataConfig bad = cfg;
    bad.frames = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.classes = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.window_start = 14;
    bad.window_length = 4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("dataset files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "star_test_dataset";
  std::filesystem::remove_all(dir);
  const auto clips = gen_synthetic_dataset(tiny_data(), 3);
  save_dataset(dir, clips);
  const auto back = load_dataset(dir);
  REQUIRE(back.size() == clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    CHECK(back[i].label == clips[i].label);
    CHECK(back[i].frames == clips[i].frames);
    CHECK(back[i].pose.tensor() == clips[i].pose.tensor());
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("cross entropy") {
  Tape tape;
  SUBCASE("uniform logits give ln k") {
    CHECK(cross_entropy(tape.constant(Tensor::vector({0.3, 0.3, 0.3})), 1).value()[0] ==
          doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("large margin gives near zero") {
    CHECK(cross_entropy(tape.constant(Tensor::vector({-50.0, 50.0})), 1).value()[0] < 1e-40);
    CHECK(cross_entropy(tape.constant(Tensor::vector({1000.0, 0.0})), 1).value()[0] == doctest::Approx(1000.0));
  }
  SUBCASE("gradient matches central differences") {
    const oracle::LossBuilder build = [](Tape&, const std::vector<Var>& in) { return cross_entropy(in[0], 2); };
    CHECK(oracle::finite_difference_error(build, {oracle::random_tensor({4}, 3, -2, 2)}, 4) <= 1e-6);
  }
}

TEST_CASE("sgd step") {
  const Tensor g = Tensor::vector({1.0, -2.0});
  SUBCASE("no momentum is plain descent") {
    Tensor p = Tensor::vector({0.5, 0.5}), v({2});
    sgd_step(p, g, v, 0.1, 0.0);
    CHECK(p[0] == doctest::Approx(0.4));
    CHECK(p[1] == doctest::Approx(0.7));
  }
  SUBCASE("zero gradient and velocity change nothing") {
    Tensor p = Tensor::vector({0.5, 0.5}), v({2});
    sgd_step(p, Tensor({2}), v, 0.1, 0.9);
    CHECK(p == Tensor::vector({0.5, 0.5}));
  }
  SUBCASE("two steps with a constant gradient move -lr (2 + mu) g") {
    Tensor p({2}), v({2});
    sgd_step(p, g, v, 0.01, 0.9);
    sgd_step(p, g, v, 0.01, 0.9);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(p[i] + 0.01 * 2.9 * g[i]) <= 1e-15);
  }
  SUBCASE("shape mismatch") {
    Tensor p({3}), v({3});
    CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 0.9), ContractError);
  }
}

TEST_CASE("gradcheck harness") {
  Tensor w = oracle::random_tensor({3}, 1);
  const Tensor x = oracle::random_tensor({3}, 2);
  const std::vector<NamedTensor> params{{"w", &w}};
  const auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += w[i] * x[i];
    return s;
  };
  SUBCASE("linear model is exact") {
    const auto report = gradcheck(params, loss, [&] { return std::vector<Tensor>{x}; }, 1e-9);
    CHECK(report.pass());
    CHECK(report.max_rel_error() <= 1e-9);
  }
  SUBCASE("negated gradient fails") {
    Tensor neg = x;
    for (double& v : neg.data()) v = -v;
    const auto report = gradcheck(params, loss, [&] { return std::vector<Tensor>{neg}; }, 1e-4);
    CHECK_FALSE(report.pass());
  }
  SUBCASE("full model, D = 8, every structure") {
    const auto tokens = tiny_tokens(4);
    for (AttentionKind enc : {AttentionKind::Full, AttentionKind::Zigzag, AttentionKind::Binary}) {
      ModelConfig m = tiny_model();
      m.layers = 2;
      m.encoder_sta = enc;
      m.decoder_sta = enc == AttentionKind::Zigzag ? AttentionKind::Binary : AttentionKind::Zigzag;
      const auto report = gradcheck_model(init_model(m, 5), m, tokens[2].tokens, tokens[2].label, 1e-4, 4);
      CHECK(report.pass());
      CHECK(report.max_rel_error() <= 1e-4);
    }
  }
}

TEST_CASE("training loop") {
  const auto tokens = tiny_tokens(7);
  const ModelConfig m = tiny_model();
  TrainConfig t;
  t.epochs = 2;

  SUBCASE("starts near chance loss") {
    const auto result = train(init_model(m, 1), m, tokens, t, 2);
    REQUIRE(result.log.size() == 2);
    CHECK(result.log[0].loss == doctest::Approx(std::log(3.0)).epsilon(0.2));
    CHECK(result.steps == 4);
    CHECK(result.log[1].steps == 4);
  }
  SUBCASE("identical seeds give identical runs") {
    const auto a = train(init_model(m, 1), m, tokens, t, 2);
    const auto b = train(init_model(m, 1), m, tokens, t, 2);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(a.log[e].loss == b.log[e].loss);
      CHECK(a.log[e].accuracy == b.log[e].accuracy);
    }
    CHECK(a.params.head_w == b.params.head_w);
    CHECK(a.params.encoder[0].fattn.wq == b.params.encoder[0].fattn.wq);
  }
  SUBCASE("empty dataset") {
    CHECK_THROWS_AS(train(init_model(m, 1), m, {}, t, 2), ContractError);
  }
  SUBCASE("one clip with a small step size: loss never rises") {
    TrainConfig small;
    small.learning_rate = 1e-3;
    small.momentum = 0.0;
    small.epochs = 6;
    const std::vector<LabeledTokens> one{tokens[0]};
    const auto result = train(init_model(m, 3), m, one, small, 2);
    for (std::size_t e = 1; e < result.log.size(); ++e) CHECK(result.log[e].loss <= result.log[e - 1].loss);
    CHECK(result.final_eval.loss < result.log[0].loss);
  }
  SUBCASE("full and grouped structures both train") {
    for (auto pair : {std::pair{AttentionKind::Full, AttentionKind::Full},
                      std::pair{AttentionKind::Zigzag, AttentionKind::Binary}}) {
      ModelConfig c = m;
      c.encoder_sta = pair.first;
      c.decoder_sta = pair.second;
      const auto result = train(init_model(c, 1), c, tokens, t, 2);
      CHECK(std::isfinite(result.final_eval.loss));
      CHECK(result.final_eval.predictions.size() == tokens.size());
    }
  }
  SUBCASE("non-finite loss is a numerical error") {
    TrainConfig wild = t;
    wild.learning_rate = 1e300;
    CHECK_THROWS_AS(train(init_model(m, 1), m, tokens, wild, 2), NumericalError);
  }
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK(t.learning_rate == 2e-4);
  CHECK(t.momentum == 0.9);
  CHECK(t.batch_size == 4);
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}
