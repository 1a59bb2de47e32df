#include "star/tokenization.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "star/errors.hpp"
#include "star/ops.hpp"
#include "star/random.hpp"
#include "star/stf.hpp"

namespace star {

PoseSequence::PoseSequence(Tensor joints) : joints_(std::move(joints)) {
  if (joints_.rank() != 3 || joints_.dim(2) != 2) {
    throw ValidationError("pose tensor must be [T x N x 2], got " + shape_string(joints_.shape()));
  }
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const double v = joints_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      const std::size_t t = i / (joints_.dim(1) * 2);
      const std::size_t n = (i / 2) % joints_.dim(1);
      throw ValidationError("pose coordinate out of [0,1] at frame " + std::to_string(t) +
                            ", joint " + std::to_string(n) + ": " + std::to_string(v));
    }
  }
}

std::string PoseSequence::to_json() const {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < this->frames(); ++t) {
    nlohmann::json frame = nlohmann::json::array();
    for (std::size_t n = 0; n < joints(); ++n) frame.push_back({x(t, n), y(t, n)});
    frames.push_back(std::move(frame));
  }
  return nlohmann::json{{"frames", std::move(frames)}}.dump();
}

PoseSequence PoseSequence::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("pose JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("frames") || !doc["frames"].is_array()) {
    throw FormatError("pose JSON: expected {\"frames\": [...]}");
  }
  const auto& frames = doc["frames"];
  const std::size_t t_count = frames.size();
  const std::size_t n_count = t_count ? frames[0].size() : 0;
  Tensor joints({t_count, n_count, 2});
  for (std::size_t t = 0; t < t_count; ++t) {
    if (!frames[t].is_array() || frames[t].size() != n_count) {
      throw ValidationError("pose JSON: frame " + std::to_string(t) + " has " +
                            std::to_string(frames[t].size()) + " joints, expected " +
                            std::to_string(n_count));
    }
    for (std::size_t n = 0; n < n_count; ++n) {
      const auto& xy = frames[t][n];
      if (!xy.is_array() || xy.size() != 2 || !xy[0].is_number() || !xy[1].is_number()) {
        throw FormatError("pose JSON: frame " + std::to_string(t) + ", joint " + std::to_string(n) +
                          " is not an [x, y] pair");
      }
      joints.at(t, n, 0) = xy[0].get<double>();
      joints.at(t, n, 1) = xy[1].get<double>();
    }
  }
  return PoseSequence(std::move(joints));
}

std::vector<FrameFeatures> stub_backbone(const Tensor& frames, const BackboneConfig& config,
                                         std::uint64_t seed) {
  if (frames.rank() != 4 || frames.dim(1) != 3) {
    throw ConfigError("stub_backbone expects frames [T x 3 x H x W], got " +
                      shape_string(frames.shape()));
  }
  if (config.patch == 0 || config.pool == 0 || config.global_channels == 0 ||
      config.local_channels == 0) {
    throw ConfigError("stub_backbone: patch, pool and channel counts must be positive");
  }
  const std::size_t t_count = frames.dim(0), height = frames.dim(2), width = frames.dim(3);
  const std::size_t cell = config.patch * config.pool;
  if (height % cell != 0 || width % cell != 0) {
    throw ConfigError("stub_backbone: frame size " + std::to_string(height) + "x" +
                      std::to_string(width) + " not divisible by global patch " +
                      std::to_string(cell));
  }
  const std::size_t lh = height / config.patch, lw = width / config.patch;
  const std::size_t gh = lh / config.pool, gw = lw / config.pool;
  const std::size_t patch_len = 3 * config.patch * config.patch;
  const double bound = 1.0 / std::sqrt(static_cast<double>(patch_len));
  Rng local_rng(derive_seed(seed, "backbone.local"));
  Rng global_rng(derive_seed(seed, "backbone.global"));
  const Tensor local_proj = local_rng.uniform_tensor({config.local_channels, patch_len}, -bound, bound);
  const Tensor global_proj =
      global_rng.uniform_tensor({config.global_channels, patch_len}, -bound, bound);
  const double pool_norm = 1.0 / static_cast<double>(config.pool * config.pool);

  std::vector<FrameFeatures> out(t_count);
  std::vector<double> patch(patch_len);
  for (std::size_t t = 0; t < t_count; ++t) {
    Tensor local({config.local_channels, lh, lw});
    Tensor global({config.global_channels, gh, gw});
    for (std::size_t i = 0; i < lh; ++i) {
      for (std::size_t j = 0; j < lw; ++j) {
        std::size_t q = 0;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t di = 0; di < config.patch; ++di)
            for (std::size_t dj = 0; dj < config.patch; ++dj)
              patch[q++] = frames[((t * 3 + c) * height + i * config.patch + di) * width +
                                  j * config.patch + dj];
        for (std::size_t c = 0; c < config.local_channels; ++c) {
          double s = 0.0;
          for (std::size_t k = 0; k < patch_len; ++k) s += local_proj.at(c, k) * patch[k];
          local.at(c, i, j) = s;
        }
        const std::size_t gi = i / config.pool, gj = j / config.pool;
        for (std::size_t c = 0; c < config.global_channels; ++c) {
          double s = 0.0;
          for (std::size_t k = 0; k < patch_len; ++k) s += global_proj.at(c, k) * patch[k];
          global.at(c, gi, gj) += pool_norm * s;
        }
      }
    }
    out[t] = FrameFeatures{std::move(global), std::move(local)};
  }
  return out;
}

void validate_features(const std::vector<FrameFeatures>& features) {
  if (features.empty()) throw ValidationError("feature list is empty");
  const Shape& g0 = features[0].global_map.shape();
  const Shape& l0 = features[0].local_map.shape();
  if (g0.size() != 3 || l0.size() != 3) {
    throw ValidationError("feature maps must be rank 3, got " + shape_string(g0) + " and " +
                          shape_string(l0));
  }
  for (std::size_t t = 1; t < features.size(); ++t) {
    if (features[t].global_map.shape() != g0) {
      throw ValidationError("frame " + std::to_string(t) + " global map " +
                            shape_string(features[t].global_map.shape()) + " differs from frame 0 " +
                            shape_string(g0));
    }
    if (features[t].local_map.shape() != l0) {
      throw ValidationError("frame " + std::to_string(t) + " local map " +
                            shape_string(features[t].local_map.shape()) + " differs from frame 0 " +
                            shape_string(l0));
    }
  }
}

namespace {

std::filesystem::path feature_path(const std::filesystem::path& dir, std::size_t t,
                                   const char* role) {
  char name[64];
  std::snprintf(name, sizeof(name), "frame_%04zu_%s.stf", t, role);
  return dir / name;
}

}  // namespace

void save_features(const std::filesystem::path& dir, const std::vector<FrameFeatures>& features) {
  validate_features(features);
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < features.size(); ++t) {
    write_stf(feature_path(dir, t, "global"), features[t].global_map);
    write_stf(feature_path(dir, t, "local"), features[t].local_map);
  }
}

std::vector<FrameFeatures> load_features(const std::filesystem::path& dir) {
  std::vector<FrameFeatures> out;
  for (std::size_t t = 0;; ++t) {
    const auto g = feature_path(dir, t, "global");
    const auto l = feature_path(dir, t, "local");
    const bool has_g = std::filesystem::exists(g), has_l = std::filesystem::exists(l);
    if (!has_g && !has_l) break;
    if (has_g != has_l) {
      throw FormatError("frame " + std::to_string(t) + " is missing its " +
                        (has_g ? "local" : "global") + " feature file in " + dir.string());
    }
    out.push_back(FrameFeatures{read_stf(g), read_stf(l)});
  }
  if (out.empty()) throw FormatError("no frame_0000_global.stf in " + dir.string());
  validate_features(out);
  return out;
}

TokenGrid make_gg_tokens(const std::vector<FrameFeatures>& features) {
  validate_features(features);
  const Tensor& g0 = features[0].global_map;
  const std::size_t c_count = g0.dim(0), cells = g0.dim(1) * g0.dim(2);
  const std::size_t t_count = features.size();
  Tensor tokens({cells, t_count, c_count});
  for (std::size_t t = 0; t < t_count; ++t) {
    const Tensor& g = features[t].global_map;
    for (std::size_t c = 0; c < c_count; ++c)
      for (std::size_t p = 0; p < cells; ++p) tokens.at(p, t, c) = g[c * cells + p];
  }
  return TokenGrid{std::move(tokens)};
}

JointHeatMap make_joint_heatmap(double x, double y, std::size_t height, std::size_t width,
                                double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
  Tensor map({height, width});
  const double cy = y * static_cast<double>(height);
  const double cx = x * static_cast<double>(width);
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const double di = static_cast<double>(i) - cy;
      const double dj = static_cast<double>(j) - cx;
      map.at(i, j) = std::exp(-(di * di + dj * dj) / denom);
    }
  return JointHeatMap{std::move(map)};
}

TokenGrid make_jm_tokens(const std::vector<FrameFeatures>& features, const PoseSequence& pose,
                         double sigma) {
  validate_features(features);
  if (pose.frames() != features.size()) {
    throw ValidationError("pose has " + std::to_string(pose.frames()) + " frames, features have " +
                          std::to_string(features.size()));
  }
  const Tensor& l0 = features[0].local_map;
  const std::size_t c_count = l0.dim(0), h = l0.dim(1), w = l0.dim(2);
  const std::size_t t_count = features.size(), n_count = pose.joints();
  Tensor tokens({n_count, t_count, c_count});
  for (std::size_t t = 0; t < t_count; ++t) {
    const Tensor& local = features[t].local_map;
    for (std::size_t n = 0; n < n_count; ++n) {
      const JointHeatMap heat = make_joint_heatmap(pose.x(t, n), pose.y(t, n), h, w, sigma);
      for (std::size_t c = 0; c < c_count; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) s += local[c * h * w + i] * heat.map[i];
        tokens.at(n, t, c) = s;
      }
    }
  }
  return TokenGrid{std::move(tokens)};
}

Var aggregate_multiclass(Var gg, Var jm, const TokenizerVars& params) {
  const Shape& gs = gg.shape();
  const Shape& js = jm.shape();
  if (gs.size() != 3 || js.size() != 3) {
    throw DimensionError("aggregate_multiclass: token grids must be rank 3, got " +
                         shape_string(gs) + " and " + shape_string(js));
  }
  if (gs[1] != js[1]) {
    throw ValidationError("aggregate_multiclass: GG tokens have T=" + std::to_string(gs[1]) +
                          " but JM tokens have T=" + std::to_string(js[1]));
  }
  const std::size_t t_count = gs[1];
  const std::size_t d = params.cls_glob.shape().at(0);
  if (params.pos.shape() != Shape{js[0], d}) {
    throw DimensionError("aggregate_multiclass: pos " + shape_string(params.pos.shape()) +
                         " does not match " + std::to_string(js[0]) + " joints x D=" +
                         std::to_string(d));
  }
  auto tiled = [&](Var cls) { return repeat(reshape(cls, {1, 1, d}), 1, t_count); };

  Var grid_block = concat({tiled(params.cls_glob), affine(gg, params.proj_g_w, params.proj_g_b)}, 0);
  Var joints = affine(jm, params.proj_j_w, params.proj_j_b);
  joints = add(joints, repeat(reshape(params.pos, {js[0], 1, d}), 1, t_count));
  Var joint_block = concat({tiled(params.cls_joint), joints}, 0);
  return concat({grid_block, joint_block, tiled(params.cls_total)}, 0);
}

}  // namespace star
