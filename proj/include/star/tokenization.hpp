#pragma once

#include <cstdint>
#include <filesystem>
#include <type_traits>
#include <string>
#include <vector>

#include "star/tape.hpp"
#include "star/tensor.hpp"

namespace star {

/// Backbone outputs for one frame: global [C x h x w] and local [C' x h' x w'] maps.
struct FrameFeatures {
  Tensor global_map;
  Tensor local_map;
};

/// T frames x N joints of (x, y) image fractions in [0, 1].
class PoseSequence {
 public:
  PoseSequence() = default;
  /// `joints` has shape [T, N, 2]; throws ValidationError on out-of-range values.
  explicit PoseSequence(Tensor joints);

  std::size_t frames() const { return joints_.dim(0); }
  std::size_t joints() const { return joints_.dim(1); }
  double x(std::size_t t, std::size_t n) const { return joints_.at(t, n, 0); }
  double y(std::size_t t, std::size_t n) const { return joints_.at(t, n, 1); }
  const Tensor& tensor() const { return joints_; }

  /// {"frames": [[[x, y], ... N], ... T]}
  std::string to_json() const;
  static PoseSequence from_json(const std::string& text);

 private:
  Tensor joints_{Shape{0, 0, 2}};
};

/// Gaussian joint heat map on the local grid; values in [0, 1].
struct JointHeatMap {
  Tensor map;  // [h' x w']
};

/// Spatial x temporal x embedding token tensor [S x T x D].
struct TokenGrid {
  Tensor tokens;

  std::size_t spatial() const { return tokens.dim(0); }
  std::size_t frames() const { return tokens.dim(1); }
  std::size_t dim() const { return tokens.dim(2); }
};

struct BackboneConfig {
  std::size_t global_channels = 64;  // C
  std::size_t local_channels = 32;   // C'
  std::size_t patch = 4;             // pixels per local cell side
  std::size_t pool = 2;              // local cells per global cell side
};

/// Deterministic stand-in for the CNN backbone. `frames` is [T x 3 x H x W].
/// Each patch x patch pixel block is linearly projected (fixed random matrix, no
/// bias) to C' local channels; the global map projects the same blocks to C
/// channels and average-pools pool x pool of them.
std::vector<FrameFeatures> stub_backbone(const Tensor& frames, const BackboneConfig& config,
                                         std::uint64_t seed);

/// Throws ValidationError unless every frame has the same global and local shapes.
void validate_features(const std::vector<FrameFeatures>& features);

/// Writes frame_{t:04}_global.stf / frame_{t:04}_local.stf into `dir`.
void save_features(const std::filesystem::path& dir, const std::vector<FrameFeatures>& features);
std::vector<FrameFeatures> load_features(const std::filesystem::path& dir);

/// Token (p, t) is the channel vector of global cell p = i*w + j in frame t.
TokenGrid make_gg_tokens(const std::vector<FrameFeatures>& features);

/// exp(-((i - y h')^2 + (j - x w')^2) / (2 sigma^2)).
JointHeatMap make_joint_heatmap(double x, double y, std::size_t height, std::size_t width,
                                double sigma);

/// Token (n, t) channel c' = sum_ij local[c', i, j] * heatmap_{n,t}(i, j).
TokenGrid make_jm_tokens(const std::vector<FrameFeatures>& features, const PoseSequence& pose,
                         double sigma);

/// Learnable tensors of the multi-class token aggregation.
template <class T>
struct TokenizerParamsT {
  T proj_g_w;  // [C x D]
  T proj_g_b;  // [D]
  T proj_j_w;  // [C' x D]
  T proj_j_b;  // [D]
  T cls_glob;  // [D]
  T cls_joint;
  T cls_total;
  T pos;  // [N x D]

  template <class Self, class Fn>
  static void fields(Self& self, const std::string& prefix, Fn&& fn) {
    fn(prefix + "proj_g.w", self.proj_g_w);
    fn(prefix + "proj_g.b", self.proj_g_b);
    fn(prefix + "proj_j.w", self.proj_j_w);
    fn(prefix + "proj_j.b", self.proj_j_b);
    fn(prefix + "cls_glob", self.cls_glob);
    fn(prefix + "cls_joint", self.cls_joint);
    fn(prefix + "cls_total", self.cls_total);
    fn(prefix + "pos", self.pos);
  }

  template <class Fn>
  auto map(Fn&& fn) const -> TokenizerParamsT<std::decay_t<decltype(fn(proj_g_w))>> {
    return {fn(proj_g_w),  fn(proj_g_b),  fn(proj_j_w),  fn(proj_j_b),
            fn(cls_glob), fn(cls_joint), fn(cls_total), fn(pos)};
  }
};

using TokenizerParams = TokenizerParamsT<Tensor>;
using TokenizerVars = TokenizerParamsT<Var>;

/// Spatial slots of the aggregated grid: [cls_glob, g_1..g_P, cls_joint, j_1..j_N, cls_total].
struct TokenLayout {
  std::size_t grid_tokens = 0;   // P
  std::size_t joint_tokens = 0;  // N
  std::size_t frames = 0;        // T

  std::size_t spatial() const { return grid_tokens + joint_tokens + 3; }
  std::size_t cls_glob_slot() const { return 0; }
  std::size_t cls_joint_slot() const { return grid_tokens + 1; }
  std::size_t cls_total_slot() const { return grid_tokens + joint_tokens + 2; }
  /// Flattened token index used by the attention kernels (row-major over [S, T]).
  std::size_t token_index(std::size_t slot, std::size_t frame) const { return slot * frames + frame; }
  std::size_t token_count() const { return spatial() * frames; }
};

/// Projects both token sets to D, adds pos to the joint block, prepends the
/// class tokens and appends cls_total (class tokens are tiled over T).
/// gg is [P x T x C], jm is [N x T x C']; result is [(P+1)+(N+1)+1 x T x D].
Var aggregate_multiclass(Var gg, Var jm, const TokenizerVars& params);

}  // namespace star
