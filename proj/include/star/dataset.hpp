#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "star/model.hpp"
#include "star/tensor.hpp"
#include "star/tokenization.hpp"

namespace star {

/// Synthetic clips. A stick figure walks across a stage along T phases from
/// left to right. The left half of the stage is lit red and the right half
/// blue; pixels are mean-centred, so the two lights are exact opposites and
/// light the whole frame. Every class shows the same phases; classes differ
/// only in which frame shows which phase:
///   class 0: sweep in frame order (first half red, second half blue);
///   class 1: even frames take the red phases, odd frames the blue ones;
///   class 2: as class 1 with parity flipped in the second half of the clip.
/// Any single frame, and the multiset of frames, is therefore uninformative.
/// When `window_length > 0` only frames in [window_start, window_start + window_length)
/// move; the rest park the figure at centre stage, unlit.
struct DataConfig {
  std::size_t classes = 3;
  std::size_t clips_per_class = 8;
  std::size_t frames = 16;  // T
  std::size_t joints = 13;  // N
  std::size_t height = 56;
  std::size_t width = 56;
  std::size_t window_start = 0;
  std::size_t window_length = 0;
  double noise = 0.02;       // std of additive pixel noise
  double jitter = 0.01;      // std of per-clip figure offset, image fractions
  double blob_radius = 1.5;  // Gaussian blob std in pixels
  double light = 2.0;        // stage light strength

  void validate() const;
  /// Frames whose position depends on the class.
  std::vector<std::size_t> moving_frames() const;
};

struct SyntheticClip {
  std::size_t label = 0;
  Tensor frames;  // [T x 3 x H x W]
  PoseSequence pose;
};

/// Phase index (0 = leftmost, reddest) assigned to each moving frame for `label`.
std::vector<std::size_t> position_schedule(const DataConfig& config, std::size_t label);

/// Clips ordered by class, `clips_per_class` each.
std::vector<SyntheticClip> gen_synthetic_dataset(const DataConfig& config, std::uint64_t seed);

/// Writes dataset.json plus clip_XXXX.json / clip_XXXX.stf per clip.
void save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticClip>& clips);
std::vector<SyntheticClip> load_dataset(const std::filesystem::path& dir);

/// A clip file is {"label": k, "pose": {...}, "frames": "x.stf"} or, for
/// precomputed features, {"label": k, "pose": {...}, "features": "dir"}; paths
/// are relative to the clip file.
struct ClipSource {
  std::size_t label = 0;
  PoseSequence pose;
  Tensor frames;                        // empty when features are given
  std::vector<FrameFeatures> features;  // empty when frames are given
};
ClipSource load_clip_file(const std::filesystem::path& path);
void save_clip_file(const std::filesystem::path& path, const SyntheticClip& clip);

struct LabeledTokens {
  std::size_t label = 0;
  ClipTokens tokens;
};

/// Features for a clip source: the given ones, or the stub backbone's.
std::vector<FrameFeatures> clip_features(const ClipSource& clip, const BackboneConfig& backbone,
                                         std::uint64_t backbone_seed);

std::vector<LabeledTokens> tokenize_dataset(const std::vector<SyntheticClip>& clips,
                                            const BackboneConfig& backbone,
                                            std::uint64_t backbone_seed, double sigma);

}  // namespace star
