#include "star/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <tuple>

#include "json.hpp"
#include "star/errors.hpp"
#include "star/random.hpp"
#include "star/stf.hpp"

namespace star {

namespace {

using nlohmann::json;

// Stick figure in image fractions relative to its centre; joints beyond the
// first 13 cycle through the list with a small vertical shift.
constexpr std::array<std::array<double, 2>, 13> kFigure{{
    {0.00, -0.16},                   // head
    {-0.05, -0.10}, {0.05, -0.10},   // shoulders
    {-0.08, -0.03}, {0.08, -0.03},   // elbows
    {-0.10, 0.04},  {0.10, 0.04},    // wrists
    {-0.04, 0.04},  {0.04, 0.04},    // hips
    {-0.05, 0.11},  {0.05, 0.11},    // knees
    {-0.06, 0.18},  {0.06, 0.18},    // ankles
}};

std::array<double, 2> figure_offset(std::size_t n) {
  auto off = kFigure[n % kFigure.size()];
  off[1] += 0.01 * static_cast<double>(n / kFigure.size());
  return off;
}

// Stage light at phase u, in mean-centred pixel units: red on the left half of
// the path, blue on the right, nothing for a figure parked at the centre.
// Grid tokens carry no position embedding, so where the figure stands has to
// show up in token content.
std::array<double, 3> stage_light(double u) {
  if (u == 0.5) return {0.0, 0.0, 0.0};
  const double s = u < 0.5 ? 0.5 : -0.5;
  return {s, 0.0, -s};
}

std::array<double, 3> joint_colour(std::size_t n, const std::array<double, 3>& light) {
  return {light[0], 0.5 + 0.25 * static_cast<double>(n % 2), light[2]};
}

json read_json_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  const std::string text = doc.dump(2) + "\n";
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string clip_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%04zu", index);
  return buf;
}

}  // namespace

void DataConfig::validate() const {
  if (classes < 2 || classes > 3)
    throw ConfigError("classes must be 2 or 3, got " + std::to_string(classes));
  if (clips_per_class == 0) throw ConfigError("clips_per_class must be positive");
  if (frames < 2 || frames % 2 != 0)
    throw ConfigError("frames must be even and at least 2, got " + std::to_string(frames));
  if (joints == 0) throw ConfigError("joints must be positive");
  if (height == 0 || width == 0) throw ConfigError("frame size must be positive");
  if (window_length > 0 && (window_length < 2 || window_start + window_length > frames))
    throw ConfigError("motion window must hold at least 2 frames inside the clip");
  if (!(noise >= 0.0) || !(jitter >= 0.0) || !(blob_radius > 0.0) || !(light >= 0.0))
    throw ConfigError("noise, jitter and light must be >= 0 and blob_radius > 0");
}

std::vector<std::size_t> DataConfig::moving_frames() const {
  const std::size_t start = window_length ? window_start : 0;
  const std::size_t count = window_length ? window_length : frames;
  std::vector<std::size_t> out(count);
  std::iota(out.begin(), out.end(), start);
  return out;
}

std::vector<std::size_t> position_schedule(const DataConfig& config, std::size_t label) {
  const std::vector<std::size_t> moving = config.moving_frames();
  const std::size_t half = config.frames / 2;
  const auto key = [&](std::size_t t) {
    const std::size_t parity = t % 2;
    const std::size_t rear = t >= half ? 1 : 0;
    switch (label) {
      case 0: return std::tuple<std::size_t, std::size_t>{0, t};
      case 1: return std::tuple<std::size_t, std::size_t>{parity, t};
      default: return std::tuple<std::size_t, std::size_t>{parity ^ rear, t};
    }
  };
  std::vector<std::size_t> order(moving.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return key(moving[a]) < key(moving[b]); });
  std::vector<std::size_t> position(moving.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) position[order[rank]] = rank;
  return position;
}

std::vector<SyntheticClip> gen_synthetic_dataset(const DataConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::vector<std::size_t> moving = config.moving_frames();
  const std::size_t t_count = config.frames, n_count = config.joints;
  const std::size_t h = config.height, w = config.width;
  const double inv_two_r2 = 1.0 / (2.0 * config.blob_radius * config.blob_radius);

  std::vector<SyntheticClip> clips;
  for (std::size_t label = 0; label < config.classes; ++label) {
    const std::vector<std::size_t> schedule = position_schedule(config, label);
    for (std::size_t c = 0; c < config.clips_per_class; ++c) {
      const double dx = config.jitter * rng.normal();
      const double dy = config.jitter * rng.normal();
      std::vector<double> phase(t_count, 0.5);
      for (std::size_t k = 0; k < moving.size(); ++k)
        phase[moving[k]] =
            static_cast<double>(schedule[k]) / static_cast<double>(moving.size() - 1);

      Tensor joints({t_count, n_count, 2});
      for (std::size_t t = 0; t < t_count; ++t)
        for (std::size_t n = 0; n < n_count; ++n) {
          const auto off = figure_offset(n);
          joints.at(t, n, 0) = std::clamp(0.2 + 0.6 * phase[t] + off[0] + dx, 0.0, 1.0);
          joints.at(t, n, 1) = std::clamp(0.5 + off[1] + dy, 0.0, 1.0);
        }

      Tensor frames({t_count, 3, h, w});
      for (std::size_t t = 0; t < t_count; ++t) {
        const auto light = stage_light(phase[t]);
        for (std::size_t ch = 0; ch < 3; ++ch)
          for (std::size_t i = 0; i < h * w; ++i)
            frames[(t * 3 + ch) * h * w + i] = config.light * light[ch];
        for (std::size_t n = 0; n < n_count; ++n) {
          const double px = joints.at(t, n, 0) * static_cast<double>(w - 1);
          const double py = joints.at(t, n, 1) * static_cast<double>(h - 1);
          const auto colour = joint_colour(n, light);
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
              const double di = static_cast<double>(i) - py, dj = static_cast<double>(j) - px;
              const double v = std::exp(-(di * di + dj * dj) * inv_two_r2);
              if (v < 1e-12) continue;
              for (std::size_t ch = 0; ch < 3; ++ch)
                frames[((t * 3 + ch) * h + i) * w + j] += colour[ch] * v;
            }
        }
      }
      if (config.noise > 0.0)
        for (std::size_t i = 0; i < frames.size(); ++i) frames[i] += config.noise * rng.normal();
      clips.push_back({label, std::move(frames), PoseSequence(std::move(joints))});
    }
  }
  return clips;
}

void save_clip_file(const std::filesystem::path& path, const SyntheticClip& clip) {
  std::filesystem::path stf = path;
  stf.replace_extension(".stf");
  write_stf(stf, clip.frames);
  json doc{{"label", clip.label},
           {"frames", stf.filename().string()},
           {"pose", json::parse(clip.pose.to_json())}};
  write_json_file(path, doc);
}

ClipSource load_clip_file(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  const auto fail = [&](const std::string& what) { return FormatError(path.string() + ": " + what); };
  if (!doc.is_object()) throw fail("expected a JSON object");
  if (!doc.contains("label") || !doc["label"].is_number_unsigned()) throw fail("missing unsigned 'label'");
  if (!doc.contains("pose")) throw fail("missing 'pose'");
  ClipSource out;
  out.label = doc["label"].get<std::size_t>();
  out.pose = PoseSequence::from_json(doc["pose"].dump());
  const auto base = path.parent_path();
  if (doc.contains("frames") && doc["frames"].is_string()) {
    out.frames = read_stf(base / doc["frames"].get<std::string>());
    if (out.frames.rank() != 4 || out.frames.dim(0) != out.pose.frames())
      throw ValidationError(path.string() + ": frames tensor " + shape_string(out.frames.shape()) +
                            " does not match " + std::to_string(out.pose.frames()) + " pose frames");
  } else if (doc.contains("features") && doc["features"].is_string()) {
    out.features = load_features(base / doc["features"].get<std::string>());
    if (out.features.size() != out.pose.frames())
      throw ValidationError(path.string() + ": " + std::to_string(out.features.size()) +
                            " feature frames but " + std::to_string(out.pose.frames()) +
                            " pose frames");
  } else {
    throw fail("needs a 'frames' or 'features' path");
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<SyntheticClip>& clips) {
  std::filesystem::create_directories(dir / "clips");
  json index = json::array();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string name = "clips/" + clip_stem(i) + ".json";
    save_clip_file(dir / name, clips[i]);
    index.push_back({{"file", name}, {"label", clips[i].label}});
  }
  write_json_file(dir / "dataset.json", json{{"clips", std::move(index)}});
}

std::vector<SyntheticClip> load_dataset(const std::filesystem::path& dir) {
  const json doc = read_json_file(dir / "dataset.json");
  if (!doc.contains("clips") || !doc["clips"].is_array())
    throw FormatError((dir / "dataset.json").string() + ": missing 'clips' array");
  std::vector<SyntheticClip> clips;
  for (const auto& entry : doc["clips"]) {
    if (!entry.contains("file") || !entry["file"].is_string())
      throw FormatError((dir / "dataset.json").string() + ": clip entry without 'file'");
    ClipSource src = load_clip_file(dir / entry["file"].get<std::string>());
    if (src.frames.size() == 0)
      throw ValidationError("dataset clips must carry frames: " + entry["file"].get<std::string>());
    clips.push_back({src.label, std::move(src.frames), std::move(src.pose)});
  }
  if (clips.empty()) throw ValidationError(dir.string() + ": dataset has no clips");
  return clips;
}

std::vector<FrameFeatures> clip_features(const ClipSource& clip, const BackboneConfig& backbone,
                                         std::uint64_t backbone_seed) {
  if (!clip.features.empty()) {
    validate_features(clip.features);
    return clip.features;
  }
  return stub_backbone(clip.frames, backbone, backbone_seed);
}

std::vector<LabeledTokens> tokenize_dataset(const std::vector<SyntheticClip>& clips,
                                            const BackboneConfig& backbone,
                                            std::uint64_t backbone_seed, double sigma) {
  std::vector<LabeledTokens> out;
  out.reserve(clips.size());
  for (const auto& clip : clips)
    out.push_back(
        {clip.label, tokenize_clip(stub_backbone(clip.frames, backbone, backbone_seed), clip.pose,
                                   sigma)});
  return out;
}

}  // namespace star
