#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moexda/data.hpp"
#include "moexda/errors.hpp"
#include "moexda/io.hpp"
#include "moexda/png_io.hpp"
#include "moexda/rng.hpp"
#include "moexda/tensor.hpp"

namespace moexda {

inline constexpr int kNumMotionPatterns = 6;
inline constexpr int kMaxTexturePool = 8;
inline constexpr const char* kSceneMetaName = "scene_meta.json";

// Background base colors share (approximately) one BT.601 luminance, so after
// grayscaling the textures are indistinguishable and texture identity survives
// only in the color channels. The stripe overlay uses one shared geometry for
// the same reason.
inline constexpr std::array<std::array<double, 3>, kMaxTexturePool> kTexturePalette = {{
    {0.70, 0.40, 0.30},
    {0.30, 0.59, 0.30},
    {0.35, 0.45, 0.90},
    {0.62, 0.47, 0.12},
    {0.20, 0.58, 0.60},
    {0.64, 0.36, 0.62},
    {0.45, 0.52, 0.28},
    {0.42, 0.45, 0.70},
}};
inline constexpr double kTextureWaveAmp = 0.02;
inline constexpr double kTextureWaveLength = 6.0;  // pixels
inline constexpr double kTextureWaveAngle = 0.6;   // radians
inline constexpr double kActorLumaThreshold = 0.85;
inline constexpr double kVariantBackgroundLevel = 0.5;

inline const char* motion_pattern_name(int pattern) {
  switch (pattern) {
    case 0: return "horizontal_bounce";
    case 1: return "vertical_bounce";
    case 2: return "circular_orbit";
    case 3: return "diagonal_zigzag";
    case 4: return "expanding_pulse";
    case 5: return "figure_eight";
    default: throw ConfigError("motion_pattern_name: unknown pattern " + std::to_string(pattern));
  }
}

struct SyntheticSceneSpec {
  int num_classes = 4;
  int texture_pool = 4;
  double rho = 0.9;
  int num_videos = 64;
  int frames = 12;
  int image_size = 32;
  double actor_size_min = 0.18;
  double actor_size_max = 0.28;
  double speed_min = 1.0;
  double speed_max = 2.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_classes < 1 || num_classes > kNumMotionPatterns) {
      throw ConfigError("scene spec: num_classes must be in [1, " +
                        std::to_string(kNumMotionPatterns) + "], got " + std::to_string(num_classes));
    }
    if (texture_pool < num_classes || texture_pool > kMaxTexturePool) {
      throw ConfigError("scene spec: texture_pool must be in [num_classes, " +
                        std::to_string(kMaxTexturePool) + "], got " + std::to_string(texture_pool));
    }
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("scene spec: rho must be in [0, 1]");
    if (num_videos < 1) throw ConfigError("scene spec: num_videos must be >= 1");
    if (frames < 1) throw ConfigError("scene spec: frames must be >= 1");
    if (image_size < 8) throw ConfigError("scene spec: image_size must be >= 8");
    if (!(actor_size_min > 0.0 && actor_size_min <= actor_size_max && actor_size_max <= 0.3)) {
      throw ConfigError("scene spec: actor size range must satisfy 0 < min <= max <= 0.3");
    }
    if (!(speed_min > 0.0 && speed_min <= speed_max)) {
      throw ConfigError("scene spec: speed range must satisfy 0 < min <= max");
    }
  }
};

// Everything needed to re-render one video deterministically.
struct SceneParams {
  int label = 0;
  int pattern = 0;
  int texture = 0;
  int shape = 0;  // 0 = square, 1 = disc
  double size = 0.2;
  double speed = 1.0;
  double phase = 0.0;
  double wave_phase = 0.0;
  double x0 = 0.5;
  double y0 = 0.5;
  double actor_level = 0.95;
};

inline SceneParams draw_scene_params(const SyntheticSceneSpec& spec, Rng& rng, int video_index) {
  SceneParams p;
  p.label = video_index % spec.num_classes;
  p.pattern = p.label;
  p.shape = static_cast<int>(rng.below(2));
  p.size = rng.uniform(spec.actor_size_min, spec.actor_size_max);
  p.speed = rng.uniform(spec.speed_min, spec.speed_max);
  p.phase = rng.uniform();
  p.wave_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  p.x0 = rng.uniform(0.35, 0.65);
  p.y0 = rng.uniform(0.35, 0.65);
  p.actor_level = rng.uniform(0.92, 0.98);
  const double roll = rng.uniform();
  p.texture = (roll < spec.rho) ? p.label : static_cast<int>(rng.below(spec.texture_pool));
  return p;
}

namespace detail {

inline double tri01(double u) {
  const double t = u - std::floor(u);
  return t < 0.5 ? 2.0 * t : 2.0 - 2.0 * t;
}

inline double lerp(double lo, double hi, double w) { return lo + (hi - lo) * w; }

}  // namespace detail

// Actor center in unit coordinates at clip position frac ∈ [0, 1].
inline std::pair<double, double> actor_center(const SceneParams& p, double frac) {
  const double u = p.phase + frac * p.speed;
  constexpr double kTau = 2.0 * std::numbers::pi;
  switch (p.pattern) {
    case 0: return {detail::lerp(0.2, 0.8, detail::tri01(u)), p.y0};
    case 1: return {p.x0, detail::lerp(0.2, 0.8, detail::tri01(u))};
    case 2: return {0.5 + 0.28 * std::cos(kTau * u), 0.5 + 0.28 * std::sin(kTau * u)};
    case 3: return {detail::lerp(0.2, 0.8, detail::tri01(u)), detail::lerp(0.2, 0.8, detail::tri01(2.0 * u))};
    case 4: return {detail::lerp(0.4, 0.6, (p.x0 - 0.35) / 0.3), detail::lerp(0.4, 0.6, (p.y0 - 0.35) / 0.3)};
    case 5: return {0.5 + 0.30 * std::sin(kTau * u), 0.5 + 0.15 * std::sin(2.0 * kTau * u)};
    default: throw ConfigError("actor_center: unknown pattern");
  }
}

// Actor half-extent in unit coordinates; only the pulse pattern animates it.
inline double actor_radius(const SceneParams& p, double frac) {
  const double base = 0.5 * p.size;
  if (p.pattern != 4) return base;
  return base * (0.55 + 0.45 * detail::tri01(p.phase + frac * p.speed));
}

inline void paint_background(Tensor& img, const SceneParams& p) {
  const std::int64_t H = img.shape()[1];
  const std::int64_t W = img.shape()[2];
  const std::array<double, 3>& base = kTexturePalette.at(static_cast<std::size_t>(p.texture));
  const double kx = std::cos(kTextureWaveAngle) / kTextureWaveLength;
  const double ky = std::sin(kTextureWaveAngle) / kTextureWaveLength;
  constexpr double kTau = 2.0 * std::numbers::pi;
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) {
      const double w = std::sin(kTau * (static_cast<double>(x) * kx + static_cast<double>(y) * ky) + p.wave_phase);
      for (std::int64_t c = 0; c < 3; ++c) {
        img(c, y, x) = std::clamp(base[static_cast<std::size_t>(c)] + kTextureWaveAmp * w, 0.0, 1.0);
      }
    }
  }
}

inline void paint_flat(Tensor& img, double level) {
  std::fill(img.data(), img.data() + img.size(), level);
}

inline void paint_actor(Tensor& img, const SceneParams& p, double frac) {
  const std::int64_t H = img.shape()[1];
  const std::int64_t W = img.shape()[2];
  const auto [cx, cy] = actor_center(p, frac);
  const double r = actor_radius(p, frac);
  for (std::int64_t y = 0; y < H; ++y) {
    const double uy = (static_cast<double>(y) + 0.5) / static_cast<double>(H);
    for (std::int64_t x = 0; x < W; ++x) {
      const double ux = (static_cast<double>(x) + 0.5) / static_cast<double>(W);
      const bool inside = (p.shape == 0)
                              ? (std::abs(ux - cx) <= r && std::abs(uy - cy) <= r)
                              : ((ux - cx) * (ux - cx) + (uy - cy) * (uy - cy) <= r * r);
      if (inside) {
        for (std::int64_t c = 0; c < 3; ++c) img(c, y, x) = p.actor_level;
      }
    }
  }
}

enum class SceneVariant { kFull, kBgOnly, kActorOnly };

inline Tensor render_frame(const SceneParams& p, int image_size, double frac, SceneVariant variant) {
  Tensor img({3, image_size, image_size});
  if (variant == SceneVariant::kActorOnly) {
    paint_flat(img, kVariantBackgroundLevel);
  } else {
    paint_background(img, p);
  }
  if (variant != SceneVariant::kBgOnly) {
    paint_actor(img, p, frac);
  }
  return img;
}

struct SceneRecord {
  std::string video_dir;
  SceneParams params;
};

inline std::string video_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "video_%05d", index);
  return buf;
}

inline nlohmann::ordered_json scene_meta_json(const std::vector<SceneRecord>& records) {
  nlohmann::ordered_json meta;
  meta["videos"] = nlohmann::ordered_json::array();
  for (const SceneRecord& r : records) {
    nlohmann::ordered_json v;
    v["video_dir"] = r.video_dir;
    v["label"] = r.params.label;
    v["pattern"] = r.params.pattern;
    v["texture"] = r.params.texture;
    v["shape"] = r.params.shape == 0 ? "square" : "disc";
    v["size"] = r.params.size;
    v["speed"] = r.params.speed;
    meta["videos"].push_back(std::move(v));
  }
  return meta;
}

struct SceneMetaEntry {
  std::string video_dir;
  int label = 0;
  int pattern = 0;
  int texture = 0;
};

inline std::vector<SceneMetaEntry> read_scene_meta(const std::string& corpus_dir) {
  const std::string path = (std::filesystem::path(corpus_dir) / kSceneMetaName).string();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("scene meta " + path + ": " + e.what());
  }
  if (!meta.is_object() || !meta.contains("videos") || !meta["videos"].is_array()) {
    throw IoError("scene meta " + path + ": missing 'videos' array");
  }
  std::vector<SceneMetaEntry> out;
  for (const auto& v : meta["videos"]) {
    SceneMetaEntry e;
    e.video_dir = v.at("video_dir").get<std::string>();
    e.label = v.at("label").get<int>();
    e.pattern = v.at("pattern").get<int>();
    e.texture = v.at("texture").get<int>();
    out.push_back(std::move(e));
  }
  return out;
}

inline std::vector<VideoEntry> generate_dataset(const SyntheticSceneSpec& spec, const std::string& out_dir,
                                                std::vector<SceneRecord>* records_out = nullptr) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("generate_dataset: cannot create " + out_dir + ": " + ec.message());

  Rng root(spec.seed);
  std::vector<VideoEntry> entries;
  std::vector<SceneRecord> records;
  entries.reserve(static_cast<std::size_t>(spec.num_videos));
  for (int v = 0; v < spec.num_videos; ++v) {
    Rng rng = root.fork(static_cast<std::uint64_t>(v));
    const SceneParams p = draw_scene_params(spec, rng, v);
    const std::string dir = video_dir_name(v);
    const fs::path full_dir = fs::path(out_dir) / dir;
    const fs::path bg_dir = fs::path(out_dir) / kBgOnlyDir / dir;
    const fs::path actor_dir = fs::path(out_dir) / kActorOnlyDir / dir;
    for (const fs::path& d : {full_dir, bg_dir, actor_dir}) {
      fs::create_directories(d, ec);
      if (ec) throw IoError("generate_dataset: cannot create " + d.string() + ": " + ec.message());
    }
    for (int f = 0; f < spec.frames; ++f) {
      const double frac = spec.frames > 1 ? static_cast<double>(f) / (spec.frames - 1) : 0.0;
      const std::string name = frame_filename(f);
      write_png((full_dir / name).string(), render_frame(p, spec.image_size, frac, SceneVariant::kFull));
      write_png((bg_dir / name).string(), render_frame(p, spec.image_size, frac, SceneVariant::kBgOnly));
      write_png((actor_dir / name).string(), render_frame(p, spec.image_size, frac, SceneVariant::kActorOnly));
    }
    entries.push_back({dir, p.label, spec.frames});
    records.push_back({dir, p});
  }
  write_manifest(out_dir, entries);
  write_text_file((fs::path(out_dir) / kSceneMetaName).string(), scene_meta_json(records).dump(2) + "\n");
  if (records_out) *records_out = std::move(records);
  return entries;
}

}  // namespace moexda
