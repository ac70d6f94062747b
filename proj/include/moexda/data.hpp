#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "moexda/edge.hpp"
#include "moexda/errors.hpp"
#include "moexda/io.hpp"
#include "moexda/png_io.hpp"
#include "moexda/tensor.hpp"

namespace moexda {

inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kManifestHeader = "video_dir,label,num_frames";
inline constexpr const char* kBgOnlyDir = "bg_only";
inline constexpr const char* kActorOnlyDir = "actor_only";

struct VideoEntry {
  std::string video_dir;  // relative to the corpus root
  int label = 0;
  std::int64_t num_frames = 0;
};

inline bool operator==(const VideoEntry& a, const VideoEntry& b) {
  return a.video_dir == b.video_dir && a.label == b.label && a.num_frames == b.num_frames;
}

inline std::string frame_filename(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05lld.png", static_cast<long long>(index));
  return buf;
}

inline std::string manifest_path(const std::string& corpus_dir) {
  return (std::filesystem::path(corpus_dir) / kManifestName).string();
}

inline std::string write_manifest_csv(const std::vector<VideoEntry>& entries) {
  std::ostringstream out;
  out << kManifestHeader << "\n";
  for (const VideoEntry& e : entries) {
    out << e.video_dir << "," << e.label << "," << e.num_frames << "\n";
  }
  return out.str();
}

inline std::vector<VideoEntry> parse_manifest_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError("manifest " + origin + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw IoError("manifest " + origin + ": bad header '" + line + "', expected '" + kManifestHeader + "'");
  }
  std::vector<VideoEntry> entries;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = [&] { return "manifest " + origin + " line " + std::to_string(lineno); };
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = (c1 == std::string::npos) ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw IoError(where() + ": expected 3 comma-separated fields, got '" + line + "'");
    }
    VideoEntry e;
    e.video_dir = line.substr(0, c1);
    if (e.video_dir.empty()) throw IoError(where() + ": empty video_dir");
    try {
      std::size_t used = 0;
      const std::string label_s = line.substr(c1 + 1, c2 - c1 - 1);
      e.label = std::stoi(label_s, &used);
      if (used != label_s.size()) throw std::invalid_argument("");
      const std::string frames_s = line.substr(c2 + 1);
      e.num_frames = std::stoll(frames_s, &used);
      if (used != frames_s.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw IoError(where() + ": non-numeric label or num_frames in '" + line + "'");
    }
    if (e.label < 0) throw IoError(where() + ": negative label");
    if (e.num_frames < 1) throw IoError(where() + ": num_frames must be >= 1");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<VideoEntry> read_manifest(const std::string& corpus_dir) {
  const std::string path = manifest_path(corpus_dir);
  return parse_manifest_csv(read_text_file(path), path);
}

inline void write_manifest(const std::string& corpus_dir, const std::vector<VideoEntry>& entries) {
  write_text_file(manifest_path(corpus_dir), write_manifest_csv(entries));
}

// Frame indices for a T-frame clip sampled uniformly from an F-frame video:
// round(i * (F - 1) / (T - 1)) for i = 0..T-1, or just {0} when T == 1.
inline std::vector<std::int64_t> sample_clip_indices(std::int64_t num_frames, int clip_len) {
  if (num_frames < 1) throw ShapeError("sample_clip_indices: video has no frames");
  if (clip_len < 1) throw ShapeError("sample_clip_indices: clip length must be >= 1");
  if (clip_len == 1) return {0};
  std::vector<std::int64_t> indices(clip_len);
  for (int i = 0; i < clip_len; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(num_frames - 1) / (clip_len - 1);
    indices[i] = std::llround(pos);
  }
  return indices;
}

inline std::string frame_path(const std::string& corpus_dir, const std::string& video_dir, std::int64_t index) {
  return (std::filesystem::path(corpus_dir) / video_dir / frame_filename(index)).string();
}

// Loads the sampled frames of one video as a raw [T,3,H,W] tensor in [0,1].
inline Tensor load_clip_rgb(const std::string& corpus_dir, const VideoEntry& entry, int clip_len) {
  const std::vector<std::int64_t> indices = sample_clip_indices(entry.num_frames, clip_len);
  Tensor clip;
  for (int t = 0; t < clip_len; ++t) {
    const Tensor frame = read_png(frame_path(corpus_dir, entry.video_dir, indices[t]));
    if (frame.shape()[0] != 3) {
      throw IoError("load_clip_rgb: " + frame_path(corpus_dir, entry.video_dir, indices[t]) +
                    " has " + std::to_string(frame.shape()[0]) + " channels, expected 3");
    }
    if (t == 0) {
      clip = Tensor({clip_len, 3, frame.shape()[1], frame.shape()[2]});
    } else if (frame.shape()[1] != clip.shape()[2] || frame.shape()[2] != clip.shape()[3]) {
      throw ShapeError("load_clip_rgb: frame size changes within " + entry.video_dir);
    }
    std::copy(frame.data(), frame.data() + frame.size(),
              clip.data() + static_cast<std::size_t>(t) * frame.size());
  }
  return clip;
}

// One preprocessed sample: normalized RGB clip [T,3,H,W] and edge clip [T,1,H,W].
struct ClipSample {
  Tensor rgb;
  Tensor edge;
  int label = 0;
};

inline ClipSample prepare_sample(const Tensor& clip_rgb_raw, int label,
                                 const NormalizationStats& rgb_stats,
                                 const NormalizationStats& edge_stats) {
  if (clip_rgb_raw.rank() != 4 || clip_rgb_raw.shape()[1] != 3) {
    throw ShapeError("prepare_sample: expected [T,3,H,W] clip");
  }
  const std::int64_t T = clip_rgb_raw.shape()[0];
  const std::int64_t H = clip_rgb_raw.shape()[2];
  const std::int64_t W = clip_rgb_raw.shape()[3];
  ClipSample out;
  out.label = label;
  out.rgb = Tensor({T, 3, H, W});
  out.edge = Tensor({T, 1, H, W});
  const std::int64_t frame_elems = 3 * H * W;
  for (std::int64_t t = 0; t < T; ++t) {
    Tensor frame({3, H, W});
    std::copy_n(clip_rgb_raw.data() + t * frame_elems, frame_elems, frame.data());
    const Tensor rgb_n = normalize_input(frame, rgb_stats);
    const Tensor edge_n = normalize_input(edge_map(frame), edge_stats);
    std::copy(rgb_n.data(), rgb_n.data() + rgb_n.size(), out.rgb.data() + t * frame_elems);
    std::copy(edge_n.data(), edge_n.data() + edge_n.size(), out.edge.data() + t * H * W);
  }
  return out;
}

// All samples of a corpus preloaded and preprocessed, ready for batching.
using ClipStore = std::vector<ClipSample>;

inline ClipStore load_clip_store(const std::string& corpus_dir, const std::vector<VideoEntry>& entries,
                                 int clip_len, const NormalizationStats& rgb_stats,
                                 const NormalizationStats& edge_stats) {
  ClipStore store;
  store.reserve(entries.size());
  for (const VideoEntry& e : entries) {
    store.push_back(prepare_sample(load_clip_rgb(corpus_dir, e, clip_len), e.label, rgb_stats, edge_stats));
  }
  return store;
}

// Stacks the given samples into batch tensors [B,T,C,H,W] plus a label vector.
struct Batch {
  Tensor rgb;
  Tensor edge;
  std::vector<int> labels;
};

inline Batch make_batch(const ClipStore& store, const std::vector<std::size_t>& which) {
  if (which.empty()) throw ShapeError("make_batch: empty batch");
  const Shape& rs = store.at(which[0]).rgb.shape();
  const Shape& es = store.at(which[0]).edge.shape();
  const std::int64_t B = static_cast<std::int64_t>(which.size());
  Batch batch;
  batch.rgb = Tensor({B, rs[0], rs[1], rs[2], rs[3]});
  batch.edge = Tensor({B, es[0], es[1], es[2], es[3]});
  batch.labels.resize(which.size());
  for (std::size_t i = 0; i < which.size(); ++i) {
    const ClipSample& s = store.at(which[i]);
    if (s.rgb.shape() != rs || s.edge.shape() != es) {
      throw ShapeError("make_batch: sample shapes differ within batch");
    }
    std::copy(s.rgb.data(), s.rgb.data() + s.rgb.size(),
              batch.rgb.data() + static_cast<std::int64_t>(i) * s.rgb.size());
    std::copy(s.edge.data(), s.edge.data() + s.edge.size(),
              batch.edge.data() + static_cast<std::int64_t>(i) * s.edge.size());
    batch.labels[i] = s.label;
  }
  return batch;
}

// Edge-map statistics over every frame of a corpus (used to derive the
// normalization constants shipped as defaults).
inline NormalizationStats compute_corpus_stats(const std::string& corpus_dir) {
  const std::vector<VideoEntry> entries = read_manifest(corpus_dir);
  StatsAccumulator acc(1);
  for (const VideoEntry& e : entries) {
    for (std::int64_t f = 0; f < e.num_frames; ++f) {
      const Tensor frame = read_png(frame_path(corpus_dir, e.video_dir, f));
      if (frame.shape()[0] != 3) {
        throw IoError("compute_corpus_stats: expected RGB frames in " + e.video_dir);
      }
      acc.add(edge_map(frame));
    }
  }
  return acc.finalize();
}

// Resolves the bg_only / actor_only sibling of a corpus, verifying that every
// manifest video is present in the variant tree.
inline std::string variant_corpus_dir(const std::string& corpus_dir, const std::string& variant) {
  return (std::filesystem::path(corpus_dir) / variant).string();
}

inline void check_variant_tree(const std::string& corpus_dir, const std::vector<VideoEntry>& entries,
                               const std::string& variant) {
  std::vector<std::string> missing;
  const std::string root = variant_corpus_dir(corpus_dir, variant);
  for (const VideoEntry& e : entries) {
    if (!std::filesystem::is_directory(std::filesystem::path(root) / e.video_dir)) {
      missing.push_back(e.video_dir);
    }
  }
  if (!missing.empty()) {
    std::string msg = "variant tree '" + variant + "' under " + corpus_dir + " is missing ";
    msg += std::to_string(missing.size()) + " video(s):";
    for (const std::string& m : missing) msg += " " + m;
    throw IoError(msg);
  }
}

}  // namespace moexda
