#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "moexda/errors.hpp"
#include "moexda/io.hpp"
#include "moexda/tensor.hpp"

namespace moexda {

// Per-channel normalization constants. The shipped defaults are what the
// streams are trained with; edge stats can also be re-estimated from a corpus
// with StatsAccumulator.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::int64_t num_pixels = 0;

  int channels() const { return static_cast<int>(mean.size()); }
};

inline NormalizationStats default_rgb_stats() {
  return NormalizationStats{{0.485, 0.456, 0.406}, {0.229, 0.224, 0.225}, 0};
}

inline NormalizationStats default_edge_stats() { return NormalizationStats{{0.026}, {0.037}, 0}; }

inline std::string stats_to_json(const NormalizationStats& s) {
  nlohmann::ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  j["num_pixels"] = s.num_pixels;
  return j.dump(2) + "\n";
}

inline NormalizationStats stats_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("stats json: ") + e.what());
  }
  if (!j.is_object()) throw IoError("stats json: top level must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "mean" && key != "std" && key != "num_pixels") {
      throw IoError("stats json: unknown key '" + key + "'");
    }
  }
  if (!j.contains("mean") || !j.contains("std") || !j.contains("num_pixels")) {
    throw IoError("stats json: required keys are mean, std, num_pixels");
  }
  NormalizationStats s;
  try {
    s.mean = j["mean"].get<std::vector<double>>();
    s.std = j["std"].get<std::vector<double>>();
    s.num_pixels = j["num_pixels"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("stats json: ") + e.what());
  }
  if (s.mean.empty() || s.mean.size() != s.std.size()) {
    throw IoError("stats json: mean/std must be equal-length non-empty arrays");
  }
  if (s.num_pixels < 0) throw IoError("stats json: num_pixels must be non-negative");
  return s;
}

inline void save_stats(const std::string& path, const NormalizationStats& s) {
  write_text_file(path, stats_to_json(s));
}

inline NormalizationStats load_stats(const std::string& path) {
  return stats_from_json(read_text_file(path));
}

// BT.601 luma of a [3xHxW] image in [0,1] -> [1xHxW].
inline Tensor grayscale(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw ShapeError("grayscale: expected [3xHxW], got " + shape_str(rgb.shape()));
  }
  const std::int64_t h = rgb.dim(1), w = rgb.dim(2);
  Tensor out(Shape{1, h, w});
  const double* r = rgb.data();
  const double* g = r + h * w;
  const double* b = g + h * w;
  double* o = out.data();
  for (std::int64_t i = 0; i < h * w; ++i) o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

// 3x3 Sobel gradient magnitude with replicate padding, clipped to [0,1]:
// min(1, sqrt(gx^2 + gy^2)). Input [1xHxW], output [1xHxW].
inline Tensor sobel_edges(const Tensor& gray) {
  if (gray.rank() != 3 || gray.dim(0) != 1) {
    throw ShapeError("sobel_edges: expected [1xHxW], got " + shape_str(gray.shape()));
  }
  const std::int64_t h = gray.dim(1), w = gray.dim(2);
  Tensor out(Shape{1, h, w});
  const double* p = gray.data();
  auto at = [&](std::int64_t y, std::int64_t x) {
    y = std::clamp<std::int64_t>(y, 0, h - 1);
    x = std::clamp<std::int64_t>(x, 0, w - 1);
    return p[y * w + x];
  };
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double tl = at(y - 1, x - 1), tc = at(y - 1, x), tr = at(y - 1, x + 1);
      const double ml = at(y, x - 1), mr = at(y, x + 1);
      const double bl = at(y + 1, x - 1), bc = at(y + 1, x), br = at(y + 1, x + 1);
      const double gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      const double gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
      out(0, y, x) = std::min(1.0, std::sqrt(gx * gx + gy * gy));
    }
  }
  return out;
}

// Full RGB -> edge-map transform used to feed the edge stream.
inline Tensor edge_map(const Tensor& rgb) { return sobel_edges(grayscale(rgb)); }

// (x - mean[c]) / std[c] per channel; [CxHxW] in, same shape out.
inline Tensor normalize_input(const Tensor& img, const NormalizationStats& stats) {
  if (img.rank() != 3) throw ShapeError("normalize_input: expected [CxHxW], got " + shape_str(img.shape()));
  if (img.dim(0) != stats.channels()) {
    throw ShapeError("normalize_input: image has " + std::to_string(img.dim(0)) + " channels, stats have " +
                     std::to_string(stats.channels()));
  }
  for (double s : stats.std) {
    if (!(s > 0.0)) throw NumericError("normalize_input: std must be positive");
  }
  Tensor out(img.shape());
  const std::int64_t plane = img.dim(1) * img.dim(2);
  for (std::int64_t c = 0; c < img.dim(0); ++c) {
    const double m = stats.mean[static_cast<std::size_t>(c)];
    const double inv = 1.0 / stats.std[static_cast<std::size_t>(c)];
    const double* src = img.data() + c * plane;
    double* dst = out.data() + c * plane;
    for (std::int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - m) * inv;
  }
  return out;
}

// Single-pass (count, sum, sum of squares) accumulator for corpus-level
// per-channel statistics; std is the population standard deviation.
class StatsAccumulator {
 public:
  explicit StatsAccumulator(int channels) : sum_(channels, 0.0), sumsq_(channels, 0.0) {
    if (channels <= 0) throw ConfigError("StatsAccumulator: channels must be positive");
  }

  void add(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != static_cast<std::int64_t>(sum_.size())) {
      throw ShapeError("StatsAccumulator: expected [" + std::to_string(sum_.size()) + "xHxW], got " +
                       shape_str(img.shape()));
    }
    const std::int64_t plane = img.dim(1) * img.dim(2);
    for (std::size_t c = 0; c < sum_.size(); ++c) {
      const double* p = img.data() + static_cast<std::int64_t>(c) * plane;
      double s = 0.0, s2 = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) {
        s += p[i];
        s2 += p[i] * p[i];
      }
      sum_[c] += s;
      sumsq_[c] += s2;
    }
    count_ += plane;
  }

  std::int64_t count() const { return count_; }

  NormalizationStats finalize() const {
    if (count_ == 0) throw NumericError("StatsAccumulator: no pixels accumulated");
    NormalizationStats s;
    s.num_pixels = count_;
    const double n = static_cast<double>(count_);
    for (std::size_t c = 0; c < sum_.size(); ++c) {
      const double mean = sum_[c] / n;
      const double var = std::max(0.0, sumsq_[c] / n - mean * mean);
      s.mean.push_back(mean);
      s.std.push_back(std::sqrt(var));
    }
    return s;
  }

 private:
  std::vector<double> sum_;
  std::vector<double> sumsq_;
  std::int64_t count_ = 0;
};

// Edge-map statistics of an RGB corpus: each item is a frame [3,H,W] or a
// clip [T,3,H,W]; every frame is grayscaled, Sobel-filtered, and pooled into
// one single-channel mean/std.
inline NormalizationStats compute_corpus_stats(const std::vector<Tensor>& rgb_corpus) {
  StatsAccumulator acc(1);
  for (const Tensor& item : rgb_corpus) {
    if (item.rank() == 3) {
      acc.add(edge_map(item));
    } else if (item.rank() == 4) {
      const std::int64_t T = item.shape()[0];
      const Shape frame_shape{item.shape()[1], item.shape()[2], item.shape()[3]};
      const std::int64_t frame_elems = frame_shape[0] * frame_shape[1] * frame_shape[2];
      for (std::int64_t t = 0; t < T; ++t) {
        Tensor frame(frame_shape);
        std::copy_n(item.data() + t * frame_elems, frame_elems, frame.data());
        acc.add(edge_map(frame));
      }
    } else {
      throw ShapeError("compute_corpus_stats: expected [3,H,W] frames or [T,3,H,W] clips, got " +
                       shape_str(item.shape()));
    }
  }
  return acc.finalize();
}

}  // namespace moexda
