#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "moexda/data.hpp"
#include "moexda/errors.hpp"
#include "moexda/tensor.hpp"
#include "moexda/vit.hpp"

namespace moexda {

// Anything that labels a raw (un-normalized) [T,3,H,W] clip.
class ClipClassifier {
 public:
  virtual ~ClipClassifier() = default;
  virtual int predict(const Tensor& clip_rgb_raw) = 0;
};

struct PredictionRow {
  std::string video;
  int label = 0;
  int pred_full = 0;
  int pred_bg = 0;
  int pred_actor = 0;
  std::string stream;
};

inline bool operator==(const PredictionRow& a, const PredictionRow& b) {
  return a.video == b.video && a.label == b.label && a.pred_full == b.pred_full &&
         a.pred_bg == b.pred_bg && a.pred_actor == b.pred_actor && a.stream == b.stream;
}

struct StreamReport {
  std::string stream;
  std::int64_t num_videos = 0;
  std::int64_t correct_full = 0;
  std::int64_t correct_bg = 0;
  std::int64_t correct_actor = 0;
  double top1 = 0.0;  // accuracy on the original videos
  double bor = 0.0;   // accuracy with the actor removed (background only)
  double hor = 0.0;   // accuracy with the background removed (actor only)
};

// Runs one classifier over the originals and both aligned variants.
inline std::vector<PredictionRow> evaluate_classifier(const std::string& corpus_dir,
                                                      const std::vector<VideoEntry>& entries,
                                                      int clip_len, ClipClassifier& classifier,
                                                      const std::string& stream_name) {
  check_variant_tree(corpus_dir, entries, kBgOnlyDir);
  check_variant_tree(corpus_dir, entries, kActorOnlyDir);
  const std::string bg_root = variant_corpus_dir(corpus_dir, kBgOnlyDir);
  const std::string actor_root = variant_corpus_dir(corpus_dir, kActorOnlyDir);
  std::vector<PredictionRow> rows;
  rows.reserve(entries.size());
  for (const VideoEntry& e : entries) {
    PredictionRow row;
    row.video = e.video_dir;
    row.label = e.label;
    row.pred_full = classifier.predict(load_clip_rgb(corpus_dir, e, clip_len));
    row.pred_bg = classifier.predict(load_clip_rgb(bg_root, e, clip_len));
    row.pred_actor = classifier.predict(load_clip_rgb(actor_root, e, clip_len));
    row.stream = stream_name;
    rows.push_back(std::move(row));
  }
  return rows;
}

// Aggregates the rows belonging to one stream into top-1 / BOR / HOR.
inline StreamReport summarize_stream(const std::vector<PredictionRow>& rows, const std::string& stream) {
  StreamReport r;
  r.stream = stream;
  for (const PredictionRow& row : rows) {
    if (row.stream != stream) continue;
    ++r.num_videos;
    if (row.pred_full == row.label) ++r.correct_full;
    if (row.pred_bg == row.label) ++r.correct_bg;
    if (row.pred_actor == row.label) ++r.correct_actor;
  }
  if (r.num_videos == 0) throw ConfigError("summarize_stream: no rows for stream '" + stream + "'");
  r.top1 = static_cast<double>(r.correct_full) / static_cast<double>(r.num_videos);
  r.bor = static_cast<double>(r.correct_bg) / static_cast<double>(r.num_videos);
  r.hor = static_cast<double>(r.correct_actor) / static_cast<double>(r.num_videos);
  return r;
}

inline std::vector<std::string> stream_names(const std::vector<PredictionRow>& rows) {
  std::vector<std::string> names;
  for (const PredictionRow& row : rows) {
    bool seen = false;
    for (const std::string& n : names) seen = seen || n == row.stream;
    if (!seen) names.push_back(row.stream);
  }
  return names;
}

inline constexpr const char* kPredictionsHeader = "video,label,pred_full,pred_bg,pred_actor,stream";

inline std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  std::ostringstream out;
  out << kPredictionsHeader << "\n";
  for (const PredictionRow& r : rows) {
    out << r.video << "," << r.label << "," << r.pred_full << "," << r.pred_bg << ","
        << r.pred_actor << "," << r.stream << "\n";
  }
  return out.str();
}

inline std::vector<PredictionRow> parse_predictions_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("prediction log " + origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kPredictionsHeader) {
    throw IoError("prediction log " + origin + ": bad header '" + line + "'");
  }
  std::vector<PredictionRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 6) {
      throw IoError("prediction log " + origin + " line " + std::to_string(lineno) +
                    ": expected 6 fields, got " + std::to_string(fields.size()));
    }
    PredictionRow r;
    r.video = fields[0];
    try {
      r.label = std::stoi(fields[1]);
      r.pred_full = std::stoi(fields[2]);
      r.pred_bg = std::stoi(fields[3]);
      r.pred_actor = std::stoi(fields[4]);
    } catch (const std::exception&) {
      throw IoError("prediction log " + origin + " line " + std::to_string(lineno) + ": non-numeric field");
    }
    r.stream = fields[5];
    rows.push_back(std::move(r));
  }
  return rows;
}

// Recomputes the per-stream reports from a saved prediction log; by
// construction this reproduces the original report exactly.
inline std::vector<StreamReport> reports_from_log(const std::string& csv_text, const std::string& origin) {
  const std::vector<PredictionRow> rows = parse_predictions_csv(csv_text, origin);
  std::vector<StreamReport> reports;
  for (const std::string& name : stream_names(rows)) reports.push_back(summarize_stream(rows, name));
  return reports;
}

inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Axes of one experiment run, recorded alongside its report so that runs can
// be tabulated against each other.
struct RunAxes {
  std::string mode;
  std::string direction;
  bool stop_gradient = true;
};

inline nlohmann::ordered_json report_json(const std::vector<StreamReport>& reports, const RunAxes& axes,
                                          const std::string& config_fingerprint) {
  nlohmann::ordered_json j;
  j["config_fingerprint"] = config_fingerprint;
  j["moex"] = {{"mode", axes.mode}, {"direction", axes.direction}, {"stop_gradient", axes.stop_gradient}};
  j["streams"] = nlohmann::ordered_json::array();
  for (const StreamReport& r : reports) {
    nlohmann::ordered_json s;
    s["stream"] = r.stream;
    s["num_videos"] = r.num_videos;
    s["correct_full"] = r.correct_full;
    s["correct_bg"] = r.correct_bg;
    s["correct_actor"] = r.correct_actor;
    s["top1"] = r.top1;
    s["bor"] = r.bor;
    s["hor"] = r.hor;
    j["streams"].push_back(std::move(s));
  }
  return j;
}

struct RunSummary {
  RunAxes axes;
  std::vector<StreamReport> reports;
};

inline RunSummary parse_report_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("report " + origin + ": " + e.what());
  }
  RunSummary run;
  try {
    run.axes.mode = j.at("moex").at("mode").get<std::string>();
    run.axes.direction = j.at("moex").at("direction").get<std::string>();
    run.axes.stop_gradient = j.at("moex").at("stop_gradient").get<bool>();
    for (const auto& s : j.at("streams")) {
      StreamReport r;
      r.stream = s.at("stream").get<std::string>();
      r.num_videos = s.at("num_videos").get<std::int64_t>();
      r.correct_full = s.at("correct_full").get<std::int64_t>();
      r.correct_bg = s.at("correct_bg").get<std::int64_t>();
      r.correct_actor = s.at("correct_actor").get<std::int64_t>();
      r.top1 = s.at("top1").get<double>();
      r.bor = s.at("bor").get<double>();
      r.hor = s.at("hor").get<double>();
      run.reports.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("report " + origin + ": " + e.what());
  }
  return run;
}

inline std::string number_str(double v) { return nlohmann::json(v).dump(); }

// One CSV row per (run, stream): the MoExDA axes followed by the metrics.
inline std::string comparison_csv(const std::vector<RunSummary>& runs) {
  std::ostringstream out;
  out << "mode,direction,stop_gradient,stream,top1,bor,hor\n";
  for (const RunSummary& run : runs) {
    for (const StreamReport& r : run.reports) {
      out << run.axes.mode << "," << run.axes.direction << ","
          << (run.axes.stop_gradient ? "true" : "false") << "," << r.stream << ","
          << number_str(r.top1) << "," << number_str(r.bor) << "," << number_str(r.hor) << "\n";
    }
  }
  return out.str();
}

// Adapter exposing one stream of a trained two-stream model as a classifier.
class ModelStreamClassifier : public ClipClassifier {
 public:
  ModelStreamClassifier(TwoStreamModel& model, int stream, NormalizationStats rgb_stats,
                        NormalizationStats edge_stats)
      : model_(&model), stream_(stream), rgb_stats_(std::move(rgb_stats)), edge_stats_(std::move(edge_stats)) {
    if (stream != 0 && stream != 1) throw ConfigError("ModelStreamClassifier: stream must be 0 (rgb) or 1 (edge)");
  }

  int predict(const Tensor& clip_rgb_raw) override {
    const ClipSample s = prepare_sample(clip_rgb_raw, 0, rgb_stats_, edge_stats_);
    Shape rs = s.rgb.shape();
    Shape es = s.edge.shape();
    rs.insert(rs.begin(), 1);
    es.insert(es.begin(), 1);
    const StreamLogits logits = model_->forward(s.rgb.reshaped(rs), s.edge.reshaped(es));
    const Tensor& chosen = stream_ == 0 ? logits.rgb.value() : logits.edge.value();
    return argmax_row(chosen, 0);
  }

 private:
  TwoStreamModel* model_;
  int stream_;
  NormalizationStats rgb_stats_;
  NormalizationStats edge_stats_;
};

}  // namespace moexda
