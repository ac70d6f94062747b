#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "moexda/errors.hpp"
#include "moexda/loss.hpp"
#include "moexda/moments.hpp"
#include "moexda/synthetic.hpp"
#include "moexda/train.hpp"
#include "moexda/vit.hpp"

namespace moexda {

struct EvalConfig {
  std::string dir;  // corpus to evaluate; empty falls back to data.dir
  std::string report_path = "bias_report.json";
  std::string log_path = "predictions.csv";
};

struct ExperimentConfig {
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  SyntheticSceneSpec data;
  std::string data_dir = "corpus";
  EvalConfig eval;

  std::string eval_dir() const { return eval.dir.empty() ? data_dir : eval.dir; }

  void validate() const {
    model.validate();
    loss.validate();
    train.validate();
    data.validate();
    if (data.num_classes != model.vit.num_classes) {
      throw ConfigError("config: data.num_classes (" + std::to_string(data.num_classes) +
                        ") must equal vit.num_classes (" + std::to_string(model.vit.num_classes) + ")");
    }
    if (data.image_size != model.vit.image_size) {
      throw ConfigError("config: data.image_size (" + std::to_string(data.image_size) +
                        ") must equal vit.image_size (" + std::to_string(model.vit.image_size) + ")");
    }
    if (data_dir.empty()) throw ConfigError("config: data.dir must not be empty");
  }
};

namespace detail {

inline int as_int(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError("config: " + path + " must be an integer");
  return v.get<int>();
}

inline std::uint64_t as_u64(const nlohmann::json& v, const std::string& path) {
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))) {
    throw ConfigError("config: " + path + " must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline double as_double(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError("config: " + path + " must be a number");
  return v.get<double>();
}

inline bool as_bool(const nlohmann::json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError("config: " + path + " must be a boolean");
  return v.get<bool>();
}

inline std::string as_string(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError("config: " + path + " must be a string");
  return v.get<std::string>();
}

inline std::vector<int> as_int_list(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError("config: " + path + " must be a list of integers");
  std::vector<int> out;
  for (const auto& item : v) {
    if (!item.is_number_integer()) throw ConfigError("config: " + path + " must be a list of integers");
    out.push_back(item.get<int>());
  }
  return out;
}

inline const nlohmann::json* section(const nlohmann::json& root, const std::string& name) {
  if (!root.contains(name)) return nullptr;
  const nlohmann::json& s = root.at(name);
  if (!s.is_object()) throw ConfigError("config: " + name + " must be an object");
  return &s;
}

inline void parse_vit(const nlohmann::json& s, VitConfig& vit) {
  for (const auto& [key, v] : s.items()) {
    const std::string path = "vit." + key;
    if (key == "image_size") vit.image_size = as_int(v, path);
    else if (key == "patch_size") vit.patch_size = as_int(v, path);
    else if (key == "hidden_dim") vit.hidden_dim = as_int(v, path);
    else if (key == "num_heads") vit.num_heads = as_int(v, path);
    else if (key == "num_layers") vit.num_layers = as_int(v, path);
    else if (key == "mlp_dim") vit.mlp_dim = as_int(v, path);
    else if (key == "num_classes") vit.num_classes = as_int(v, path);
    else throw ConfigError("config: unknown key " + path);
  }
}

inline void parse_moex(const nlohmann::json& s, ModelConfig& model) {
  for (const auto& [key, v] : s.items()) {
    const std::string path = "moex." + key;
    if (key == "mode") model.moex.mode = norm_kind_from_string(as_string(v, path));
    else if (key == "direction") model.moex.direction = direction_from_string(as_string(v, path));
    else if (key == "stop_gradient") model.moex.stop_gradient = as_bool(v, path);
    else if (key == "layers") model.moex_layers = as_int_list(v, path);
    else if (key == "eps") model.moex.eps = as_double(v, path);
    else throw ConfigError("config: unknown key " + path);
  }
}

inline void parse_loss(const nlohmann::json& s, LossWeights& loss) {
  for (const auto& [key, v] : s.items()) {
    const std::string path = "loss." + key;
    if (key == "alpha_rgb") loss.alpha_rgb = as_double(v, path);
    else if (key == "alpha_edge") loss.alpha_edge = as_double(v, path);
    else throw ConfigError("config: unknown key " + path);
  }
}

inline void parse_train(const nlohmann::json& s, TrainConfig& train) {
  for (const auto& [key, v] : s.items()) {
    const std::string path = "train." + key;
    if (key == "epochs") train.epochs = as_int(v, path);
    else if (key == "batch_size") train.batch_size = as_int(v, path);
    else if (key == "frames") train.frames = as_int(v, path);
    else if (key == "lr") train.lr = as_double(v, path);
    else if (key == "weight_decay") train.weight_decay = as_double(v, path);
    else if (key == "seed") train.seed = as_u64(v, path);
    else if (key == "checkpoint_path") train.checkpoint_path = as_string(v, path);
    else if (key == "metrics_path") train.metrics_path = as_string(v, path);
    else throw ConfigError("config: unknown key " + path);
  }
}

inline void parse_data(const nlohmann::json& s, SyntheticSceneSpec& data, std::string& data_dir) {
  for (const auto& [key, v] : s.items()) {
    const std::string path = "data." + key;
    if (key == "dir") data_dir = as_string(v, path);
    else if (key == "num_classes") data.num_classes = as_int(v, path);
    else if (key == "texture_pool") data.texture_pool = as_int(v, path);
    else if (key == "rho") data.rho = as_double(v, path);
    else if (key == "num_videos") data.num_videos = as_int(v, path);
    else if (key == "frames") data.frames = as_int(v, path);
    else if (key == "image_size") data.image_size = as_int(v, path);
    else if (key == "actor_size_min") data.actor_size_min = as_double(v, path);
    else if (key == "actor_size_max") data.actor_size_max = as_double(v, path);
    else if (key == "speed_min") data.speed_min = as_double(v, path);
    else if (key == "speed_max") data.speed_max = as_double(v, path);
    else if (key == "seed") data.seed = as_u64(v, path);
    else throw ConfigError("config: unknown key " + path);
  }
}

inline void parse_eval(const nlohmann::json& s, EvalConfig& eval) {
  for (const auto& [key, v] : s.items()) {
    const std::string path = "eval." + key;
    if (key == "dir") eval.dir = as_string(v, path);
    else if (key == "report_path") eval.report_path = as_string(v, path);
    else if (key == "log_path") eval.log_path = as_string(v, path);
    else throw ConfigError("config: unknown key " + path);
  }
}

}  // namespace detail

// Builds a config from parsed JSON. Sections and fields are all optional
// (defaults apply), unknown keys are rejected with their full dotted path.
inline ExperimentConfig config_from_json(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  ExperimentConfig cfg;
  for (const auto& [key, v] : root.items()) {
    (void)v;
    if (key != "vit" && key != "moex" && key != "loss" && key != "train" && key != "data" && key != "eval") {
      throw ConfigError("config: unknown key " + key);
    }
  }
  if (const auto* s = detail::section(root, "vit")) detail::parse_vit(*s, cfg.model.vit);
  if (const auto* s = detail::section(root, "moex")) detail::parse_moex(*s, cfg.model);
  if (const auto* s = detail::section(root, "loss")) detail::parse_loss(*s, cfg.loss);
  if (const auto* s = detail::section(root, "train")) detail::parse_train(*s, cfg.train);
  if (const auto* s = detail::section(root, "data")) detail::parse_data(*s, cfg.data, cfg.data_dir);
  if (const auto* s = detail::section(root, "eval")) detail::parse_eval(*s, cfg.eval);
  cfg.validate();
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["vit"] = {{"image_size", cfg.model.vit.image_size},
              {"patch_size", cfg.model.vit.patch_size},
              {"hidden_dim", cfg.model.vit.hidden_dim},
              {"num_heads", cfg.model.vit.num_heads},
              {"num_layers", cfg.model.vit.num_layers},
              {"mlp_dim", cfg.model.vit.mlp_dim},
              {"num_classes", cfg.model.vit.num_classes}};
  j["moex"] = {{"mode", to_string(cfg.model.moex.mode)},
               {"direction", to_string(cfg.model.moex.direction)},
               {"stop_gradient", cfg.model.moex.stop_gradient},
               {"layers", cfg.model.moex_layers},
               {"eps", cfg.model.moex.eps}};
  j["loss"] = {{"alpha_rgb", cfg.loss.alpha_rgb}, {"alpha_edge", cfg.loss.alpha_edge}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"frames", cfg.train.frames},
                {"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"seed", cfg.train.seed},
                {"checkpoint_path", cfg.train.checkpoint_path},
                {"metrics_path", cfg.train.metrics_path}};
  j["data"] = {{"dir", cfg.data_dir},
               {"num_classes", cfg.data.num_classes},
               {"texture_pool", cfg.data.texture_pool},
               {"rho", cfg.data.rho},
               {"num_videos", cfg.data.num_videos},
               {"frames", cfg.data.frames},
               {"image_size", cfg.data.image_size},
               {"actor_size_min", cfg.data.actor_size_min},
               {"actor_size_max", cfg.data.actor_size_max},
               {"speed_min", cfg.data.speed_min},
               {"speed_max", cfg.data.speed_max},
               {"seed", cfg.data.seed}};
  j["eval"] = {{"dir", cfg.eval.dir}, {"report_path", cfg.eval.report_path}, {"log_path", cfg.eval.log_path}};
  return j;
}

inline nlohmann::json parse_config_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + origin + ": " + e.what());
  }
}

// Applies one `--set path.to.key=value` override onto the raw JSON tree.
// The value is parsed as JSON when possible and taken as a string otherwise.
inline void apply_set_override(nlohmann::json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value_text = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    parts.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
    if (parts.back().empty()) throw ConfigError("--set: empty path segment in '" + path + "'");
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  nlohmann::json value;
  if (nlohmann::json::accept(value_text)) {
    value = nlohmann::json::parse(value_text);
  } else {
    value = value_text;
  }

  nlohmann::json* cursor = &root;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cursor->is_object()) throw ConfigError("--set: '" + path + "' descends into a non-object");
    cursor = &(*cursor)[parts[i]];
    if (cursor->is_null()) *cursor = nlohmann::json::object();
  }
  if (!cursor->is_object()) throw ConfigError("--set: '" + path + "' descends into a non-object");
  (*cursor)[parts.back()] = value;
}

// MOEXDA_SEED overrides the seeds in the config (training and generation).
inline void apply_seed_override(nlohmann::json& root, const std::string& env_value) {
  std::uint64_t seed = 0;
  try {
    std::size_t used = 0;
    seed = std::stoull(env_value, &used);
    if (used != env_value.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError("MOEXDA_SEED: not a non-negative integer: '" + env_value + "'");
  }
  root["train"]["seed"] = seed;
  root["data"]["seed"] = seed;
}

}  // namespace moexda
