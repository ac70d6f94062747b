#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moexda/moexda.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

moexda::ExperimentConfig load_config(const CommonArgs& args) {
  nlohmann::json raw = moexda::parse_config_text(moexda::read_text_file(args.config_path), args.config_path);
  for (const std::string& kv : args.overrides) moexda::apply_set_override(raw, kv);
  if (const char* env = std::getenv("MOEXDA_SEED")) moexda::apply_seed_override(raw, env);
  return moexda::config_from_json(raw);
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Experiment config (JSON)")->required();
  cmd->add_option("--set", args.overrides, "Dotted-path override, e.g. --set train.lr=0.001");
}

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  if (ec) throw moexda::IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

moexda::TwoStreamModel load_model_from_checkpoint(const moexda::ExperimentConfig& cfg) {
  moexda::TwoStreamModel model(cfg.model);
  moexda::Rng init_rng(cfg.train.seed);
  model.init_params(init_rng);
  moexda::load_into_model(model, moexda::load_checkpoint(cfg.train.checkpoint_path));
  return model;
}

int cmd_stats(const CommonArgs& args, const std::string& out_path) {
  const moexda::ExperimentConfig cfg = load_config(args);
  if (!std::filesystem::exists(moexda::manifest_path(cfg.data_dir))) {
    throw moexda::ConfigError("stats: missing manifest at " + moexda::manifest_path(cfg.data_dir));
  }
  const moexda::NormalizationStats stats = moexda::compute_corpus_stats(cfg.data_dir);
  const std::string out = out_path.empty()
                              ? (std::filesystem::path(cfg.data_dir) / "edge_stats.json").string()
                              : out_path;
  ensure_parent_dir(out);
  moexda::save_stats(out, stats);
  std::printf("(%.6f, %.6f)\n", stats.mean.at(0), stats.std.at(0));
  std::printf("stats written to %s (%lld pixels)\n", out.c_str(), static_cast<long long>(stats.num_pixels));
  return 0;
}

int cmd_gen_data(const CommonArgs& args) {
  const moexda::ExperimentConfig cfg = load_config(args);
  const std::vector<moexda::VideoEntry> entries = moexda::generate_dataset(cfg.data, cfg.data_dir);
  std::printf("generated %zu videos x %d frames (K=%d, rho=%.3f) under %s\n", entries.size(),
              cfg.data.frames, cfg.data.num_classes, cfg.data.rho, cfg.data_dir.c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const moexda::ExperimentConfig cfg = load_config(args);
  const std::vector<moexda::VideoEntry> entries = moexda::read_manifest(cfg.data_dir);
  const moexda::ClipStore store = moexda::load_clip_store(cfg.data_dir, entries, cfg.train.frames,
                                                          moexda::default_rgb_stats(),
                                                          moexda::default_edge_stats());
  moexda::TwoStreamModel model(cfg.model);
  moexda::Rng init_rng(cfg.train.seed);
  model.init_params(init_rng);

  ensure_parent_dir(cfg.train.metrics_path);
  std::ofstream metrics(cfg.train.metrics_path, std::ios::trunc);
  if (!metrics) throw moexda::IoError("train: cannot open metrics file " + cfg.train.metrics_path);
  const moexda::TrainOutcome outcome = moexda::train_model(model, store, cfg.train, cfg.loss, &metrics);
  metrics.close();
  if (!metrics) throw moexda::IoError("train: failed writing metrics file " + cfg.train.metrics_path);

  ensure_parent_dir(cfg.train.checkpoint_path);
  moexda::save_checkpoint(cfg.train.checkpoint_path, moexda::config_to_json(cfg).dump(), model.named_params());
  const moexda::EpochMetrics& last = outcome.epochs.back();
  std::printf("trained %d epochs on %zu clips; final %s\n", cfg.train.epochs, store.size(),
              moexda::metrics_line(last).c_str());
  std::printf("checkpoint written to %s\n", cfg.train.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  const moexda::ExperimentConfig cfg = load_config(args);
  moexda::TwoStreamModel model = load_model_from_checkpoint(cfg);
  const std::string corpus = cfg.eval_dir();
  const std::vector<moexda::VideoEntry> entries = moexda::read_manifest(corpus);
  moexda::ModelStreamClassifier rgb(model, 0, moexda::default_rgb_stats(), moexda::default_edge_stats());
  moexda::ModelStreamClassifier edge(model, 1, moexda::default_rgb_stats(), moexda::default_edge_stats());
  std::int64_t correct_rgb = 0, correct_edge = 0;
  for (const moexda::VideoEntry& e : entries) {
    const moexda::Tensor clip = moexda::load_clip_rgb(corpus, e, cfg.train.frames);
    if (rgb.predict(clip) == e.label) ++correct_rgb;
    if (edge.predict(clip) == e.label) ++correct_edge;
  }
  nlohmann::ordered_json j;
  j["num_videos"] = entries.size();
  j["acc_rgb"] = static_cast<double>(correct_rgb) / static_cast<double>(entries.size());
  j["acc_edge"] = static_cast<double>(correct_edge) / static_cast<double>(entries.size());
  std::printf("%s\n", j.dump().c_str());
  return 0;
}

int cmd_bias_eval(const CommonArgs& args, const std::string& compare_out,
                  const std::vector<std::string>& report_paths) {
  if (!compare_out.empty()) {
    if (report_paths.empty()) {
      throw moexda::ConfigError("bias-eval: --compare-out requires --reports");
    }
    std::vector<moexda::RunSummary> runs;
    for (const std::string& path : report_paths) {
      runs.push_back(moexda::parse_report_json(moexda::read_text_file(path), path));
    }
    ensure_parent_dir(compare_out);
    moexda::write_text_file(compare_out, moexda::comparison_csv(runs));
    std::printf("comparison for %zu runs written to %s\n", runs.size(), compare_out.c_str());
    return 0;
  }

  const moexda::ExperimentConfig cfg = load_config(args);
  moexda::TwoStreamModel model = load_model_from_checkpoint(cfg);
  const std::string corpus = cfg.eval_dir();
  const std::vector<moexda::VideoEntry> entries = moexda::read_manifest(corpus);

  moexda::ModelStreamClassifier rgb(model, 0, moexda::default_rgb_stats(), moexda::default_edge_stats());
  moexda::ModelStreamClassifier edge(model, 1, moexda::default_rgb_stats(), moexda::default_edge_stats());
  std::vector<moexda::PredictionRow> rows =
      moexda::evaluate_classifier(corpus, entries, cfg.train.frames, rgb, "rgb");
  const std::vector<moexda::PredictionRow> edge_rows =
      moexda::evaluate_classifier(corpus, entries, cfg.train.frames, edge, "edge");
  rows.insert(rows.end(), edge_rows.begin(), edge_rows.end());

  ensure_parent_dir(cfg.eval.log_path);
  moexda::write_text_file(cfg.eval.log_path, moexda::predictions_csv(rows));
  const std::vector<moexda::StreamReport> reports = {moexda::summarize_stream(rows, "rgb"),
                                                     moexda::summarize_stream(rows, "edge")};
  moexda::RunAxes axes{moexda::to_string(cfg.model.moex.mode), moexda::to_string(cfg.model.moex.direction),
                       cfg.model.moex.stop_gradient};
  const std::string config_dump = moexda::config_to_json(cfg).dump();
  const nlohmann::ordered_json report = moexda::report_json(reports, axes, moexda::fnv1a_hex(config_dump));
  ensure_parent_dir(cfg.eval.report_path);
  moexda::write_text_file(cfg.eval.report_path, report.dump(2) + "\n");
  for (const moexda::StreamReport& r : reports) {
    std::printf("%s: top1=%.4f bor=%.4f hor=%.4f (n=%lld)\n", r.stream.c_str(), r.top1, r.bor, r.hor,
                static_cast<long long>(r.num_videos));
  }
  std::printf("report written to %s, predictions to %s\n", cfg.eval.report_path.c_str(),
              cfg.eval.log_path.c_str());
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  std::printf("moment exchange suite (12 configs):\n");
  for (const moexda::GradcheckCase& c : moexda::run_moex_gradchecks()) {
    ok = ok && c.passed();
    std::printf("  %-42s max_rel=%.3e tol=%.1e %s\n", c.name.c_str(), c.max_rel, c.tol,
                c.passed() ? "PASS" : "FAIL");
  }
  std::printf("end-to-end tiny model suite:\n");
  for (const moexda::GradcheckCase& c : moexda::run_e2e_gradchecks()) {
    ok = ok && c.passed();
    std::printf("  %-42s max_rel=%.3e tol=%.1e %s\n", c.name.c_str(), c.max_rel, c.tol,
                c.passed() ? "PASS" : "FAIL");
  }
  std::printf("gradcheck: %s\n", ok ? "all suites passed" : "FAILURES detected");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream RGB+edge action recognition laboratory"};
  app.require_subcommand(1);

  CommonArgs stats_args, gen_args, train_args, eval_args, bias_args;
  std::string stats_out;
  std::string compare_out;
  std::vector<std::string> report_paths;

  CLI::App* stats = app.add_subcommand("stats", "Edge-map corpus statistics");
  add_common(stats, stats_args);
  stats->add_option("--out", stats_out, "Stats JSON output path (default: <data.dir>/edge_stats.json)");

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus with aligned variants");
  add_common(gen, gen_args);

  CLI::App* train = app.add_subcommand("train", "Train the two-stream model");
  add_common(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on a corpus");
  add_common(eval, eval_args);

  CLI::App* bias = app.add_subcommand("bias-eval", "Bias report (top-1 / BOR / HOR) for a checkpoint");
  bias->add_option("--config", bias_args.config_path, "Experiment config (JSON)");
  bias->add_option("--set", bias_args.overrides, "Dotted-path override, e.g. --set train.lr=0.001");
  bias->add_option("--compare-out", compare_out, "Write a comparison CSV instead of evaluating");
  bias->add_option("--reports", report_paths, "Report JSON files to tabulate with --compare-out");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suites");
  std::string unused_config;
  gradcheck->add_option("--config", unused_config, "Accepted for uniformity; the suites are fixed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (stats->parsed()) return cmd_stats(stats_args, stats_out);
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (bias->parsed()) {
      if (compare_out.empty() && bias_args.config_path.empty()) {
        throw moexda::ConfigError("bias-eval: --config is required unless --compare-out is used");
      }
      return cmd_bias_eval(bias_args, compare_out, report_paths);
    }
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const moexda::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const moexda::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const moexda::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
