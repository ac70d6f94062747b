#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "moexda/bias_eval.hpp"
#include "moexda/checkpoint.hpp"
#include "moexda/data.hpp"
#include "moexda/edge.hpp"
#include "moexda/io.hpp"
#include "support/test_util.hpp"

#ifndef MOEXDA_CLI_PATH
#error "MOEXDA_CLI_PATH must point at the CLI binary"
#endif

namespace moexda {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args, const std::string& capture_path = "") {
  std::string cmd = std::string(MOEXDA_CLI_PATH) + " " + args;
  if (!capture_path.empty()) cmd += " > " + capture_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

// A complete experiment small enough that gen-data + train + eval stays well
// under a second, with every path anchored inside dir.
nlohmann::json tiny_config(const std::string& dir) {
  nlohmann::json cfg;
  cfg["vit"] = {{"image_size", 8}, {"patch_size", 4}, {"hidden_dim", 8},  {"num_heads", 2},
                {"num_layers", 1}, {"mlp_dim", 16},   {"num_classes", 2}};
  cfg["moex"] = {{"mode", "pono"}, {"direction", "edge_to_rgb"}, {"layers", {1}}};
  cfg["train"] = {{"epochs", 2},
                  {"batch_size", 2},
                  {"frames", 2},
                  {"lr", 0.001},
                  {"seed", 7},
                  {"checkpoint_path", dir + "/model.bin"},
                  {"metrics_path", dir + "/metrics.ndjson"}};
  cfg["data"] = {{"dir", dir + "/corpus"}, {"num_classes", 2}, {"texture_pool", 2},
                 {"rho", 1.0},             {"num_videos", 4},  {"frames", 2},
                 {"image_size", 8},        {"seed", 7}};
  cfg["eval"] = {{"report_path", dir + "/report.json"}, {"log_path", dir + "/predictions.csv"}};
  return cfg;
}

std::string write_config(const std::string& dir, const nlohmann::json& cfg, const std::string& name = "cfg.json") {
  const std::string path = (fs::path(dir) / name).string();
  write_text_file(path, cfg.dump(2) + "\n");
  return path;
}

TEST(Cli, NoSubcommandIsAConfigError) { EXPECT_EQ(run("", "/dev/null"), 2); }

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help", "/dev/null"), 0); }

TEST(Cli, MissingConfigFileIsAnIoError) {
  EXPECT_EQ(run("train --config /nonexistent/cfg.json", "/dev/null"), 4);
}

TEST(Cli, MalformedConfigExitsTwo) {
  const std::string dir = testutil::make_temp_dir("cli_bad");
  const std::string path = (fs::path(dir) / "bad.json").string();
  write_text_file(path, "{oops\n");
  EXPECT_EQ(run("train --config " + path, "/dev/null"), 2);

  write_text_file(path, "{\"train\": {\"lrx\": 1}}\n");
  EXPECT_EQ(run("train --config " + path, "/dev/null"), 2);
  fs::remove_all(dir);
}

TEST(Cli, SetOverrideTypoExitsTwo) {
  const std::string dir = testutil::make_temp_dir("cli_set");
  const std::string path = write_config(dir, tiny_config(dir));
  EXPECT_EQ(run("train --config " + path + " --set train.lrx=1", "/dev/null"), 2);
  EXPECT_EQ(run("train --config " + path + " --set notakey", "/dev/null"), 2);
  fs::remove_all(dir);
}

TEST(Cli, StatsWithoutManifestExitsTwo) {
  const std::string dir = testutil::make_temp_dir("cli_stats_missing");
  const std::string path = write_config(dir, tiny_config(dir));
  EXPECT_EQ(run("stats --config " + path, "/dev/null"), 2);
  fs::remove_all(dir);
}

TEST(Cli, FullPipelineRunsCleanly) {
  const std::string dir = testutil::make_temp_dir("cli_pipe");
  const std::string path = write_config(dir, tiny_config(dir));

  EXPECT_EQ(run("gen-data --config " + path, dir + "/gen.log"), 0);
  EXPECT_TRUE(fs::exists(manifest_path(dir + "/corpus")));

  EXPECT_EQ(run("stats --config " + path + " --out " + dir + "/stats.json", dir + "/stats.log"), 0);
  const NormalizationStats stats = load_stats(dir + "/stats.json");
  EXPECT_GT(stats.std.at(0), 0.0);
  const std::string stats_log = read_text_file(dir + "/stats.log");
  EXPECT_NE(stats_log.find("("), std::string::npos);
  EXPECT_NE(stats_log.find(")"), std::string::npos);

  EXPECT_EQ(run("train --config " + path, dir + "/train.log"), 0);
  EXPECT_TRUE(fs::exists(dir + "/model.bin"));
  const std::string metrics = read_text_file(dir + "/metrics.ndjson");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2);
  EXPECT_EQ(metrics.rfind("{\"epoch\":1,", 0), 0u);

  EXPECT_EQ(run("eval --config " + path, dir + "/eval.log"), 0);
  const std::string eval_log = read_text_file(dir + "/eval.log");
  EXPECT_NE(eval_log.find("\"num_videos\":4"), std::string::npos);
  EXPECT_NE(eval_log.find("\"acc_rgb\":"), std::string::npos);

  EXPECT_EQ(run("bias-eval --config " + path, dir + "/bias.log"), 0);
  const RunSummary report = parse_report_json(read_text_file(dir + "/report.json"), "report");
  EXPECT_EQ(report.axes.mode, "pono");
  EXPECT_EQ(report.axes.direction, "edge_to_rgb");
  ASSERT_EQ(report.reports.size(), 2u);
  const std::vector<PredictionRow> rows =
      parse_predictions_csv(read_text_file(dir + "/predictions.csv"), "log");
  EXPECT_EQ(rows.size(), 8u);  // 4 videos x 2 streams

  // Tabulating the same report twice yields one row per (run, stream).
  EXPECT_EQ(run("bias-eval --compare-out " + dir + "/cmp.csv --reports " + dir + "/report.json " +
                    dir + "/report.json",
                dir + "/cmp.log"),
            0);
  const std::string cmp = read_text_file(dir + "/cmp.csv");
  EXPECT_EQ(std::count(cmp.begin(), cmp.end(), '\n'), 5);
  EXPECT_EQ(cmp.rfind("mode,direction,stop_gradient,stream,top1,bor,hor\n", 0), 0u);
  fs::remove_all(dir);
}

TEST(Cli, EvalWithoutCheckpointIsAnIoError) {
  const std::string dir = testutil::make_temp_dir("cli_nockpt");
  nlohmann::json cfg = tiny_config(dir);
  const std::string path = write_config(dir, cfg);
  ASSERT_EQ(run("gen-data --config " + path, "/dev/null"), 0);
  EXPECT_EQ(run("eval --config " + path, "/dev/null"), 4);
  fs::remove_all(dir);
}

TEST(Cli, BiasEvalWithoutConfigOrCompareExitsTwo) {
  EXPECT_EQ(run("bias-eval", "/dev/null"), 2);
  EXPECT_EQ(run("bias-eval --compare-out /tmp/x.csv", "/dev/null"), 2);
}

TEST(Cli, SameSeedTrainsAreByteIdentical) {
  const std::string dir = testutil::make_temp_dir("cli_det");
  const std::string path = write_config(dir, tiny_config(dir));
  ASSERT_EQ(run("gen-data --config " + path, "/dev/null"), 0);

  ASSERT_EQ(run("train --config " + path + " --set train.metrics_path=" + dir + "/a.ndjson" +
                    " --set train.checkpoint_path=" + dir + "/a.bin",
                "/dev/null"),
            0);
  ASSERT_EQ(run("train --config " + path + " --set train.metrics_path=" + dir + "/b.ndjson" +
                    " --set train.checkpoint_path=" + dir + "/b.bin",
                "/dev/null"),
            0);
  EXPECT_EQ(read_binary_file(dir + "/a.ndjson"), read_binary_file(dir + "/b.ndjson"));

  // Checkpoints differ only in the config they embed (the paths above), so
  // compare the tensors instead of the raw bytes.
  const Checkpoint a = load_checkpoint(dir + "/a.bin");
  const Checkpoint b = load_checkpoint(dir + "/b.bin");
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    for (std::int64_t k = 0; k < a.tensors[i].second.size(); ++k) {
      ASSERT_EQ(a.tensors[i].second[k], b.tensors[i].second[k]);
    }
  }
  fs::remove_all(dir);
}

TEST(Cli, SeedEnvOverridesConfigSeed) {
  const std::string dir = testutil::make_temp_dir("cli_seed");
  const std::string path = write_config(dir, tiny_config(dir));
  ASSERT_EQ(run("gen-data --config " + path, "/dev/null"), 0);

  const std::string prefix = "MOEXDA_SEED=99 ";
  std::string cmd = prefix + std::string(MOEXDA_CLI_PATH) + " train --config " + path +
                    " --set train.metrics_path=" + dir + "/env.ndjson" +
                    " --set train.checkpoint_path=" + dir + "/env.bin > /dev/null 2>&1";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  ASSERT_EQ(run("train --config " + path + " --set train.seed=99" + " --set train.metrics_path=" + dir +
                    "/set.ndjson" + " --set train.checkpoint_path=" + dir + "/set.bin",
                "/dev/null"),
            0);
  EXPECT_EQ(read_binary_file(dir + "/env.ndjson"), read_binary_file(dir + "/set.ndjson"));

  cmd = prefix + std::string(MOEXDA_CLI_PATH) + " train --config " + path + " > /dev/null 2>&1";
  ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
  // MOEXDA_SEED=garbage is a config error.
  cmd = "MOEXDA_SEED=abc " + std::string(MOEXDA_CLI_PATH) + " train --config " + path + " > /dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 2);
  fs::remove_all(dir);
}

TEST(Cli, GradcheckSuitesPass) {
  const std::string dir = testutil::make_temp_dir("cli_gc");
  EXPECT_EQ(run("gradcheck", dir + "/gc.log"), 0);
  const std::string log = read_text_file(dir + "/gc.log");
  EXPECT_NE(log.find("all suites passed"), std::string::npos);
  EXPECT_EQ(log.find("FAIL"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace moexda
