#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "cleargcd_cli_test";

int run(const std::string& args, const std::string& log = "run.log") {
  const std::string cmd = std::string(CLEARGCD_CLI) + " " + args + " > " + (kRoot / log).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_json(const std::string& name, const nlohmann::json& j) {
  const fs::path p = kRoot / name;
  std::ofstream(p) << j.dump();
  return p;
}

nlohmann::json tiny_config() {
  return {{"data", {{"height", 8}, {"width", 8}, {"samples_per_class", 6}}},
          {"model", {{"hidden", 8}, {"feature", 4}, {"projection", 4}}},
          {"train", {{"epochs", 2}, {"batch_size", 4}}},
          {"ssr", {{"warmup_epochs", 1}}}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    const auto cfg = write_json("tiny.json", tiny_config());
    ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + (kRoot / "data").string()), 0);
  }
  static std::string cfg() { return (kRoot / "tiny.json").string(); }
  static std::string data() { return (kRoot / "data").string(); }
};

}  // namespace

TEST_F(Cli, HelpOnEveryCommand) {
  EXPECT_EQ(run("--help"), 0);
  for (const char* sub : {"gen-data", "train", "eval", "gradcheck", "ablate"}) {
    EXPECT_EQ(run(std::string(sub) + " --help", "help.log"), 0) << sub;
    EXPECT_NE(slurp(kRoot / "help.log").find("--"), std::string::npos) << sub;
  }
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("train --config " + cfg()), 2);
}

TEST_F(Cli, InvalidConfigExitsTwoWithFieldPath) {
  auto j = tiny_config();
  j["data"]["shortcut_strength"] = 1.5;
  const auto p = write_json("bad.json", j);
  EXPECT_EQ(run("gen-data --config " + p.string() + " --out " + (kRoot / "bad").string(), "bad.log"), 2);
  EXPECT_NE(slurp(kRoot / "bad.log").find("data.shortcut_strength"), std::string::npos);
}

TEST_F(Cli, GenDataIsByteIdenticalOnRerun) {
  ASSERT_EQ(run("gen-data --config " + cfg() + " --out " + (kRoot / "data2").string()), 0);
  for (const char* f : {"meta.json", "images.bin", "labels.bin"}) EXPECT_EQ(slurp(kRoot / "data" / f), slurp(kRoot / "data2" / f)) << f;
  const auto meta = nlohmann::json::parse(slurp(kRoot / "data" / "meta.json"));
  EXPECT_TRUE(meta.contains("format_version"));
  EXPECT_EQ(fs::file_size(kRoot / "data" / "images.bin"), 60u * 3 * 8 * 8 * 4);
  EXPECT_EQ(fs::file_size(kRoot / "data" / "labels.bin"), 60u * 4);
}

TEST_F(Cli, TrainTwiceGivesIdenticalMetricsAndEvalReportsHash) {
  for (const char* run_dir : {"run1", "run2"})
    ASSERT_EQ(run("train --config " + cfg() + " --data " + data() + " --out " + (kRoot / run_dir).string()), 0);
  const std::string m1 = slurp(kRoot / "run1" / "metrics.jsonl");
  EXPECT_EQ(m1, slurp(kRoot / "run2" / "metrics.jsonl"));
  std::istringstream lines(m1);
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) EXPECT_TRUE(nlohmann::json::parse(line).contains("total"));
  EXPECT_EQ(n, 3);

  const fs::path ckpt = kRoot / "run1" / "checkpoint";
  EXPECT_TRUE(fs::exists(ckpt / "meta.json"));
  EXPECT_TRUE(fs::exists(ckpt / "params.bin"));
  ASSERT_EQ(run("eval --checkpoint " + ckpt.string() + " --data " + data() + " --out " + (kRoot / "r1.json").string()), 0);
  ASSERT_EQ(run("eval --checkpoint " + ckpt.string() + " --data " + data() + " --out " + (kRoot / "r2.json").string()), 0);
  EXPECT_EQ(slurp(kRoot / "r1.json"), slurp(kRoot / "r2.json"));
  const auto report = nlohmann::json::parse(slurp(kRoot / "r1.json"));
  for (const char* key : {"acc_all", "acc_old", "acc_new", "shortcut_gap", "config_hash", "checkpoint"})
    EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(report["checkpoint"], ckpt.string());
}

TEST_F(Cli, DisabledComponentsLogZeroTerms) {
  ASSERT_EQ(run("train --no-sva --no-ssr --config " + cfg() + " --data " + data() + " --out " + (kRoot / "plain").string()), 0);
  std::istringstream lines(slurp(kRoot / "plain" / "metrics.jsonl"));
  for (std::string line; std::getline(lines, line);) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["l_kl"].get<double>(), 0.0);
    EXPECT_EQ(j["l_ssr_pos"].get<double>() + j["l_ssr_neg"].get<double>(), 0.0);
  }
}

TEST_F(Cli, RuntimeFailuresExitOne) {
  EXPECT_EQ(run("train --config " + cfg() + " --data " + (kRoot / "absent").string() + " --out " +
                (kRoot / "x").string()),
            1);
  ASSERT_EQ(run("train --config " + cfg() + " --data " + data() + " --out " + (kRoot / "corrupt").string()), 0);
  fs::resize_file(kRoot / "corrupt" / "checkpoint" / "params.bin", 16);
  EXPECT_EQ(run("eval --checkpoint " + (kRoot / "corrupt" / "checkpoint").string() + " --data " + data() + " --out " +
                (kRoot / "c.json").string()),
            1);
  EXPECT_EQ(run("eval --checkpoint " + (kRoot / "absent").string() + " --data " + data() + " --out " +
                (kRoot / "c.json").string()),
            1);
}

TEST_F(Cli, GradcheckPassesAndFaultInjectionFails) {
  EXPECT_EQ(run("gradcheck --instances 3"), 0);
  EXPECT_EQ(run("gradcheck --instances 3 --fault-inject", "fault.log"), 1);
  EXPECT_NE(slurp(kRoot / "fault.log").find("FAIL"), std::string::npos);
}

TEST_F(Cli, AblateWritesCellsAndMeans) {
  const auto sweep = write_json("sweep.json", {{"axis", "components"}, {"seeds", {0, 1}}});
  ASSERT_EQ(run("ablate --config " + cfg() + " --sweep " + sweep.string() + " --out " + (kRoot / "ab").string()), 0);
  std::istringstream lines(slurp(kRoot / "ab" / "ablation.csv"));
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "setting,seed,acc_all,acc_old,acc_new,shortcut_gap");
  int cells = 0, means = 0;
  for (std::string line; std::getline(lines, line);) (line.find(",mean,") != std::string::npos ? means : cells)++;
  EXPECT_EQ(cells, 8);
  EXPECT_EQ(means, 4);

  const auto beta = write_json("beta.json", {{"axis", "beta"}, {"values", {0.0, 0.5}}, {"seeds", {0}}});
  ASSERT_EQ(run("ablate --config " + cfg() + " --sweep " + beta.string() + " --out " + (kRoot / "ab_beta").string()), 0);
  EXPECT_NE(slurp(kRoot / "ab_beta" / "ablation.csv").find("beta=0.5,mean,"), std::string::npos);
  const auto bad = write_json("bad_sweep.json", {{"axis", "depth"}});
  EXPECT_EQ(run("ablate --config " + cfg() + " --sweep " + bad.string() + " --out " + (kRoot / "ab_bad").string()), 2);
}
