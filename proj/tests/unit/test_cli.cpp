#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using owdetr::cli::kExitOk;
using owdetr::cli::kExitUser;

namespace {

constexpr const char* kTinyConfig = R"(# small enough to train in a few seconds
data.train_per_task = 6
data.eval_images = 4
model.dim = 8
model.ffn_dim = 16
model.queries = 14
model.stem_channels = 4
model.backbone_channels = 8
train.pretrain_epochs = 1
train.pretrain_decay_epoch = 1
train.owl_epochs = 1
train.owl_decay_epoch = 1
train.finetune_epochs = 1
train.finetune_decay_epoch = 1
)";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("owdetr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
             "_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = (root_ / "tiny.conf").string();
    std::ofstream(config_) << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return owdetr::cli::run(args, out_, err_);
  }
  int run_in(const fs::path& out, std::vector<std::string> args) {
    args.insert(args.end(), {"--config", config_, "--out", out.string()});
    return run(std::move(args));
  }

  fs::path root_;
  std::string config_;
  std::ostringstream out_, err_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({}), kExitUser);
  EXPECT_EQ(run({"bogus"}), kExitUser);
  EXPECT_EQ(run({"eval", "--nope"}), kExitUser);
  EXPECT_EQ(run({"--help"}), kExitOk);
  EXPECT_NE(out_.str().find("pretrain"), std::string::npos);
  EXPECT_EQ(run({"pretrain", "--config", (root_ / "missing.conf").string()}), kExitUser);
  std::ofstream(root_ / "bad.conf") << "train.lr = -1\n";
  EXPECT_EQ(run({"pretrain", "--config", (root_ / "bad.conf").string()}), kExitUser);
  EXPECT_NE(err_.str().find("lr"), std::string::npos);
  EXPECT_EQ(run_in(root_ / "r", {"pretrain", "--task", "7"}), kExitUser);
}

TEST_F(Cli, MissingPrerequisitesAreRefused) {
  const auto out = root_ / "run";
  EXPECT_EQ(run_in(out, {"owl"}), kExitUser);
  EXPECT_NE(err_.str().find("pretrain.ckpt"), std::string::npos);
  EXPECT_EQ(run_in(out, {"incr", "--task", "2"}), kExitUser);
  EXPECT_EQ(run_in(out, {"eval"}), kExitUser);
  EXPECT_EQ(run_in(out, {"report"}), kExitUser);
  EXPECT_NE(err_.str().find("no eval reports"), std::string::npos);
}

TEST_F(Cli, GenerateWritesDataset) {
  const auto out = root_ / "gen";
  ASSERT_EQ(run_in(out, {"generate"}), kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(out / "data" / "manifest.json"));
  EXPECT_TRUE(fs::exists(out / "data" / "images.owr"));
  EXPECT_TRUE(fs::exists(out / "data" / "eval_coco.json"));
}

TEST_F(Cli, OutputRootFromEnvironment) {
  const auto out = root_ / "from_env";
  ::setenv(owdetr::cli::kOutEnv, out.string().c_str(), 1);
  const int code = run({"generate", "--config", config_});
  ::unsetenv(owdetr::cli::kOutEnv);
  ASSERT_EQ(code, kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(out / "data" / "manifest.json"));
}

TEST_F(Cli, PipelineIsDeterministicAndChecksItsInputs) {
  auto pipeline = [&](const fs::path& out) {
    for (auto args : std::vector<std::vector<std::string>>{{"pretrain"},
                                                          {"owl"},
                                                          {"eval", "--task", "1"},
                                                          {"incr", "--task", "2"},
                                                          {"eval", "--task", "2"},
                                                          {"report"}}) {
      const int code = run_in(out, args);
      EXPECT_EQ(code, kExitOk) << args[0] << ": " << err_.str();
      if (code != kExitOk) return false;
    }
    return true;
  };
  const auto a = root_ / "a", b = root_ / "b";
  ASSERT_TRUE(pipeline(a));
  ASSERT_TRUE(pipeline(b));

  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 15);

  // report rows are ordered by task
  const std::string csv = slurp(a / "report.csv");
  EXPECT_LT(csv.find("\n1,"), csv.find("\n2,"));
  const auto j = nlohmann::json::parse(slurp(a / "task1" / "eval_eval.json"));
  EXPECT_EQ(j.at("split"), "eval");
  EXPECT_TRUE(j.contains("config_hash"));
  const auto dets = nlohmann::json::parse(slurp(a / "task2" / "detections_eval.json"));
  ASSERT_TRUE(dets.is_array());
  for (const auto& d : dets) EXPECT_LE(d.at("category_id").get<int>(), 9);

  // re-evaluating gives byte-identical output
  const std::string before = slurp(a / "task1" / "eval_eval.json");
  ASSERT_EQ(run_in(a, {"eval", "--task", "1"}), kExitOk);
  EXPECT_EQ(slurp(a / "task1" / "eval_eval.json"), before);

  EXPECT_EQ(run_in(a, {"eval", "--split", "validation"}), kExitUser);
  EXPECT_NE(err_.str().find("unknown split"), std::string::npos);
  // a task-2 checkpoint cannot be evaluated as task 1
  EXPECT_EQ(run_in(a, {"eval", "--task", "1", "--checkpoint", (a / "task2" / "model.ckpt").string()}),
            kExitUser);

  // a different configuration refuses the existing checkpoints
  std::ofstream(config_, std::ios::app) << "pseudo.k = 3\n";
  EXPECT_EQ(run_in(a, {"owl"}), kExitUser);
  EXPECT_NE(err_.str().find("hash"), std::string::npos);
  EXPECT_EQ(run_in(a, {"eval", "--task", "1"}), kExitUser);
}
