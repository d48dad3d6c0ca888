#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "flowsymm/dataset.hpp"
#include "flowsymm_cli/cli.hpp"

namespace flowsymm {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    out[entry.path().filename().string()] = slurp(entry.path());
  }
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("flowsymm_cli_" +
             std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string path(const std::string& leaf) const { return (root_ / leaf).string(); }

  std::string make_data(const std::string& leaf = "data", const std::string& seed = "7") {
    const Result r = run({"generate", "--seed", seed, "--n", "12", "--extra-edges", "16",
                          "--feature-dim", "4", "--observed-fraction", "0.3", "--out-dir",
                          path(leaf)});
    EXPECT_EQ(r.code, 0) << r.err;
    return path(leaf);
  }

  static std::vector<std::string> small_model(const std::string& data) {
    return {"--data", data, "--k", "8", "--folds", "3", "--max-epochs", "2"};
  }

  // Runs the same command into two directories and requires identical files.
  void expect_deterministic(std::vector<std::string> args, const std::vector<std::string>& files) {
    std::map<std::string, std::string> first;
    for (const char* leaf : {"run_a", "run_b"}) {
      std::vector<std::string> full = args;
      full.insert(full.end(), {"--out-dir", path(leaf)});
      const Result r = run(full);
      ASSERT_EQ(r.code, 0) << r.err;
      const auto got = artifacts(path(leaf));
      for (const auto& f : files) EXPECT_EQ(got.count(f), 1u) << f;
      if (first.empty()) {
        first = got;
      } else {
        EXPECT_EQ(got, first);
      }
    }
  }

  fs::path root_;
};

TEST_F(Cli, GenerateIsDeterministicAndReloads) {
  const std::string a = make_data("a");
  const std::string b = make_data("b");
  EXPECT_EQ(artifacts(a), artifacts(b));
  EXPECT_EQ(artifacts(a).size(), 3u);
  const Dataset d = load_dataset(a);
  EXPECT_EQ(d.graph.node_count, 12);
  EXPECT_EQ(d.graph.edge_count(), 11 + 16);
  EXPECT_EQ(d.graph.feature_dim(), 4);
  EXPECT_NE(artifacts(make_data("c", "8")), artifacts(a));
}

TEST_F(Cli, TrainIsDeterministic) {
  const std::string data = make_data();
  auto args = small_model(data);
  args.insert(args.begin(), "train");
  args.push_back("--timing");
  // Wall times differ between runs, so compare the log and checkpoint only.
  std::map<std::string, std::string> first;
  for (const char* leaf : {"run_a", "run_b"}) {
    auto full = args;
    full.insert(full.end(), {"--out-dir", path(leaf)});
    const Result r = run(full);
    ASSERT_EQ(r.code, 0) << r.err;
    auto got = artifacts(path(leaf));
    ASSERT_EQ(got.count("epoch_timing.csv"), 1u);
    got.erase("epoch_timing.csv");
    if (first.empty()) {
      first = got;
    } else {
      EXPECT_EQ(got, first);
    }
  }
  EXPECT_EQ(first.count("checkpoint.txt"), 1u);
  EXPECT_EQ(first.count("epoch_log.csv"), 1u);
}

TEST_F(Cli, TimingFileIsOptIn) {
  const std::string data = make_data();
  auto args = small_model(data);
  args.insert(args.begin(), "train");
  args.insert(args.end(), {"--out-dir", path("out")});
  ASSERT_EQ(run(args).code, 0);
  EXPECT_FALSE(fs::exists(root_ / "out" / "epoch_timing.csv"));
}

TEST_F(Cli, PredictIsDeterministic) {
  const std::string data = make_data();
  auto train_args = small_model(data);
  train_args.insert(train_args.begin(), "train");
  train_args.insert(train_args.end(), {"--out-dir", path("model")});
  ASSERT_EQ(run(train_args).code, 0);
  expect_deterministic({"predict", "--data", data, "--checkpoint", path("model/checkpoint.txt")},
                       {"predictions.csv", "attention.csv"});
  const std::string preds = slurp(root_ / "run_a" / "predictions.csv");
  EXPECT_EQ(preds.rfind("edge_id,observed,f0,action,f_tilde\n", 0), 0u);
  EXPECT_EQ(std::count(preds.begin(), preds.end(), '\n'), 1 + 27);
  // 19 unsensed edges on 12 nodes leave at least 8 admissible directions.
  const std::string attn = slurp(root_ / "run_a" / "attention.csv");
  EXPECT_EQ(std::count(attn.begin(), attn.end(), '\n'), 1 + 8);
}

TEST_F(Cli, PredictRejectsMismatchedCheckpoint) {
  const std::string data = make_data();
  auto train_args = small_model(data);
  train_args.insert(train_args.begin(), "train");
  train_args.insert(train_args.end(), {"--out-dir", path("model")});
  ASSERT_EQ(run(train_args).code, 0);
  const Result gen = run({"generate", "--n", "10", "--extra-edges", "4", "--feature-dim", "3",
                          "--out-dir", path("other")});
  ASSERT_EQ(gen.code, 0);
  const Result r = run({"predict", "--data", path("other"), "--checkpoint",
                        path("model/checkpoint.txt"), "--out-dir", path("p")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("features"), std::string::npos);
}

TEST_F(Cli, EvaluateIsDeterministic) {
  const std::string data = make_data();
  auto args = small_model(data);
  args.insert(args.begin(), "evaluate");
  expect_deterministic(args, {"metrics.csv", "metrics.json"});
  const std::string csv = slurp(root_ / "run_a" / "metrics.csv");
  // Six methods, three outer folds.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 * 3);
}

TEST_F(Cli, AblateRowsMatchVariantsSizesAndFolds) {
  const std::string data = make_data();
  auto args = small_model(data);
  args.insert(args.begin(), "ablate");
  args.insert(args.end(), {"--ks", "2,4"});
  expect_deterministic(args, {"ablation.csv", "ablation.json"});
  const std::string csv = slurp(root_ / "run_a" / "ablation.csv");
  // Full model at each k, plus the two variants, for each of three folds.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + (2 + 2) * 3);
}

TEST_F(Cli, SensitivityIsDeterministic) {
  const std::string data = make_data();
  auto args = small_model(data);
  args.insert(args.begin(), "sensitivity");
  args.insert(args.end(), {"--levels", "0,0.1"});
  expect_deterministic(args, {"sensitivity.csv"});
  const std::string csv = slurp(root_ / "run_a" / "sensitivity.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2);
}

TEST_F(Cli, UnknownFlagPrintsUsage) {
  const Result r = run({"generate", "--bogus", "1"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("--out-dir"), std::string::npos);
}

TEST_F(Cli, UnknownOrMissingSubcommand) {
  EXPECT_NE(run({"frobnicate"}).code, 0);
  EXPECT_NE(run({}).code, 0);
}

TEST_F(Cli, InvalidChoiceIsRejected) {
  const std::string data = make_data();
  EXPECT_NE(run({"train", "--data", data, "--solver", "qr"}).code, 0);
  EXPECT_NE(run({"train", "--data", data, "--k", "0"}).code, 0);
}

TEST_F(Cli, MalformedDatasetExitsWithParseCode) {
  const std::string data = make_data();
  std::ofstream(fs::path(data) / "edges.csv", std::ios::app) << "garbage\n";
  const Result r = run({"train", "--data", data, "--out-dir", path("out")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("edges.csv"), std::string::npos);
}

TEST_F(Cli, MissingDatasetIsAnError) {
  EXPECT_NE(run({"train", "--data", path("nowhere"), "--out-dir", path("out")}).code, 0);
}

}  // namespace
}  // namespace flowsymm
