#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "flowsymm/dataset.hpp"
#include "flowsymm/errors.hpp"

namespace flowsymm {
namespace {

namespace fs = std::filesystem;

class DatasetFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("flowsymm_dataset_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static void write(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
  }

  void write_triangle(int d, const std::string& edges_body) {
    fs::create_directories(dir_);
    write(dir_ / "manifest.txt", "n=3\nm=3\nd=" + std::to_string(d) + "\nname=tri\n");
    std::string header = "edge_id,source,target,observed,flow";
    for (int j = 1; j <= d; ++j) header += ",f" + std::to_string(j);
    write(dir_ / "edges.csv", header + "\n" + edges_body);
    write(dir_ / "injections.csv", "node_id,c\n0,0\n1,0\n2,0\n");
  }

  fs::path dir_;
};

TEST_F(DatasetFiles, OneEdgeRoundTripIsBitIdentical) {
  Dataset d;
  d.name = "one";
  d.graph.node_count = 2;
  d.graph.edges = {{0, 1}};
  d.graph.features = Eigen::MatrixXd::Constant(1, 2, 0.1);
  d.graph.features(0, 1) = 1.0 / 3.0;
  d.injections = Eigen::Vector2d(-0.7, 0.7);
  d.flows = Eigen::VectorXd::Constant(1, 0.7);
  d.observed = {true};
  save_dataset(d, dir_);
  const Dataset back = load_dataset(dir_);
  EXPECT_EQ(back.name, "one");
  EXPECT_EQ(back.graph.features, d.graph.features);
  EXPECT_EQ(back.flows, d.flows);
  EXPECT_EQ(back.injections, d.injections);
  EXPECT_EQ(back.observed, d.observed);

  const std::string first = slurp(dir_ / "edges.csv");
  save_dataset(back, dir_);
  EXPECT_EQ(slurp(dir_ / "edges.csv"), first);
}

TEST_F(DatasetFiles, SyntheticRoundTrip) {
  const Dataset d = generate(testing::small_config(4, 15, 8, 0.4)).to_dataset("syn");
  save_dataset(d, dir_);
  const Dataset back = load_dataset(dir_);
  EXPECT_EQ(back.graph.features, d.graph.features);
  EXPECT_EQ(back.flows, d.flows);
  EXPECT_EQ(back.injections, d.injections);
  EXPECT_EQ(back.observed, d.observed);
  ASSERT_EQ(back.graph.edge_count(), d.graph.edge_count());
  for (int e = 0; e < d.graph.edge_count(); ++e) {
    EXPECT_EQ(back.graph.edges[e].source, d.graph.edges[e].source);
    EXPECT_EQ(back.graph.edges[e].target, d.graph.edges[e].target);
  }
}

TEST_F(DatasetFiles, TriangleLoadsToHandIncidence) {
  write_triangle(1, "0,0,1,1,1,0.1\n1,1,2,1,1,0.2\n2,2,0,0,1,0.3\n");
  const Dataset d = load_dataset(dir_);
  Eigen::MatrixXd expected(3, 3);
  expected << -1, 0, 1,
               1, -1, 0,
               0, 1, -1;
  EXPECT_EQ(build_incidence(d.graph), expected);
  EXPECT_EQ(d.observation().f_hat, Eigen::Vector3d(1, 1, 0));
}

TEST_F(DatasetFiles, FeatureCountMismatchNamesTheLine) {
  fs::create_directories(dir_);
  const int d = 18;
  std::string header = "edge_id,source,target,observed,flow";
  for (int j = 1; j <= d; ++j) header += ",f" + std::to_string(j);
  std::string row_ok = "0,0,1,1,0.5";
  for (int j = 0; j < d; ++j) row_ok += ",0.1";
  std::string row_short = "1,1,2,1,0.5";
  for (int j = 0; j < d - 1; ++j) row_short += ",0.1";
  write(dir_ / "manifest.txt", "n=3\nm=2\nd=18\n");
  write(dir_ / "edges.csv", header + "\n" + row_ok + "\n" + row_short + "\n");
  write(dir_ / "injections.csv", "node_id,c\n0,-0.5\n1,0\n2,0.5\n");
  try {
    load_dataset(dir_);
    FAIL() << "expected a parse error";
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 3);
    EXPECT_EQ(err.column(), 23);
    EXPECT_NE(err.file().find("edges.csv"), std::string::npos);
  }
}

TEST_F(DatasetFiles, MissingColumn) {
  fs::create_directories(dir_);
  write(dir_ / "manifest.txt", "n=3\nm=3\nd=1\n");
  write(dir_ / "edges.csv", "edge_id,source,target,flow,f1\n");
  write(dir_ / "injections.csv", "node_id,c\n0,0\n1,0\n2,0\n");
  try {
    load_dataset(dir_);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 1);
    EXPECT_EQ(err.column(), 4);
  }
}

TEST_F(DatasetFiles, NonDenseEdgeIds) {
  write_triangle(1, "0,0,1,1,1,0.1\n2,1,2,1,1,0.2\n1,2,0,0,1,0.3\n");
  try {
    load_dataset(dir_);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 3);
    EXPECT_EQ(err.column(), 1);
  }
}

TEST_F(DatasetFiles, NodeOutOfRange) {
  write_triangle(1, "0,0,1,1,1,0.1\n1,1,2,1,1,0.2\n2,3,0,0,1,0.3\n");
  try {
    load_dataset(dir_);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 4);
    EXPECT_EQ(err.column(), 2);
  }
}

TEST_F(DatasetFiles, BadNumberAndBadFlag) {
  write_triangle(1, "0,0,1,1,abc,0.1\n1,1,2,1,1,0.2\n2,2,0,0,1,0.3\n");
  EXPECT_THROW(load_dataset(dir_), ParseError);
  write_triangle(1, "0,0,1,2,1,0.1\n1,1,2,1,1,0.2\n2,2,0,0,1,0.3\n");
  try {
    load_dataset(dir_);
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.column(), 4);
  }
}

TEST_F(DatasetFiles, RowCountMismatch) {
  write_triangle(1, "0,0,1,1,1,0.1\n1,1,2,1,1,0.2\n");
  EXPECT_THROW(load_dataset(dir_), ParseError);
}

TEST_F(DatasetFiles, MissingManifestKey) {
  write_triangle(1, "0,0,1,1,1,0.1\n1,1,2,1,1,0.2\n2,2,0,0,1,0.3\n");
  write(dir_ / "manifest.txt", "n=3\nd=1\n");
  EXPECT_THROW(load_dataset(dir_), ParseError);
}

TEST_F(DatasetFiles, MinmaxNormalizationOnLoad) {
  write_triangle(1, "0,0,1,1,1,2\n1,1,2,1,1,4\n2,2,0,0,1,6\n");
  write(dir_ / "manifest.txt", "n=3\nm=3\nd=1\nnormalization=minmax\n");
  const Dataset d = load_dataset(dir_);
  EXPECT_EQ(d.graph.features.col(0), Eigen::Vector3d(0, 0.5, 1));
}

TEST(MinmaxNormalize, ConstantColumnsBecomeZero) {
  Eigen::MatrixXd x(3, 2);
  x << 1, 5,
       3, 5,
       2, 5;
  minmax_normalize(x);
  EXPECT_EQ(x.col(0), Eigen::Vector3d(0, 1, 0.5));
  EXPECT_EQ(x.col(1), Eigen::Vector3d::Zero());
}

}  // namespace
}  // namespace flowsymm
