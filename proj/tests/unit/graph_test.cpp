#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "flowsymm/errors.hpp"
#include "flowsymm/graph.hpp"

namespace flowsymm {
namespace {

using testing::mask_from;
using testing::naive_incidence;
using testing::triangle;

TEST(BuildIncidence, TriangleMatchesHandConstruction) {
  Eigen::MatrixXd expected(3, 3);
  expected << -1, 0, 1,
               1, -1, 0,
               0, 1, -1;
  EXPECT_EQ(build_incidence(triangle()), expected);
}

TEST(BuildIncidence, SingleEdge) {
  FlowGraph g;
  g.node_count = 2;
  g.edges = {{0, 1}};
  g.features = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd expected(2, 1);
  expected << -1, 1;
  EXPECT_EQ(build_incidence(g), expected);
}

TEST(BuildIncidence, RejectsSelfLoop) {
  FlowGraph g = triangle();
  g.edges[1] = {1, 1};
  EXPECT_THROW(build_incidence(g), StructuralError);
}

TEST(BuildIncidence, RejectsOutOfRangeNode) {
  FlowGraph g = triangle();
  g.edges[0] = {0, 3};
  EXPECT_THROW(build_incidence(g), StructuralError);
  g.edges[0] = {-1, 2};
  EXPECT_THROW(build_incidence(g), StructuralError);
}

TEST(FlowGraphValidate, RejectsDuplicatesAndFeatureMismatch) {
  FlowGraph dup = triangle();
  dup.edges[2] = {0, 1};
  EXPECT_THROW(dup.validate(), StructuralError);

  FlowGraph short_features = triangle();
  short_features.features.conservativeResize(2, Eigen::NoChange);
  EXPECT_THROW(short_features.validate(), StructuralError);

  FlowGraph empty;
  empty.node_count = 2;
  EXPECT_THROW(empty.validate(), StructuralError);
}

TEST(BuildIncidence, ColumnsSumToZeroOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SynthInstance inst = generate(testing::small_config(seed));
    const Eigen::MatrixXd b = build_incidence(inst.graph);
    EXPECT_EQ(b, naive_incidence(inst.graph));
    EXPECT_EQ(b.colwise().sum().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(b.cwiseAbs().colwise().sum(), Eigen::RowVectorXd::Constant(b.cols(), 2.0));
  }
}

TEST(PartitionEdges, TriangleLastMissing) {
  const IncidenceSystem sys = partition_edges(build_incidence(triangle()), mask_from({1, 1, 0}));
  ASSERT_EQ(sys.missing_count(), 1);
  EXPECT_EQ(sys.missing_incidence(), Eigen::Vector3d(1, 0, -1));
  EXPECT_EQ(sys.observed_count(), 2);
  EXPECT_EQ(sys.missing_position(2), 0);
  EXPECT_EQ(sys.missing_position(0), -1);
}

TEST(PartitionEdges, AllObservedAndAllMissing) {
  const Eigen::MatrixXd b = build_incidence(triangle());
  const IncidenceSystem full = partition_edges(b, mask_from({1, 1, 1}));
  EXPECT_EQ(full.missing_selector().rows(), 0);
  EXPECT_TRUE(full.degenerate());

  const IncidenceSystem none = partition_edges(b, mask_from({0, 0, 0}));
  EXPECT_EQ(none.observed_selector().rows(), 0);
  EXPECT_EQ(none.missing_incidence(), b);
}

TEST(PartitionEdges, RejectsMaskLengthMismatch) {
  EXPECT_THROW(partition_edges(build_incidence(triangle()), mask_from({1, 0})), StructuralError);
}

TEST(PartitionEdges, SelectorsPartitionTheIdentity) {
  std::mt19937_64 rng(3);
  const SynthInstance inst = generate(testing::small_config(3));
  const Eigen::MatrixXd b = build_incidence(inst.graph);
  const IncidenceSystem sys = partition_edges(b, inst.observed);
  const Eigen::MatrixXd s_obs = sys.observed_selector();
  const Eigen::MatrixXd s_miss = sys.missing_selector();
  const Eigen::Index m = b.cols();
  EXPECT_EQ(s_obs.transpose() * s_obs + s_miss.transpose() * s_miss,
            Eigen::MatrixXd::Identity(m, m));
  EXPECT_EQ(sys.observed_incidence(), b * s_obs.transpose());
  EXPECT_EQ(sys.missing_incidence(), b * s_miss.transpose());

  const Eigen::VectorXd f = testing::random_vector(m, rng);
  const Eigen::VectorXd delta = testing::random_vector(sys.missing_count(), rng);
  const Eigen::VectorXd g = sys.with_missing(f, delta);
  EXPECT_EQ(sys.gather_observed(g), sys.gather_observed(f));
  EXPECT_EQ(sys.gather_missing(g), delta);
  EXPECT_EQ(Eigen::MatrixXd(sys.sparse_missing_incidence()), sys.missing_incidence());
}

TEST(EmpiricalImbalance, TriangleExample) {
  const IncidenceSystem sys = partition_edges(build_incidence(triangle()), mask_from({1, 1, 0}));
  const Observation obs =
      Observation::from_flows(Eigen::Vector3d(1, 1, 0), Eigen::Vector3d::Zero(), sys.observed_mask());
  EXPECT_EQ(empirical_imbalance(sys, obs), Eigen::Vector3d(-1, 0, 1));
}

TEST(EmpiricalImbalance, ZeroFlowsGiveZero) {
  const IncidenceSystem sys = partition_edges(build_incidence(triangle()), mask_from({1, 0, 1}));
  const Observation obs = Observation::from_flows(Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(),
                                                  sys.observed_mask());
  EXPECT_EQ(empirical_imbalance(sys, obs), Eigen::Vector3d::Zero());
}

TEST(EmpiricalImbalance, FullyObservedBalancedFlowRecoversInjections) {
  const SynthInstance inst = generate(testing::small_config(11, 12, 5, 1.0));
  const Eigen::MatrixXd b = build_incidence(inst.graph);
  const IncidenceSystem sys = partition_edges(b, inst.observed);
  ASSERT_TRUE(sys.degenerate());
  EXPECT_EQ(empirical_imbalance(sys, inst.observation()), inst.injections);
}

TEST(Observation, FromFlowsZeroesHiddenEntries) {
  const Observation obs = Observation::from_flows(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d::Zero(),
                                                  mask_from({1, 0, 1}));
  EXPECT_EQ(obs.f_hat, Eigen::Vector3d(1, 0, 3));
  EXPECT_NO_THROW(obs.validate(3, 3));
  EXPECT_THROW(obs.validate(3, 4), StructuralError);
}

TEST(CountTrue, Counts) {
  EXPECT_EQ(count_true(mask_from({1, 0, 1, 1})), 3);
  EXPECT_EQ(count_true({}), 0);
}

}  // namespace
}  // namespace flowsymm
