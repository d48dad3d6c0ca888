#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "flowsymm/anchor.hpp"
#include "flowsymm/linalg.hpp"

namespace flowsymm {
namespace {

using testing::mask_from;
using testing::triangle;

AnchorCompletion triangle_anchor(const Mask& mask, const Eigen::Vector3d& flows,
                                 const Eigen::Vector3d& injections = Eigen::Vector3d::Zero()) {
  const IncidenceSystem sys = partition_edges(build_incidence(triangle()), mask);
  return compute_anchor(sys, Observation::from_flows(flows, injections, mask));
}

TEST(ComputeAnchor, TriangleClosesTheCycle) {
  const AnchorCompletion a = triangle_anchor(mask_from({1, 1, 0}), {1, 1, 0});
  ASSERT_EQ(a.delta0.size(), 1);
  EXPECT_NEAR(a.delta0[0], 1.0, 1e-12);
  EXPECT_NEAR((a.f0 - Eigen::Vector3d(1, 1, 1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(a.residual_norm, 0.0, 1e-12);
  EXPECT_TRUE(a.consistent);
}

TEST(ComputeAnchor, NoMissingEdgesReturnsObservation) {
  const AnchorCompletion a = triangle_anchor(mask_from({1, 1, 1}), {2, 2, 2});
  EXPECT_EQ(a.delta0.size(), 0);
  EXPECT_EQ(a.f0, Eigen::Vector3d(2, 2, 2));
  EXPECT_EQ(a.residual_norm, 0.0);
  EXPECT_TRUE(a.consistent);
}

TEST(ComputeAnchor, NoMissingEdgesInconsistentFlagsWithoutThrowing) {
  const AnchorCompletion a = triangle_anchor(mask_from({1, 1, 1}), {1, 2, 3});
  EXPECT_EQ(a.f0, Eigen::Vector3d(1, 2, 3));
  EXPECT_GT(a.residual_norm, 1.0);
  EXPECT_FALSE(a.consistent);
}

TEST(ComputeAnchor, AllMissingBalancedIsZero) {
  const AnchorCompletion a = triangle_anchor(mask_from({0, 0, 0}), {0, 0, 0});
  EXPECT_EQ(a.delta0.size(), 3);
  EXPECT_LE(a.delta0.norm(), 1e-14);
}

TEST(ComputeAnchor, ConsistentInstancesBalanceAndKeepObservations) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SynthInstance inst = generate(testing::small_config(seed, 15, 8, 0.5));
    const IncidenceSystem sys = partition_edges(build_incidence(inst.graph), inst.observed);
    const Observation obs = inst.observation();
    const AnchorCompletion a = compute_anchor(sys, obs);
    const Eigen::VectorXd& c = inst.injections;
    EXPECT_LE((sys.incidence() * a.f0 - c).norm(), 1e-8 * (1.0 + c.norm())) << seed;
    EXPECT_TRUE(a.consistent);
    for (int e : sys.observed_edges()) EXPECT_EQ(a.f0[e], obs.f_hat[e]);
  }
}

TEST(ComputeAnchor, MinimumNormAmongCompletions) {
  // Adding any admissible circulation to delta0 can only grow its norm:
  // delta0 is orthogonal to ker B_miss.
  const SynthInstance inst = generate(testing::small_config(4, 12, 6, 0.3));
  const IncidenceSystem sys = partition_edges(build_incidence(inst.graph), inst.observed);
  const AnchorCompletion a = compute_anchor(sys, inst.observation());
  const Eigen::MatrixXd kernel = null_space(sys.missing_incidence());
  ASSERT_GT(kernel.cols(), 0);
  EXPECT_LE((kernel.transpose() * a.delta0).norm(), 1e-10);
}

TEST(ComputeAnchor, NoisyObservationsGiveLeastSquaresAnchor) {
  SynthConfig cfg = testing::small_config(9, 8, 0, 0.6);  // a tree: B_miss has full column rank
  cfg.obs_noise_std = 0.1;
  const SynthInstance inst = generate(cfg);
  const IncidenceSystem sys = partition_edges(build_incidence(inst.graph), inst.observed);
  const Observation obs = inst.observation();
  const AnchorCompletion a = compute_anchor(sys, obs);
  const Eigen::VectorXd rhs = obs.injections - empirical_imbalance(sys, obs);
  const Eigen::MatrixXd& bm = sys.missing_incidence();
  // Normal equations of the least-squares problem.
  EXPECT_LE((bm.transpose() * (bm * a.delta0 - rhs)).norm(), 1e-10);
}

TEST(MinNormLeastSquares, MatchesPseudoInverse) {
  std::mt19937_64 rng(1);
  Eigen::MatrixXd a(5, 7);
  for (int j = 0; j < 7; ++j) a.col(j) = testing::random_vector(5, rng);
  a.col(6) = a.col(0) + a.col(1);  // rank deficient
  const Eigen::VectorXd b = testing::random_vector(5, rng);
  const Eigen::VectorXd x = min_norm_least_squares(a, b);
  const Eigen::VectorXd oracle = a.completeOrthogonalDecomposition().pseudoInverse() * b;
  EXPECT_LE((x - oracle).norm(), 1e-10);
}

TEST(BalanceTolerance, ScalesWithInjections) {
  EXPECT_DOUBLE_EQ(balance_tolerance(Eigen::Vector2d::Zero()), 1e-8);
  EXPECT_DOUBLE_EQ(balance_tolerance(Eigen::Vector2d(3, 4)), 6e-8);
}

}  // namespace
}  // namespace flowsymm
