#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "flowsymm/graph.hpp"
#include "flowsymm/synth.hpp"

namespace flowsymm::testing {

// e0 = 0->1, e1 = 1->2, e2 = 2->0.
inline FlowGraph triangle(int feature_dim = 2) {
  FlowGraph g;
  g.node_count = 3;
  g.edges = {{0, 1}, {1, 2}, {2, 0}};
  g.features = Eigen::MatrixXd::Zero(3, feature_dim);
  for (int e = 0; e < 3; ++e) {
    for (int j = 0; j < feature_dim; ++j) g.features(e, j) = 0.1 * (e + 1) + 0.05 * j;
  }
  return g;
}

inline Mask mask_from(std::initializer_list<int> bits) {
  Mask m;
  for (int b : bits) m.push_back(b != 0);
  return m;
}

// Square 0-1-2-3 plus diagonal 0->2.
inline FlowGraph square_with_diagonal() {
  FlowGraph g;
  g.node_count = 4;
  g.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}};
  g.features = Eigen::MatrixXd::Constant(5, 1, 0.5);
  return g;
}

// Incidence built entry by entry, independent of build_incidence.
inline Eigen::MatrixXd naive_incidence(const FlowGraph& g) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(g.node_count, g.edge_count());
  for (int e = 0; e < g.edge_count(); ++e) {
    b(g.edges[e].source, e) -= 1.0;
    b(g.edges[e].target, e) += 1.0;
  }
  return b;
}

// Null space of [B; S_obs] by a full JacobiSVD with an absolute cutoff.
inline Eigen::MatrixXd oracle_null_space(const Eigen::MatrixXd& b, const Mask& observed) {
  const Eigen::Index m = b.cols();
  int m_obs = 0;
  for (bool o : observed) m_obs += o ? 1 : 0;
  Eigen::MatrixXd stacked = Eigen::MatrixXd::Zero(b.rows() + m_obs, m);
  stacked.topRows(b.rows()) = b;
  int r = static_cast<int>(b.rows());
  for (Eigen::Index e = 0; e < m; ++e) {
    if (observed[e]) stacked(r++, e) = 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s[i] > 1e-9 ? 1 : 0;
  return svd.matrixV().rightCols(m - rank);
}

// Largest principal angle between the column spans of two orthonormal bases,
// in the sine form (acos loses precision near zero angles).
inline double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) return M_PI / 2;
  if (a.cols() == 0) return 0.0;
  const Eigen::MatrixXd residual = b - a * (a.transpose() * b);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  return std::asin(std::min(svd.singularValues().maxCoeff(), 1.0));
}

inline SynthConfig small_config(std::uint64_t seed, int n = 10, int extra = 6,
                                double observed = 0.4) {
  SynthConfig c;
  c.n = n;
  c.extra_edges = extra;
  c.feature_dim = 3;
  c.observed_fraction = observed;
  c.seed = seed;
  return c;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

}  // namespace flowsymm::testing
