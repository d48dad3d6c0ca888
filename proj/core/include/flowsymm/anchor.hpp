#pragma once

#include <Eigen/Dense>

#include "flowsymm/graph.hpp"
#include "flowsymm/linalg.hpp"

namespace flowsymm {

/// Minimum-norm balanced completion of a partial observation.
struct AnchorCompletion {
  Eigen::VectorXd delta0;  // missing-edge part, length m_miss
  Eigen::VectorXd f0;      // full flow, observed entries copied from f_hat
  double residual_norm = 0.0;  // ||B_miss delta0 - (c - c_hat)||_2
  bool consistent = true;      // residual within 1e-8 (1 + ||c||)
};

/// Solves B_miss delta = c - B_obs f_hat_obs in the minimum-norm
/// least-squares sense. Inconsistent data yields the least-squares anchor with
/// consistent == false rather than an exception.
AnchorCompletion compute_anchor(const IncidenceSystem& system, const Observation& obs,
                                double tau = kRankTolerance);

/// Balance tolerance used to classify a completion as consistent.
double balance_tolerance(const Eigen::VectorXd& injections);

}  // namespace flowsymm
