#pragma once

#include <Eigen/Dense>

namespace flowsymm {

/// Singular values below kRankTolerance * sigma_max are treated as zero in
/// every rank-revealing step (anchor, projectors, basis).
inline constexpr double kRankTolerance = 1e-10;

/// Minimum 2-norm least-squares solution of A x = b via SVD.
Eigen::VectorXd min_norm_least_squares(const Eigen::MatrixXd& a,
                                       const Eigen::VectorXd& b,
                                       double tau = kRankTolerance);

/// Moore-Penrose pseudoinverse with relative threshold tau.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a,
                               double tau = kRankTolerance);

/// Orthonormal basis of the right null space of A (columns of V whose
/// singular value is below tau * sigma_max).
Eigen::MatrixXd null_space(const Eigen::MatrixXd& a,
                           double tau = kRankTolerance);

/// Returns (M + M^T) / 2.
Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m);

/// Numerical rank with the relative threshold used throughout the library.
int numerical_rank(const Eigen::VectorXd& singular_values,
                   double tau = kRankTolerance);

}  // namespace flowsymm
