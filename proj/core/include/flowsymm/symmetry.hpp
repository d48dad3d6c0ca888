#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsymm/graph.hpp"
#include "flowsymm/linalg.hpp"

namespace flowsymm {

/// Orientation rule applied to each basis column after the SVD.
enum class SignConvention {
  /// Entries sum to a positive value; a zero sum falls back to
  /// kFirstNonzero. Independent of edge order.
  kPositiveSum,
  /// First entry with magnitude above 1e-12 is positive.
  kFirstNonzero,
};

inline constexpr int kDefaultBasisSize = 256;

/// Truncated orthonormal basis of the admissible subspace
/// {u : B u = 0, u_e = 0 on observed edges}.
struct GroupActionBasis {
  Eigen::MatrixXd vectors;          // m x k, orthonormal columns
  Eigen::VectorXd singular_values;  // length k
  int effective_rank = 0;           // numerical dimension of the subspace
  int requested = 0;
  std::vector<std::string> warnings;

  int size() const noexcept { return static_cast<int>(vectors.cols()); }
  bool empty() const noexcept { return vectors.cols() == 0; }
};

struct Projectors {
  Eigen::MatrixXd balanced;    // onto ker B
  Eigen::MatrixXd admissible;  // onto ker B with observed entries pinned at 0
};

/// P_bal = I - B^+ B, assembled from the right singular vectors of B.
Eigen::MatrixXd kernel_projector(const Eigen::MatrixXd& incidence,
                                 double tau = kRankTolerance);

/// P_A = P_bal - P_bal S^T (S P_bal S^T)^+ S P_bal for the observed selector S.
Eigen::MatrixXd admissible_projector(const Eigen::MatrixXd& balanced,
                                     std::span<const int> observed_edges,
                                     double tau = kRankTolerance);

Projectors build_projectors(const IncidenceSystem& system, double tau = kRankTolerance);

/// Leading min(k, effective rank) left singular vectors of P_A, oriented by
/// the sign convention.
GroupActionBasis build_basis(const Eigen::MatrixXd& admissible, int k,
                             SignConvention sign = SignConvention::kPositiveSum,
                             double tau = kRankTolerance);

/// Projectors followed by build_basis.
GroupActionBasis build_group_action_basis(const IncidenceSystem& system, int k,
                                          SignConvention sign = SignConvention::kPositiveSum);

/// g_alpha(f) = f + U alpha.
Eigen::VectorXd apply_action(const Eigen::VectorXd& f, const GroupActionBasis& basis,
                             const Eigen::VectorXd& alpha);

/// Flips column signs in place according to the convention.
void orient_columns(Eigen::MatrixXd& columns, SignConvention sign);

/// m rows, one column per basis vector.
void write_basis_csv(const std::filesystem::path& path, const GroupActionBasis& basis);

}  // namespace flowsymm
