#include "flowsymm/symmetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "flowsymm/errors.hpp"

namespace flowsymm {

namespace {

constexpr double kSignEpsilon = 1e-12;

void flip_to_first_nonzero(Eigen::Ref<Eigen::VectorXd> column) {
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    if (std::abs(column[i]) > kSignEpsilon) {
      if (column[i] < 0.0) column = -column;
      return;
    }
  }
}

}  // namespace

Eigen::MatrixXd kernel_projector(const Eigen::MatrixXd& incidence, double tau) {
  const Eigen::Index m = incidence.cols();
  Eigen::MatrixXd projector = Eigen::MatrixXd::Identity(m, m);
  if (incidence.size() == 0) return projector;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(incidence, Eigen::ComputeThinV);
  const int rank = numerical_rank(svd.singularValues(), tau);
  const Eigen::MatrixXd row_space = svd.matrixV().leftCols(rank);
  projector.noalias() -= row_space * row_space.transpose();
  return symmetrized(projector);
}

Eigen::MatrixXd admissible_projector(const Eigen::MatrixXd& balanced,
                                     std::span<const int> observed_edges, double tau) {
  if (balanced.rows() != balanced.cols()) {
    throw StructuralError("balanced projector must be square");
  }
  const Eigen::Index m = balanced.rows();
  const Eigen::Index m_obs = static_cast<Eigen::Index>(observed_edges.size());
  if (m_obs == 0) return balanced;

  // P_bal S^T: the observed columns of P_bal.
  Eigen::MatrixXd cols(m, m_obs);
  for (Eigen::Index j = 0; j < m_obs; ++j) {
    const int e = observed_edges[j];
    if (e < 0 || e >= m) throw StructuralError("observed edge index out of range");
    cols.col(j) = balanced.col(e);
  }
  Eigen::MatrixXd gram(m_obs, m_obs);
  for (Eigen::Index j = 0; j < m_obs; ++j) gram.row(j) = cols.row(observed_edges[j]);

  const Eigen::MatrixXd correction = cols * pseudo_inverse(symmetrized(gram), tau) * cols.transpose();
  Eigen::MatrixXd projector = symmetrized(balanced - correction);
  // Observed rows and columns vanish in exact arithmetic; remove the rounding.
  for (const int e : observed_edges) {
    projector.row(e).setZero();
    projector.col(e).setZero();
  }
  return projector;
}

Projectors build_projectors(const IncidenceSystem& system, double tau) {
  Projectors p;
  p.balanced = kernel_projector(system.incidence(), tau);
  p.admissible = admissible_projector(p.balanced, system.observed_edges(), tau);
  return p;
}

void orient_columns(Eigen::MatrixXd& columns, SignConvention sign) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    auto column = columns.col(j);
    if (sign == SignConvention::kPositiveSum) {
      const double total = column.sum();
      if (std::abs(total) > kSignEpsilon * std::sqrt(static_cast<double>(column.size()))) {
        if (total < 0.0) column = -column;
        continue;
      }
    }
    flip_to_first_nonzero(column);
  }
}

GroupActionBasis build_basis(const Eigen::MatrixXd& admissible, int k, SignConvention sign,
                             double tau) {
  if (k < 1) throw ConfigError("basis size k must be at least 1");
  if (admissible.rows() != admissible.cols()) {
    throw StructuralError("admissible projector must be square");
  }

  GroupActionBasis basis;
  basis.requested = k;
  const Eigen::Index m = admissible.rows();
  if (m == 0 || admissible.cwiseAbs().maxCoeff() == 0.0) {
    basis.vectors.resize(m, 0);
    basis.singular_values.resize(0);
    basis.warnings.push_back("admissible subspace is trivial; basis is empty");
    return basis;
  }

  // P_A is symmetric positive semidefinite, so its left singular vectors are
  // eigenvectors and the singular values are the eigenvalues. The symmetric
  // solver also copes with the massively repeated unit spectrum, which trips
  // Eigen's divide-and-conquer SVD.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrized(admissible));
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition of P_A failed");
  const Eigen::VectorXd sigma = eig.eigenvalues().reverse().cwiseAbs();
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  // A projector has unit singular values, so the threshold never drops below
  // tau itself; a projector that is zero up to rounding has rank 0.
  const double cutoff = tau * std::max(sigma.maxCoeff(), 1.0);
  basis.effective_rank = static_cast<int>((sigma.array() > cutoff).count());
  const int kept = std::min(k, basis.effective_rank);
  if (kept < k) {
    basis.warnings.push_back("requested " + std::to_string(k) +
                             " basis vectors but the admissible subspace has rank " +
                             std::to_string(basis.effective_rank));
  }
  basis.vectors = vectors.leftCols(kept);
  basis.singular_values = sigma.head(kept);
  // Coordinates the projector annihilates exactly (observed edges) are pinned
  // to zero in the basis as well.
  for (Eigen::Index i = 0; i < m; ++i) {
    if (admissible.row(i).cwiseAbs().maxCoeff() == 0.0) basis.vectors.row(i).setZero();
  }
  orient_columns(basis.vectors, sign);
  return basis;
}

GroupActionBasis build_group_action_basis(const IncidenceSystem& system, int k,
                                          SignConvention sign) {
  const Projectors p = build_projectors(system);
  return build_basis(p.admissible, k, sign);
}

Eigen::VectorXd apply_action(const Eigen::VectorXd& f, const GroupActionBasis& basis,
                             const Eigen::VectorXd& alpha) {
  if (alpha.size() != basis.size()) {
    throw StructuralError("action coefficients do not match basis size");
  }
  if (f.size() != basis.vectors.rows()) throw StructuralError("flow length does not match basis");
  if (basis.empty()) return f;
  return f + basis.vectors * alpha;
}

void write_basis_csv(const std::filesystem::path& path, const GroupActionBasis& basis) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  char buf[32];
  for (int j = 0; j < basis.size(); ++j) {
    out << (j ? "," : "") << "u" << j;
  }
  out << '\n';
  for (Eigen::Index e = 0; e < basis.vectors.rows(); ++e) {
    for (int j = 0; j < basis.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", basis.vectors(e, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace flowsymm
