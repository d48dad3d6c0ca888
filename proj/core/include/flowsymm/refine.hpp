#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "flowsymm/graph.hpp"

namespace flowsymm {

enum class SolverKind { kDenseCholesky, kConjugateGradient };

const char* to_string(SolverKind kind);
SolverKind solver_kind_from_string(const std::string& name);

struct CgOptions {
  double tolerance = 1e-10;  // relative residual
  int max_iterations = 0;    // 0 means 10 * system size
};

/// Result of the Tikhonov refinement on the missing edges.
struct Refinement {
  Eigen::VectorXd delta_tik;
  Eigen::VectorXd f_tilde;  // filled by assemble_prediction / refine
  double lambda = 1.0;
  SolverKind solver = SolverKind::kDenseCholesky;
  int cg_iterations = 0;
  std::vector<std::string> warnings;
};

/// The SPD operator (B_miss^T B_miss + lambda I). The dense Cholesky factor is
/// computed on first use and reused by later solves; every solve is counted.
class TikhonovSystem {
 public:
  TikhonovSystem(const IncidenceSystem& system, double lambda,
                 SolverKind kind = SolverKind::kDenseCholesky, CgOptions cg = {});

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs);

  /// Operator application without forming the matrix.
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;

  Eigen::MatrixXd dense_matrix() const;

  int size() const noexcept { return size_; }
  double lambda() const noexcept { return lambda_; }
  SolverKind kind() const noexcept { return kind_; }
  int solve_count() const noexcept { return solves_; }
  int last_cg_iterations() const noexcept { return last_cg_iterations_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  const Eigen::LLT<Eigen::MatrixXd>& factor();

  const IncidenceSystem* system_;
  int size_;
  double lambda_;
  SolverKind kind_;
  CgOptions cg_;
  Eigen::SparseMatrix<double> b_miss_sparse_;
  std::optional<Eigen::LLT<Eigen::MatrixXd>> llt_;
  int solves_ = 0;
  int last_cg_iterations_ = 0;
  std::vector<std::string> warnings_;
};

/// Right-hand side lambda delta_attn - B_miss^T (B_obs f_cand_obs - c_hat).
Eigen::VectorXd tikhonov_rhs(const IncidenceSystem& system, const Eigen::VectorXd& f_cand_obs,
                             const Eigen::VectorXd& c_hat, const Eigen::VectorXd& delta_attn,
                             double lambda);

/// Solves the normal equations of
///   ||B_miss d + B_obs f_cand_obs - c_hat||^2 + lambda ||d - delta_attn||^2.
/// f_tilde is left empty. Throws ConfigError when lambda <= 0.
Refinement tikhonov_solve(const IncidenceSystem& system, const Eigen::VectorXd& f_cand_obs,
                          const Eigen::VectorXd& c_hat, const Eigen::VectorXd& delta_attn,
                          double lambda, SolverKind solver = SolverKind::kDenseCholesky);

/// Same as tikhonov_solve but on a caller-owned operator (counts the solve,
/// keeps the factorization for a later adjoint solve).
Refinement tikhonov_solve(TikhonovSystem& op, const IncidenceSystem& system,
                          const Eigen::VectorXd& f_cand_obs, const Eigen::VectorXd& c_hat,
                          const Eigen::VectorXd& delta_attn);

/// f_tilde = f_cand + S_miss^T (delta_tik - delta_attn); observed entries are
/// copied from f_cand.
Eigen::VectorXd assemble_prediction(const Eigen::VectorXd& f_cand,
                                    const Eigen::VectorXd& delta_tik,
                                    const Eigen::VectorXd& delta_attn,
                                    const IncidenceSystem& system);

/// (B_miss^T B_miss + lambda I) w = rhs, reusing op's factorization when given.
Eigen::VectorXd adjoint_solve(const IncidenceSystem& system, double lambda,
                              const Eigen::VectorXd& rhs,
                              SolverKind solver = SolverKind::kDenseCholesky);
Eigen::VectorXd adjoint_solve(TikhonovSystem& op, const Eigen::VectorXd& rhs);

/// Plain conjugate gradient on an SPD operator. Returns std::nullopt when the
/// relative residual does not reach tolerance within max_iterations.
template <class Operator>
std::optional<Eigen::VectorXd> conjugate_gradient(const Operator& apply, const Eigen::VectorXd& rhs,
                                                  double tolerance, int max_iterations,
                                                  int* iterations = nullptr) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (iterations) *iterations = 0;
  if (rhs_norm == 0.0) return x;

  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd q = apply(p);
    const double step = rr / p.dot(q);
    x += step * p;
    r -= step * q;
    const double rr_next = r.squaredNorm();
    if (iterations) *iterations = it;
    if (std::sqrt(rr_next) <= tolerance * rhs_norm) return x;
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return std::nullopt;
}

}  // namespace flowsymm
