#include "flowsymm/refine.hpp"

#include <cmath>

#include "flowsymm/errors.hpp"

namespace flowsymm {

const char* to_string(SolverKind kind) {
  return kind == SolverKind::kDenseCholesky ? "dense" : "cg";
}

SolverKind solver_kind_from_string(const std::string& name) {
  if (name == "dense") return SolverKind::kDenseCholesky;
  if (name == "cg") return SolverKind::kConjugateGradient;
  throw ConfigError("unknown solver '" + name + "' (expected dense or cg)");
}

TikhonovSystem::TikhonovSystem(const IncidenceSystem& system, double lambda, SolverKind kind,
                               CgOptions cg)
    : system_(&system),
      size_(system.missing_count()),
      lambda_(lambda),
      kind_(kind),
      cg_(cg) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("Tikhonov weight lambda must be positive and finite");
  }
  if (cg_.max_iterations <= 0) cg_.max_iterations = 10 * std::max(size_, 1);
  if (kind_ == SolverKind::kConjugateGradient) {
    b_miss_sparse_ = system.sparse_missing_incidence();
  }
}

Eigen::MatrixXd TikhonovSystem::dense_matrix() const {
  const Eigen::MatrixXd& b = system_->missing_incidence();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(size_, size_);
  a.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  a.diagonal().array() += lambda_;
  return a;
}

Eigen::VectorXd TikhonovSystem::apply(const Eigen::VectorXd& v) const {
  if (kind_ == SolverKind::kConjugateGradient) {
    return b_miss_sparse_.transpose() * (b_miss_sparse_ * v) + lambda_ * v;
  }
  const Eigen::MatrixXd& b = system_->missing_incidence();
  return b.transpose() * (b * v) + lambda_ * v;
}

const Eigen::LLT<Eigen::MatrixXd>& TikhonovSystem::factor() {
  if (!llt_) {
    llt_.emplace(dense_matrix());
    if (llt_->info() != Eigen::Success) {
      throw NumericalError("Cholesky factorization of the Tikhonov system failed");
    }
  }
  return *llt_;
}

Eigen::VectorXd TikhonovSystem::solve(const Eigen::VectorXd& rhs) {
  if (rhs.size() != size_) throw StructuralError("Tikhonov rhs length mismatch");
  ++solves_;
  last_cg_iterations_ = 0;
  if (size_ == 0) return Eigen::VectorXd(0);
  if (kind_ == SolverKind::kConjugateGradient) {
    int iterations = 0;
    auto x = conjugate_gradient([this](const Eigen::VectorXd& v) { return apply(v); }, rhs,
                                cg_.tolerance, cg_.max_iterations, &iterations);
    last_cg_iterations_ = iterations;
    if (x) return *x;
    warnings_.push_back("conjugate gradient did not converge in " +
                        std::to_string(cg_.max_iterations) +
                        " iterations; fell back to dense Cholesky");
  }
  return factor().solve(rhs);
}

Eigen::VectorXd tikhonov_rhs(const IncidenceSystem& system, const Eigen::VectorXd& f_cand_obs,
                             const Eigen::VectorXd& c_hat, const Eigen::VectorXd& delta_attn,
                             double lambda) {
  if (f_cand_obs.size() != system.observed_count() || c_hat.size() != system.node_count() ||
      delta_attn.size() != system.missing_count()) {
    throw StructuralError("Tikhonov inputs have inconsistent shapes");
  }
  const Eigen::VectorXd divergence = system.observed_incidence() * f_cand_obs - c_hat;
  return lambda * delta_attn - system.missing_incidence().transpose() * divergence;
}

Refinement tikhonov_solve(TikhonovSystem& op, const IncidenceSystem& system,
                          const Eigen::VectorXd& f_cand_obs, const Eigen::VectorXd& c_hat,
                          const Eigen::VectorXd& delta_attn) {
  const std::size_t warnings_before = op.warnings().size();
  Refinement out;
  out.lambda = op.lambda();
  out.solver = op.kind();
  out.delta_tik = op.solve(tikhonov_rhs(system, f_cand_obs, c_hat, delta_attn, op.lambda()));
  out.cg_iterations = op.last_cg_iterations();
  out.warnings.assign(op.warnings().begin() + static_cast<std::ptrdiff_t>(warnings_before),
                      op.warnings().end());
  return out;
}

Refinement tikhonov_solve(const IncidenceSystem& system, const Eigen::VectorXd& f_cand_obs,
                          const Eigen::VectorXd& c_hat, const Eigen::VectorXd& delta_attn,
                          double lambda, SolverKind solver) {
  TikhonovSystem op(system, lambda, solver);
  return tikhonov_solve(op, system, f_cand_obs, c_hat, delta_attn);
}

Eigen::VectorXd assemble_prediction(const Eigen::VectorXd& f_cand,
                                    const Eigen::VectorXd& delta_tik,
                                    const Eigen::VectorXd& delta_attn,
                                    const IncidenceSystem& system) {
  if (delta_tik.size() != system.missing_count() || delta_attn.size() != system.missing_count()) {
    throw StructuralError("assemble_prediction: shape mismatch");
  }
  Eigen::VectorXd out = f_cand;
  const auto missing = system.missing_edges();
  for (int j = 0; j < system.missing_count(); ++j) {
    out[missing[j]] = f_cand[missing[j]] + (delta_tik[j] - delta_attn[j]);
  }
  return out;
}

Eigen::VectorXd adjoint_solve(TikhonovSystem& op, const Eigen::VectorXd& rhs) {
  return op.solve(rhs);
}

Eigen::VectorXd adjoint_solve(const IncidenceSystem& system, double lambda,
                              const Eigen::VectorXd& rhs, SolverKind solver) {
  TikhonovSystem op(system, lambda, solver);
  return op.solve(rhs);
}

}  // namespace flowsymm
