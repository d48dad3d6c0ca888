#include "flowsymm/anchor.hpp"

namespace flowsymm {

double balance_tolerance(const Eigen::VectorXd& injections) {
  return 1e-8 * (1.0 + injections.norm());
}

AnchorCompletion compute_anchor(const IncidenceSystem& system, const Observation& obs,
                                double tau) {
  const Eigen::VectorXd rhs = obs.injections - empirical_imbalance(system, obs);

  AnchorCompletion anchor;
  anchor.delta0 = min_norm_least_squares(system.missing_incidence(), rhs, tau);
  anchor.f0 = system.with_missing(obs.f_hat, anchor.delta0);
  anchor.residual_norm = (system.missing_incidence() * anchor.delta0 - rhs).norm();
  anchor.consistent = anchor.residual_norm <= balance_tolerance(obs.injections);
  return anchor;
}

}  // namespace flowsymm
