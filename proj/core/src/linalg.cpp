#include "flowsymm/linalg.hpp"

#include <Eigen/SVD>

namespace flowsymm {

int numerical_rank(const Eigen::VectorXd& singular_values, double tau) {
  if (singular_values.size() == 0) return 0;
  const double cutoff = tau * singular_values.maxCoeff();
  int rank = 0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    if (singular_values[i] > cutoff && singular_values[i] > 0.0) ++rank;
  }
  return rank;
}

Eigen::VectorXd min_norm_least_squares(const Eigen::MatrixXd& a,
                                       const Eigen::VectorXd& b, double tau) {
  if (a.cols() == 0) return Eigen::VectorXd(0);
  if (a.rows() == 0) return Eigen::VectorXd::Zero(a.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(tau);
  return svd.solve(b);
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& a, double tau) {
  if (a.size() == 0) return Eigen::MatrixXd::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const int rank = numerical_rank(sigma, tau);
  const Eigen::MatrixXd v = svd.matrixV().leftCols(rank);
  const Eigen::MatrixXd u = svd.matrixU().leftCols(rank);
  return v * sigma.head(rank).cwiseInverse().asDiagonal() * u.transpose();
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& a, double tau) {
  const Eigen::Index cols = a.cols();
  if (a.rows() == 0) return Eigen::MatrixXd::Identity(cols, cols);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const int rank = numerical_rank(svd.singularValues(), tau);
  return svd.matrixV().rightCols(cols - rank);
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace flowsymm
