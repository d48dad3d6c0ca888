#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsymm/encoder.hpp"
#include "flowsymm/graph.hpp"
#include "flowsymm/train.hpp"

namespace flowsymm {

struct BaselineResult {
  std::string method;
  Eigen::VectorXd f_tilde;
  std::map<std::string, double> hyperparameters;
  std::vector<std::string> warnings;
};

/// argmin ||B_miss d + B_obs f_hat_obs - c||^2 + lambda ||d||^2 as a full flow.
/// lambda = 0 goes through compute_anchor (minimum-norm least squares).
Eigen::VectorXd min_div_completion(const IncidenceSystem& system, const Observation& obs,
                                   double lambda);

/// Chooses lambda from the grid by mean validation RMSE over the folds
/// (first grid entry wins ties) and completes the target mask with it.
BaselineResult min_div(const FoldProblem& target, const std::vector<FoldProblem>& folds,
                       const std::vector<double>& lambda_grid);

/// Default grid: 0 and a log-spaced sweep.
std::vector<double> default_lambda_grid();

struct MlpConfig {
  std::vector<int> widths{4, 8, 16};
  std::vector<double> learning_rates{1.0, 1e-1, 1e-2, 1e-3};
  int max_iterations = 5000;
  int patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Two-layer ReLU regressor (ReLU after both layers, with biases) from edge
/// features to flows. Trains on edges with train_mask set, early-stops on a
/// seeded validation split of them, picks (width, lr) by validation MSE and
/// predicts every edge. Training edges keep their target value in f_tilde.
/// Constant targets short-circuit to a constant predictor.
BaselineResult feature_regressor(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                 const Mask& train_mask, const MlpConfig& config);

/// Delta = P_A z, f_tilde = f0 + Delta.
BaselineResult predict_then_project(const Eigen::VectorXd& z, const Eigen::MatrixXd& admissible,
                                    const Eigen::VectorXd& f0);

/// Encoder plus a linear read-out z_e = v . H_e.
struct PnpModel {
  EncoderParams encoder;
  Eigen::VectorXd head;

  Eigen::VectorXd scores(const TrainingData& data) const;
};

struct PnpTrainResult {
  PnpModel model;
  std::vector<double> loss_history;
};

/// Trains the encoder and read-out end to end through the projection: the
/// loss is the FlowSymm outer loss with f0 + P_A z in place of the refined
/// flow. Adam with the config's learning rate, epochs and patience; returns
/// the best snapshot.
PnpTrainResult train_pnp(const TrainingData& data, const std::vector<FoldProblem>& folds,
                         const TrainConfig& config);

/// Up to k directions P_A g_i for seeded standard-normal g_i, orthonormalized
/// by modified Gram-Schmidt; numerically dependent draws are dropped.
Eigen::MatrixXd random_admissible_directions(const Eigen::MatrixXd& admissible, int k,
                                             std::uint64_t seed);

/// sum_i u_i / sqrt(k) over the sampled directions (zero if none survive).
Eigen::VectorXd no_attention_direction(const Eigen::MatrixXd& admissible, int k,
                                       std::uint64_t seed);

/// Least-squares global weight over the folds' validation edges, then
/// f_tilde = f0 + w * direction on the target mask.
BaselineResult no_attention_variant(const FoldProblem& target,
                                    const std::vector<FoldProblem>& folds, int k,
                                    std::uint64_t seed);

}  // namespace flowsymm
