#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsymm/baselines.hpp"
#include "flowsymm/dataset.hpp"
#include "flowsymm/metrics.hpp"
#include "flowsymm/train.hpp"

namespace flowsymm {

enum class Method { kFlowSymm, kMinDiv, kMlp, kPnp, kNoAttention, kNoBilevel };

const char* method_name(Method method);
Method method_from_string(const std::string& name);
std::vector<Method> all_methods();

struct ExperimentConfig {
  TrainConfig train;  // k, inner folds, seed, solver, epochs, jobs
  int outer_folds = 10;
  std::vector<double> lambda_grid = default_lambda_grid();
  MlpConfig mlp;
  std::vector<Method> methods = all_methods();
};

/// Everything needed to fit on one visible mask and predict the rest.
struct Task {
  TrainingData data;
  std::vector<FoldProblem> folds;  // inner validation folds over visible edges
  FoldProblem target;              // full visible mask, no validation set
};

/// Builds the task for the flows visible under `visible`. The inner fold
/// count is clamped to the number of visible edges.
Task prepare_task(const FlowGraph& graph, const Eigen::VectorXd& flows,
                  const Eigen::VectorXd& injections, const Mask& visible,
                  const TrainConfig& config);

struct MethodRun {
  std::string method;
  int k = 0;
  Eigen::VectorXd f_tilde;
  std::map<std::string, double> hyperparameters;
  std::optional<TrainState> training;  // FlowSymm only
  Eigen::VectorXd alpha;               // attention weights, FlowSymm variants
  std::vector<std::string> warnings;
};

MethodRun run_method(Method method, const Task& task, const ExperimentConfig& config);

/// Held-out test block of one outer split.
struct Split {
  int index = 0;
  Mask visible;
  std::vector<int> test_edges;
};

/// K outer folds over the observed edges: each split hides one block.
std::vector<Split> outer_splits(const Mask& observed, int folds, std::uint64_t seed);

/// Runs the configured methods on one visible mask and scores the test edges
/// against `reference`. Rows carry fold = split_index.
std::vector<FoldMetrics> evaluate_holdout(const FlowGraph& graph, const Eigen::VectorXd& flows,
                                          const Eigen::VectorXd& injections, const Mask& visible,
                                          const std::vector<int>& test_edges,
                                          const Eigen::VectorXd& reference,
                                          const ExperimentConfig& config, int split_index = 0,
                                          std::vector<MethodRun>* runs = nullptr);

/// Outer K-fold protocol over the dataset's observed edges, scored against
/// the flow column.
MetricsReport evaluate(const Dataset& dataset, const ExperimentConfig& config);

struct AblationConfig {
  std::vector<int> basis_sizes{64, 128, 256, 512};
};

/// Per split: FlowSymm at every basis size, plus the no-attention and
/// no-bilevel variants at config.train.k. One row per (variant, k, fold).
MetricsReport ablate(const Dataset& dataset, const ExperimentConfig& config,
                     const AblationConfig& ablation = {});

struct SensitivityRow {
  double rho = 0.0;
  double anchor_norm = 0.0;  // ||f0||_2
  double action_norm = 0.0;  // ||Delta||_2
  Metrics metrics;
  double divergence_residual = 0.0;  // against the perturbed injections
};

std::vector<double> default_noise_levels();

/// c' = c + rho std(c) xi with one shared standard-normal draw xi (so the
/// levels are nested), then inference with a fixed model. Delta never reads c.
std::vector<SensitivityRow> sensitivity_experiment(const ModelParams& model,
                                                   const TrainingData& data,
                                                   const std::vector<int>& test_edges,
                                                   const Eigen::VectorXd& test_truth,
                                                   const std::vector<double>& noise_levels,
                                                   std::uint64_t seed,
                                                   const TrainConfig& config);

/// Trains on the observed edges and reports the table for the unobserved ones
/// scored against the flow column.
std::vector<SensitivityRow> sensitivity(const Dataset& dataset, const ExperimentConfig& config,
                                        const std::vector<double>& noise_levels);

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

}  // namespace flowsymm
