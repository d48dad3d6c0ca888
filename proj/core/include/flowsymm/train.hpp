#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsymm/anchor.hpp"
#include "flowsymm/encoder.hpp"
#include "flowsymm/graph.hpp"
#include "flowsymm/refine.hpp"
#include "flowsymm/symmetry.hpp"

namespace flowsymm {

/// Seeded shuffle of 0..m-1 cut into K contiguous blocks; the first m mod K
/// blocks hold one extra element. Throws ConfigError unless 2 <= K <= m.
std::vector<std::vector<int>> make_folds(int m, int folds, std::uint64_t seed);

/// One hold-out fold: validation edges are hidden on top of the base mask.
struct FoldSpec {
  std::vector<int> validation_edges;  // ascending edge ids
  Mask observed_mask;                 // base mask with validation edges removed
  Eigen::VectorXd truth;              // g_true, one entry per validation edge
};

/// Splits the observed edges of obs into K folds. Truth on a validation edge
/// is the sensor reading f_hat_e.
std::vector<FoldSpec> make_fold_specs(const Observation& obs, int folds, std::uint64_t seed);

/// Everything the pipeline needs that does not depend on a mask.
struct TrainingData {
  FlowGraph graph;
  LineGraph lines;
  Eigen::MatrixXd incidence;
  Observation observation;  // base sensors

  static TrainingData from(FlowGraph graph, Observation observation);
};

/// Mask-dependent pieces of the pipeline, computed once per fold.
struct FoldProblem {
  IncidenceSystem system;
  Observation observation;
  Eigen::VectorXd c_hat;
  AnchorCompletion anchor;
  Eigen::MatrixXd admissible;  // P_A for this mask
  GroupActionBasis basis;
  std::vector<int> validation_positions;  // indices into the missing list
  Eigen::VectorXd truth;
};

FoldProblem prepare_fold(const TrainingData& data, const FoldSpec& fold, int k,
                         SignConvention sign = SignConvention::kPositiveSum);

/// Pipeline pieces for an arbitrary mask without a validation set.
FoldProblem prepare_inference(const TrainingData& data, const Mask& observed, int k,
                              SignConvention sign = SignConvention::kPositiveSum);

struct ModelParams {
  EncoderParams encoder;
  double log_lambda = 0.0;

  double lambda() const { return std::exp(log_lambda); }
  Eigen::Index parameter_count() const { return encoder.parameter_count() + 1; }
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);
};

/// Forward pass of one fold for already-computed embeddings.
struct PipelineOutput {
  AttentionState attention;
  Refinement refinement;  // f_tilde filled
};

PipelineOutput run_pipeline(const FoldProblem& problem, const Eigen::MatrixXd& embeddings,
                            const EncoderParams& encoder, double lambda,
                            SolverKind solver = SolverKind::kDenseCholesky);

struct Prediction {
  FoldProblem problem;
  Encoding encoding;
  PipelineOutput output;

  const Eigen::VectorXd& f_tilde() const { return output.refinement.f_tilde; }
};

/// Full inference under the given mask.
Prediction predict(const TrainingData& data, const Mask& observed, const ModelParams& params,
                   SolverKind solver = SolverKind::kDenseCholesky,
                   SignConvention sign = SignConvention::kPositiveSum);

/// Inference on an already prepared mask.
PipelineOutput infer(const FoldProblem& problem, const TrainingData& data,
                     const ModelParams& params, SolverKind solver = SolverKind::kDenseCholesky);

/// L_val = (1/K) sum_k ||S_val (delta_tik - g_true)||^2.
double outer_loss(const std::vector<FoldProblem>& folds, const TrainingData& data,
                  const ModelParams& params, SolverKind solver = SolverKind::kDenseCholesky);

struct HyperGradient {
  double loss = 0.0;
  ModelParams gradient;        // same layout as the parameters
  std::vector<int> solve_counts;  // SPD solves per fold
  std::vector<double> fold_losses;
  std::vector<std::string> warnings;
};

/// Loss and exact gradient w.r.t. (encoder, log lambda). Each fold performs
/// one forward and one adjoint solve with a shared factorization; the
/// embeddings are computed once and the encoder is differentiated once with
/// the fold contributions summed. jobs > 1 evaluates folds concurrently; the
/// reduction order is fixed so results do not depend on jobs.
HyperGradient hypergradient(const std::vector<FoldProblem>& folds, const TrainingData& data,
                            const ModelParams& params,
                            SolverKind solver = SolverKind::kDenseCholesky, int jobs = 1);

/// Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  explicit Adam(Eigen::Index size, double lr = 1e-2, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  int steps() const noexcept { return t_; }
  const Eigen::VectorXd& first_moment() const noexcept { return m_; }
  const Eigen::VectorXd& second_moment() const noexcept { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

struct TrainConfig {
  int k = kDefaultBasisSize;
  int folds = 10;
  int hidden_dim = 16;
  int heads = 4;
  SignConvention sign = SignConvention::kPositiveSum;
  SolverKind solver = SolverKind::kDenseCholesky;
  double lambda_init = 1.0;
  int max_epochs = 10;
  int patience = 10;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double lambda = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
};

struct TrainState {
  ModelParams params;  // best-validation snapshot
  ModelParams last;    // parameters after the final evaluated epoch
  Eigen::VectorXd adam_m;
  Eigen::VectorXd adam_v;
  int epoch = 0;  // last evaluated epoch
  int best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int patience_counter = 0;
  bool stopped_early = false;
  std::vector<double> loss_history;
  std::vector<EpochRecord> records;
  std::vector<std::string> warnings;
};

/// Initial parameters: Glorot encoder from config.seed, log lambda_init.
ModelParams initial_params(const TrainingData& data, const TrainConfig& config);

std::vector<FoldProblem> prepare_folds(const TrainingData& data, const TrainConfig& config);

/// Adam on the hyper-gradient with early stopping on L_val. Epoch 0 evaluates
/// the initial parameters; each later epoch follows one optimizer step.
/// Throws NumericalError on a non-finite loss.
TrainState train(const TrainingData& data, const TrainConfig& config);
TrainState train(const TrainingData& data, const std::vector<FoldProblem>& folds,
                 const TrainConfig& config);

/// Runs fn(i) for i in [0, count) on up to jobs threads.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace flowsymm
