#include "flowsymm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "flowsymm/errors.hpp"

namespace flowsymm {

const char* method_name(Method method) {
  switch (method) {
    case Method::kFlowSymm: return "flowsymm";
    case Method::kMinDiv: return "min_div";
    case Method::kMlp: return "mlp";
    case Method::kPnp: return "pnp";
    case Method::kNoAttention: return "no_attention";
    case Method::kNoBilevel: return "no_bilevel";
  }
  return "unknown";
}

std::vector<Method> all_methods() {
  return {Method::kFlowSymm, Method::kMinDiv,      Method::kMlp,
          Method::kPnp,      Method::kNoAttention, Method::kNoBilevel};
}

Method method_from_string(const std::string& name) {
  for (Method m : all_methods()) {
    if (name == method_name(m)) return m;
  }
  throw ConfigError("unknown method '" + name + "'");
}

Task prepare_task(const FlowGraph& graph, const Eigen::VectorXd& flows,
                  const Eigen::VectorXd& injections, const Mask& visible,
                  const TrainConfig& config) {
  Task task;
  task.data = TrainingData::from(graph, Observation::from_flows(flows, injections, visible));
  const int visible_count = count_true(visible);
  if (visible_count < 2) {
    throw ConfigError("need at least 2 visible edges to build validation folds");
  }
  TrainConfig inner = config;
  inner.folds = std::min(config.folds, visible_count);
  task.folds = prepare_folds(task.data, inner);
  task.target = prepare_inference(task.data, visible, config.k, config.sign);
  return task;
}

MethodRun run_method(Method method, const Task& task, const ExperimentConfig& config) {
  MethodRun run;
  run.method = method_name(method);
  const TrainConfig& tc = config.train;
  TrainConfig inner = tc;
  inner.folds = static_cast<int>(task.folds.size());

  switch (method) {
    case Method::kFlowSymm:
    case Method::kNoBilevel: {
      run.k = tc.k;
      ModelParams params;
      if (method == Method::kFlowSymm) {
        run.training = train(task.data, task.folds, inner);
        params = run.training->params;
        run.hyperparameters["best_epoch"] = run.training->best_epoch;
        run.hyperparameters["best_val"] = run.training->best_val;
        run.warnings = run.training->warnings;
      } else {
        params = initial_params(task.data, inner);
      }
      const PipelineOutput out = infer(task.target, task.data, params, tc.solver);
      run.f_tilde = out.refinement.f_tilde;
      run.alpha = out.attention.alpha;
      run.hyperparameters["lambda"] = params.lambda();
      run.hyperparameters["basis_size"] = task.target.basis.size();
      run.warnings.insert(run.warnings.end(), out.refinement.warnings.begin(),
                          out.refinement.warnings.end());
      break;
    }
    case Method::kMinDiv: {
      BaselineResult r = min_div(task.target, task.folds, config.lambda_grid);
      run.f_tilde = std::move(r.f_tilde);
      run.hyperparameters = std::move(r.hyperparameters);
      run.warnings = std::move(r.warnings);
      break;
    }
    case Method::kMlp: {
      MlpConfig mc = config.mlp;
      mc.seed = tc.seed;
      BaselineResult r = feature_regressor(task.data.graph.features, task.data.observation.f_hat,
                                           task.data.observation.observed_mask, mc);
      run.f_tilde = std::move(r.f_tilde);
      run.hyperparameters = std::move(r.hyperparameters);
      break;
    }
    case Method::kPnp: {
      const PnpTrainResult fit = train_pnp(task.data, task.folds, inner);
      BaselineResult r = predict_then_project(fit.model.scores(task.data), task.target.admissible,
                                              task.target.anchor.f0);
      run.f_tilde = std::move(r.f_tilde);
      run.hyperparameters["train_loss"] =
          *std::min_element(fit.loss_history.begin(), fit.loss_history.end());
      break;
    }
    case Method::kNoAttention: {
      run.k = tc.k;
      BaselineResult r = no_attention_variant(task.target, task.folds, tc.k, tc.seed);
      run.f_tilde = std::move(r.f_tilde);
      run.hyperparameters = std::move(r.hyperparameters);
      run.warnings = std::move(r.warnings);
      break;
    }
  }
  if (!run.f_tilde.allFinite()) {
    throw NumericalError(run.method + " produced a non-finite prediction");
  }
  return run;
}

std::vector<Split> outer_splits(const Mask& observed, int folds, std::uint64_t seed) {
  std::vector<int> pool;
  for (std::size_t e = 0; e < observed.size(); ++e) {
    if (observed[e]) pool.push_back(static_cast<int>(e));
  }
  const auto blocks = make_folds(static_cast<int>(pool.size()), folds, seed);
  std::vector<Split> splits;
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    Split split;
    split.index = static_cast<int>(s);
    split.visible = observed;
    for (int idx : blocks[s]) {
      split.test_edges.push_back(pool[idx]);
      split.visible[pool[idx]] = false;
    }
    std::sort(split.test_edges.begin(), split.test_edges.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

namespace {

FoldMetrics score(const std::string& method, int k, int fold, const Eigen::VectorXd& f_tilde,
                  const std::vector<int>& test_edges, const Eigen::VectorXd& reference,
                  const Eigen::MatrixXd& incidence, const Eigen::VectorXd& injections) {
  Eigen::VectorXd pred(static_cast<Eigen::Index>(test_edges.size()));
  Eigen::VectorXd truth(pred.size());
  for (std::size_t j = 0; j < test_edges.size(); ++j) {
    pred[static_cast<Eigen::Index>(j)] = f_tilde[test_edges[j]];
    truth[static_cast<Eigen::Index>(j)] = reference[test_edges[j]];
  }
  FoldMetrics row;
  row.method = method;
  row.k = k;
  row.fold = fold;
  row.metrics = compute_metrics(pred, truth);
  row.divergence_residual = divergence_residual(incidence, f_tilde, injections);
  return row;
}

// Outer split seeds are decorrelated from the inner fold seed.
std::uint64_t split_seed(std::uint64_t seed) { return seed ^ 0x5851f42d4c957f2dULL; }

}  // namespace

std::vector<FoldMetrics> evaluate_holdout(const FlowGraph& graph, const Eigen::VectorXd& flows,
                                          const Eigen::VectorXd& injections, const Mask& visible,
                                          const std::vector<int>& test_edges,
                                          const Eigen::VectorXd& reference,
                                          const ExperimentConfig& config, int split_index,
                                          std::vector<MethodRun>* runs) {
  if (test_edges.empty()) throw ConfigError("no test edges to score");
  const Task task = prepare_task(graph, flows, injections, visible, config.train);
  std::vector<FoldMetrics> rows;
  for (Method method : config.methods) {
    MethodRun run = run_method(method, task, config);
    rows.push_back(score(run.method, run.k, split_index, run.f_tilde, test_edges, reference,
                         task.data.incidence, injections));
    if (runs) runs->push_back(std::move(run));
  }
  return rows;
}

MetricsReport evaluate(const Dataset& dataset, const ExperimentConfig& config) {
  dataset.validate();
  const int pool = count_true(dataset.observed);
  const int folds = std::min(config.outer_folds, pool);
  MetricsReport report;
  for (const Split& split : outer_splits(dataset.observed, folds, split_seed(config.train.seed))) {
    auto rows = evaluate_holdout(dataset.graph, dataset.flows, dataset.injections, split.visible,
                                 split.test_edges, dataset.flows, config, split.index);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  return report;
}

MetricsReport ablate(const Dataset& dataset, const ExperimentConfig& config,
                     const AblationConfig& ablation) {
  dataset.validate();
  const int pool = count_true(dataset.observed);
  const int folds = std::min(config.outer_folds, pool);
  MetricsReport report;
  for (const Split& split : outer_splits(dataset.observed, folds, split_seed(config.train.seed))) {
    for (int k : ablation.basis_sizes) {
      ExperimentConfig variant = config;
      variant.train.k = k;
      const Task task = prepare_task(dataset.graph, dataset.flows, dataset.injections,
                                     split.visible, variant.train);
      const MethodRun run = run_method(Method::kFlowSymm, task, variant);
      report.rows.push_back(score("flowsymm", k, split.index, run.f_tilde, split.test_edges,
                                  dataset.flows, task.data.incidence, dataset.injections));
    }
    const Task task = prepare_task(dataset.graph, dataset.flows, dataset.injections, split.visible,
                                   config.train);
    for (Method method : {Method::kNoAttention, Method::kNoBilevel}) {
      const MethodRun run = run_method(method, task, config);
      report.rows.push_back(score(run.method, config.train.k, split.index, run.f_tilde,
                                  split.test_edges, dataset.flows, task.data.incidence,
                                  dataset.injections));
    }
  }
  return report;
}

std::vector<double> default_noise_levels() { return {0.0, 0.15, 0.35, 0.50}; }

std::vector<SensitivityRow> sensitivity_experiment(const ModelParams& model,
                                                   const TrainingData& data,
                                                   const std::vector<int>& test_edges,
                                                   const Eigen::VectorXd& test_truth,
                                                   const std::vector<double>& noise_levels,
                                                   std::uint64_t seed,
                                                   const TrainConfig& config) {
  if (static_cast<Eigen::Index>(test_edges.size()) != test_truth.size() || test_edges.empty()) {
    throw StructuralError("sensitivity: test edges and truth must match and be non-empty");
  }
  const Eigen::VectorXd& c = data.observation.injections;
  const double std_c = std::sqrt((c.array() - c.mean()).square().mean());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(c.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = normal(rng);

  // The mask-dependent pieces (basis, embeddings) do not change with c.
  FoldProblem problem = prepare_inference(data, data.observation.observed_mask,
                                          std::max(model.encoder.shape.basis_slots, 1),
                                          config.sign);
  const Encoding enc = encode(model.encoder, data.lines, data.graph.features);

  std::vector<SensitivityRow> rows;
  for (double rho : noise_levels) {
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("noise levels must be >= 0");
    Observation obs = problem.observation;
    obs.injections = rho == 0.0 ? c : Eigen::VectorXd(c + rho * std_c * xi);
    FoldProblem noisy = problem;
    noisy.observation = obs;
    noisy.anchor = compute_anchor(noisy.system, obs);
    const PipelineOutput out =
        run_pipeline(noisy, enc.embeddings, model.encoder, model.lambda(), config.solver);

    Eigen::VectorXd pred(test_truth.size());
    for (std::size_t j = 0; j < test_edges.size(); ++j) {
      pred[static_cast<Eigen::Index>(j)] = out.refinement.f_tilde[test_edges[j]];
    }
    SensitivityRow row;
    row.rho = rho;
    row.anchor_norm = noisy.anchor.f0.norm();
    row.action_norm = out.attention.action.norm();
    row.metrics = compute_metrics(pred, test_truth);
    row.divergence_residual = divergence_residual(data.incidence, out.refinement.f_tilde, obs.injections);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SensitivityRow> sensitivity(const Dataset& dataset, const ExperimentConfig& config,
                                        const std::vector<double>& noise_levels) {
  dataset.validate();
  const Task task = prepare_task(dataset.graph, dataset.flows, dataset.injections,
                                 dataset.observed, config.train);
  TrainConfig inner = config.train;
  inner.folds = static_cast<int>(task.folds.size());
  const TrainState state = train(task.data, task.folds, inner);

  std::vector<int> test_edges;
  for (std::size_t e = 0; e < dataset.observed.size(); ++e) {
    if (!dataset.observed[e]) test_edges.push_back(static_cast<int>(e));
  }
  if (test_edges.empty()) throw ConfigError("sensitivity needs unobserved edges to score");
  Eigen::VectorXd truth(static_cast<Eigen::Index>(test_edges.size()));
  for (std::size_t j = 0; j < test_edges.size(); ++j) {
    truth[static_cast<Eigen::Index>(j)] = dataset.flows[test_edges[j]];
  }
  return sensitivity_experiment(state.params, task.data, test_edges, truth, noise_levels,
                                config.train.seed, config.train);
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
  std::string out = "rho,anchor_norm,action_norm,rmse,mae,corr,divergence_residual\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,", r.rho, r.anchor_norm,
                  r.action_norm, r.metrics.rmse, r.metrics.mae);
    out += buf;
    if (r.metrics.corr) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.metrics.corr);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", r.divergence_residual);
    out += buf;
  }
  return out;
}

}  // namespace flowsymm
