#include "flowsymm/train.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <thread>

#include "flowsymm/errors.hpp"

namespace flowsymm {

std::vector<std::vector<int>> make_folds(int m, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("need at least 2 folds");
  if (folds > m) {
    throw ConfigError("cannot split " + std::to_string(m) + " edges into " +
                      std::to_string(folds) + " folds");
  }
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<int>> out(static_cast<std::size_t>(folds));
  const int base = m / folds;
  const int extra = m % folds;
  int cursor = 0;
  for (int k = 0; k < folds; ++k) {
    const int size = base + (k < extra ? 1 : 0);
    out[k].assign(order.begin() + cursor, order.begin() + cursor + size);
    cursor += size;
  }
  return out;
}

std::vector<FoldSpec> make_fold_specs(const Observation& obs, int folds, std::uint64_t seed) {
  std::vector<int> pool;
  for (std::size_t e = 0; e < obs.observed_mask.size(); ++e) {
    if (obs.observed_mask[e]) pool.push_back(static_cast<int>(e));
  }
  const auto blocks = make_folds(static_cast<int>(pool.size()), folds, seed);
  std::vector<FoldSpec> specs;
  specs.reserve(blocks.size());
  for (const auto& block : blocks) {
    FoldSpec spec;
    for (int idx : block) spec.validation_edges.push_back(pool[idx]);
    std::sort(spec.validation_edges.begin(), spec.validation_edges.end());
    spec.observed_mask = obs.observed_mask;
    spec.truth.resize(static_cast<Eigen::Index>(spec.validation_edges.size()));
    for (std::size_t j = 0; j < spec.validation_edges.size(); ++j) {
      const int e = spec.validation_edges[j];
      spec.observed_mask[e] = false;
      spec.truth[static_cast<Eigen::Index>(j)] = obs.f_hat[e];
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

TrainingData TrainingData::from(FlowGraph graph, Observation observation) {
  graph.validate();
  observation.validate(graph.node_count, graph.edge_count());
  TrainingData data;
  data.lines = line_graph(graph);
  data.incidence = build_incidence(graph);
  data.graph = std::move(graph);
  data.observation = std::move(observation);
  return data;
}

FoldProblem prepare_inference(const TrainingData& data, const Mask& observed, int k,
                              SignConvention sign) {
  FoldProblem problem;
  problem.system = IncidenceSystem(data.incidence, observed);
  problem.observation =
      Observation::from_flows(data.observation.f_hat, data.observation.injections, observed);
  problem.c_hat = empirical_imbalance(problem.system, problem.observation);
  problem.anchor = compute_anchor(problem.system, problem.observation);
  problem.admissible = build_projectors(problem.system).admissible;
  problem.basis = build_basis(problem.admissible, k, sign);
  problem.truth.resize(0);
  return problem;
}

FoldProblem prepare_fold(const TrainingData& data, const FoldSpec& fold, int k,
                         SignConvention sign) {
  FoldProblem problem = prepare_inference(data, fold.observed_mask, k, sign);
  for (int e : fold.validation_edges) {
    const int pos = problem.system.missing_position(e);
    if (pos < 0) throw StructuralError("validation edge is not hidden by the fold mask");
    problem.validation_positions.push_back(pos);
  }
  problem.truth = fold.truth;
  return problem;
}

Eigen::VectorXd ModelParams::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  flat.head(flat.size() - 1) = encoder.flatten();
  flat[flat.size() - 1] = log_lambda;
  return flat;
}

void ModelParams::assign_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw StructuralError("flat parameter length mismatch");
  encoder.assign_flat(flat.head(flat.size() - 1));
  log_lambda = flat[flat.size() - 1];
}

namespace {

PipelineOutput forward(const FoldProblem& problem, const Eigen::MatrixXd& embeddings,
                       const EncoderParams& encoder, TikhonovSystem& op) {
  PipelineOutput out;
  out.attention =
      select_action(embeddings, problem.basis, encoder, problem.system, problem.anchor.f0);
  const IncidenceSystem& sys = problem.system;
  if (sys.degenerate()) {
    out.refinement.lambda = op.lambda();
    out.refinement.solver = op.kind();
    out.refinement.delta_tik.resize(0);
    out.refinement.f_tilde = out.attention.f_cand;
    return out;
  }
  out.refinement = tikhonov_solve(op, sys, sys.gather_observed(out.attention.f_cand),
                                  problem.c_hat, out.attention.delta_attn);
  out.refinement.f_tilde = assemble_prediction(
      out.attention.f_cand, out.refinement.delta_tik, out.attention.delta_attn, sys);
  return out;
}

Eigen::VectorXd validation_residual(const FoldProblem& problem, const Eigen::VectorXd& delta) {
  Eigen::VectorXd r(problem.truth.size());
  for (Eigen::Index j = 0; j < r.size(); ++j) {
    r[j] = delta[problem.validation_positions[j]] - problem.truth[j];
  }
  return r;
}

struct FoldGradient {
  double loss = 0.0;
  double d_log_lambda = 0.0;
  SelectionGradient selection;
  int solves = 0;
  std::vector<std::string> warnings;
};

FoldGradient fold_gradient(const FoldProblem& problem, const Eigen::MatrixXd& embeddings,
                           const EncoderParams& encoder, double lambda, SolverKind solver) {
  FoldGradient out;
  const IncidenceSystem& sys = problem.system;
  TikhonovSystem op(sys, lambda, solver);
  const PipelineOutput fwd = forward(problem, embeddings, encoder, op);
  if (sys.degenerate() || problem.truth.size() == 0) {
    out.selection.basis_scores = Eigen::MatrixXd::Zero(encoder.shape.basis_slots,
                                                       encoder.shape.hidden_dim);
    out.selection.embeddings = Eigen::MatrixXd::Zero(sys.edge_count(), encoder.shape.hidden_dim);
    out.solves = op.solve_count();
    return out;
  }
  const Eigen::VectorXd& delta_tik = fwd.refinement.delta_tik;
  const Eigen::VectorXd& delta_attn = fwd.attention.delta_attn;
  const Eigen::VectorXd r = validation_residual(problem, delta_tik);
  out.loss = r.squaredNorm();

  // Adjoint: A w = S_val^T r, so that dL/db = 2 w.
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.missing_count());
  for (Eigen::Index j = 0; j < r.size(); ++j) rhs[problem.validation_positions[j]] += r[j];
  const Eigen::VectorXd w = adjoint_solve(op, rhs);

  // b = lambda delta_attn - B_miss^T (B_obs f_cand_obs - c_hat), A = G + lambda I.
  const double d_lambda = 2.0 * w.dot(delta_attn - delta_tik);
  out.d_log_lambda = lambda * d_lambda;
  const Eigen::VectorXd grad_delta_attn = 2.0 * lambda * w;

  // f_cand_obs = f_hat_obs + U_obs alpha; U_obs vanishes up to rounding but
  // the term is kept so the gradient is that of the computed map.
  Eigen::VectorXd grad_alpha;
  if (!problem.basis.empty()) {
    const Eigen::VectorXd grad_obs = -2.0 * (sys.observed_incidence().transpose() *
                                             (sys.missing_incidence() * w));
    grad_alpha = Eigen::VectorXd::Zero(problem.basis.size());
    const auto observed = sys.observed_edges();
    for (int j = 0; j < sys.observed_count(); ++j) {
      grad_alpha += grad_obs[j] * problem.basis.vectors.row(observed[j]).transpose();
    }
  }
  out.selection = select_action_backward(fwd.attention, embeddings, problem.basis, encoder, sys,
                                         grad_alpha, grad_delta_attn);
  out.solves = op.solve_count();
  out.warnings = op.warnings();
  return out;
}

}  // namespace

PipelineOutput run_pipeline(const FoldProblem& problem, const Eigen::MatrixXd& embeddings,
                            const EncoderParams& encoder, double lambda, SolverKind solver) {
  TikhonovSystem op(problem.system, lambda, solver);
  return forward(problem, embeddings, encoder, op);
}

PipelineOutput infer(const FoldProblem& problem, const TrainingData& data,
                     const ModelParams& params, SolverKind solver) {
  const Encoding enc = encode(params.encoder, data.lines, data.graph.features);
  return run_pipeline(problem, enc.embeddings, params.encoder, params.lambda(), solver);
}

Prediction predict(const TrainingData& data, const Mask& observed, const ModelParams& params,
                   SolverKind solver, SignConvention sign) {
  Prediction out;
  out.problem = prepare_inference(data, observed, std::max(params.encoder.shape.basis_slots, 1), sign);
  out.encoding = encode(params.encoder, data.lines, data.graph.features);
  out.output = run_pipeline(out.problem, out.encoding.embeddings, params.encoder,
                            params.lambda(), solver);
  return out;
}

double outer_loss(const std::vector<FoldProblem>& folds, const TrainingData& data,
                  const ModelParams& params, SolverKind solver) {
  if (folds.empty()) throw ConfigError("outer loss needs at least one fold");
  const Encoding enc = encode(params.encoder, data.lines, data.graph.features);
  double total = 0.0;
  for (const FoldProblem& fold : folds) {
    if (fold.system.degenerate() || fold.truth.size() == 0) continue;
    const PipelineOutput out =
        run_pipeline(fold, enc.embeddings, params.encoder, params.lambda(), solver);
    total += validation_residual(fold, out.refinement.delta_tik).squaredNorm();
  }
  return total / static_cast<double>(folds.size());
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(jobs, count);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

HyperGradient hypergradient(const std::vector<FoldProblem>& folds, const TrainingData& data,
                            const ModelParams& params, SolverKind solver, int jobs) {
  if (folds.empty()) throw ConfigError("hyper-gradient needs at least one fold");
  const Encoding enc = encode(params.encoder, data.lines, data.graph.features);
  const double lambda = params.lambda();

  std::vector<FoldGradient> parts(folds.size());
  parallel_for(static_cast<int>(folds.size()), jobs, [&](int k) {
    parts[k] = fold_gradient(folds[k], enc.embeddings, params.encoder, lambda, solver);
  });

  const double scale = 1.0 / static_cast<double>(folds.size());
  HyperGradient out;
  Eigen::MatrixXd grad_h = Eigen::MatrixXd::Zero(enc.embeddings.rows(), enc.embeddings.cols());
  Eigen::MatrixXd grad_scores =
      Eigen::MatrixXd::Zero(params.encoder.shape.basis_slots, params.encoder.shape.hidden_dim);
  double grad_log_lambda = 0.0;
  for (const FoldGradient& part : parts) {
    out.loss += part.loss;
    out.fold_losses.push_back(part.loss);
    out.solve_counts.push_back(part.solves);
    grad_log_lambda += part.d_log_lambda;
    grad_h += part.selection.embeddings;
    grad_scores += part.selection.basis_scores;
    out.warnings.insert(out.warnings.end(), part.warnings.begin(), part.warnings.end());
  }
  out.loss *= scale;

  out.gradient.encoder = encode_backward(params.encoder, data.lines, enc.trace, grad_h * scale);
  out.gradient.encoder.basis_scores = grad_scores * scale;
  out.gradient.log_lambda = grad_log_lambda * scale;
  return out;
}

Adam::Adam(Eigen::Index size, double lr, double beta1, double beta2, double eps)
    : lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) {
    throw StructuralError("Adam: parameter size changed");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void TrainConfig::validate() const {
  if (k < 1) throw ConfigError("basis size k must be at least 1");
  if (folds < 2) throw ConfigError("need at least 2 folds");
  if (hidden_dim < 1 || heads < 1) throw ConfigError("encoder width must be positive");
  if (!(lambda_init > 0.0) || !std::isfinite(lambda_init)) {
    throw ConfigError("lambda_init must be positive and finite");
  }
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

ModelParams initial_params(const TrainingData& data, const TrainConfig& config) {
  EncoderShape shape;
  shape.input_dim = data.graph.feature_dim();
  shape.hidden_dim = config.hidden_dim;
  shape.heads = config.heads;
  shape.basis_slots = config.k;
  ModelParams params;
  params.encoder = EncoderParams::initialize(shape, config.seed);
  params.log_lambda = std::log(config.lambda_init);
  return params;
}

std::vector<FoldProblem> prepare_folds(const TrainingData& data, const TrainConfig& config) {
  const auto specs = make_fold_specs(data.observation, config.folds, config.seed);
  std::vector<FoldProblem> folds(specs.size());
  parallel_for(static_cast<int>(specs.size()), config.jobs, [&](int k) {
    folds[k] = prepare_fold(data, specs[k], config.k, config.sign);
  });
  return folds;
}

TrainState train(const TrainingData& data, const TrainConfig& config) {
  config.validate();
  return train(data, prepare_folds(data, config), config);
}

TrainState train(const TrainingData& data, const std::vector<FoldProblem>& folds,
                 const TrainConfig& config) {
  config.validate();
  TrainState state;
  ModelParams current = initial_params(data, config);
  Eigen::VectorXd flat = current.flatten();
  Adam adam(flat.size(), config.learning_rate, config.beta1, config.beta2, config.epsilon);
  state.params = current;

  for (int epoch = 0;; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double evaluated_lambda = current.lambda();
    const HyperGradient hg = hypergradient(folds, data, current, config.solver, config.jobs);
    if (!std::isfinite(hg.loss)) {
      throw NumericalError("validation loss became non-finite at epoch " +
                           std::to_string(epoch) + " (lambda = " +
                           std::to_string(current.lambda()) + ")");
    }
    const Eigen::VectorXd grad = hg.gradient.flatten();
    if (!grad.allFinite()) {
      throw NumericalError("hyper-gradient became non-finite at epoch " + std::to_string(epoch));
    }
    state.warnings.insert(state.warnings.end(), hg.warnings.begin(), hg.warnings.end());
    state.epoch = epoch;
    state.loss_history.push_back(hg.loss);

    if (hg.loss < state.best_val) {
      state.best_val = hg.loss;
      state.best_epoch = epoch;
      state.params = current;
      state.patience_counter = 0;
    } else {
      ++state.patience_counter;
    }

    bool stop = false;
    if (state.patience_counter >= config.patience) {
      state.stopped_early = epoch < config.max_epochs;
      stop = true;
    } else if (epoch >= config.max_epochs) {
      stop = true;
    } else {
      adam.step(flat, grad);
      current.assign_flat(flat);
    }
    const auto stop_time = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    record.loss = hg.loss;
    record.lambda = evaluated_lambda;
    record.grad_norm = grad.norm();
    record.wall_seconds = std::chrono::duration<double>(stop_time - start).count();
    state.records.push_back(record);
    if (stop) break;
  }
  state.last = current;
  state.adam_m = adam.first_moment();
  state.adam_v = adam.second_moment();
  return state;
}

}  // namespace flowsymm
