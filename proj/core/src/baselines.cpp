#include "flowsymm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "flowsymm/anchor.hpp"
#include "flowsymm/errors.hpp"

namespace flowsymm {

Eigen::VectorXd min_div_completion(const IncidenceSystem& system, const Observation& obs,
                                   double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("Min-Div lambda must be finite and >= 0");
  }
  if (lambda == 0.0) return compute_anchor(system, obs).f0;
  const Eigen::MatrixXd& b = system.missing_incidence();
  const Eigen::VectorXd rhs = b.transpose() * (obs.injections - empirical_imbalance(system, obs));
  Eigen::MatrixXd a = b.transpose() * b;
  a.diagonal().array() += lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("Min-Div Cholesky failed");
  return system.with_missing(obs.f_hat, llt.solve(rhs));
}

std::vector<double> default_lambda_grid() {
  return {0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
}

namespace {

double validation_rmse(const FoldProblem& fold, const Eigen::VectorXd& flow) {
  const auto missing = fold.system.missing_edges();
  double sq = 0.0;
  for (Eigen::Index j = 0; j < fold.truth.size(); ++j) {
    const double diff = flow[missing[fold.validation_positions[j]]] - fold.truth[j];
    sq += diff * diff;
  }
  return fold.truth.size() ? std::sqrt(sq / static_cast<double>(fold.truth.size())) : 0.0;
}

std::vector<int> validation_edges(const FoldProblem& fold) {
  std::vector<int> out;
  const auto missing = fold.system.missing_edges();
  for (int pos : fold.validation_positions) out.push_back(missing[pos]);
  return out;
}

}  // namespace

BaselineResult min_div(const FoldProblem& target, const std::vector<FoldProblem>& folds,
                       const std::vector<double>& lambda_grid) {
  if (lambda_grid.empty()) throw ConfigError("Min-Div needs a non-empty lambda grid");
  double best_lambda = lambda_grid.front();
  double best_score = std::numeric_limits<double>::infinity();
  BaselineResult out;
  out.method = "min_div";
  if (folds.empty() && lambda_grid.size() > 1) {
    out.warnings.push_back("no validation folds; using the first grid value");
  }
  if (!folds.empty()) {
    for (double lambda : lambda_grid) {
      double score = 0.0;
      for (const FoldProblem& fold : folds) {
        score += validation_rmse(fold, min_div_completion(fold.system, fold.observation, lambda));
      }
      score /= static_cast<double>(folds.size());
      if (score < best_score) {
        best_score = score;
        best_lambda = lambda;
      }
    }
    out.hyperparameters["validation_rmse"] = best_score;
  }
  out.hyperparameters["lambda"] = best_lambda;
  out.f_tilde = min_div_completion(target.system, target.observation, best_lambda);
  return out;
}

void MlpConfig::validate() const {
  if (widths.empty() || learning_rates.empty()) throw ConfigError("MLP grid must be non-empty");
  for (int w : widths) {
    if (w < 1) throw ConfigError("MLP hidden width must be at least 1");
  }
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("MLP learning rates must be positive");
  }
  if (max_iterations < 1 || patience < 1) throw ConfigError("MLP iterations and patience must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
}

namespace {

struct Mlp {
  Eigen::MatrixXd w1;  // width x d
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;  // width
  double b2 = 0.0;

  // Rows of x are samples.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd hidden = ((x * w1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
    return ((hidden * w2).array() + b2).cwiseMax(0.0).matrix();
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd flat(w1.size() + b1.size() + w2.size() + 1);
    flat << Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size()), b1, w2, b2;
    return flat;
  }

  void assign(const Eigen::VectorXd& flat) {
    Eigen::Index at = 0;
    w1 = Eigen::Map<const Eigen::MatrixXd>(flat.data(), w1.rows(), w1.cols());
    at += w1.size();
    b1 = flat.segment(at, b1.size());
    at += b1.size();
    w2 = flat.segment(at, w2.size());
    at += w2.size();
    b2 = flat[at];
  }

  // Gradient of the mean squared error.
  Eigen::VectorXd gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd pre1 = (x * w1.transpose()).rowwise() + b1.transpose();
    const Eigen::MatrixXd hidden = pre1.cwiseMax(0.0);
    const Eigen::VectorXd pre2 = (hidden * w2).array() + b2;
    const Eigen::VectorXd out = pre2.cwiseMax(0.0);
    Eigen::VectorXd g_pre2 = 2.0 / n * (out - y);
    for (Eigen::Index i = 0; i < g_pre2.size(); ++i) {
      if (pre2[i] <= 0.0) g_pre2[i] = 0.0;
    }
    Mlp g;
    g.w2 = hidden.transpose() * g_pre2;
    g.b2 = g_pre2.sum();
    Eigen::MatrixXd g_pre1 = g_pre2 * w2.transpose();
    g_pre1 = (pre1.array() > 0.0).select(g_pre1, 0.0);
    g.w1 = g_pre1.transpose() * x;
    g.b1 = g_pre1.colwise().sum().transpose();
    return g.flatten();
  }
};

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Eigen::VectorXd entries_of(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace

BaselineResult feature_regressor(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                                 const Mask& train_mask, const MlpConfig& config) {
  config.validate();
  if (features.rows() != targets.size() ||
      static_cast<Eigen::Index>(train_mask.size()) != targets.size()) {
    throw StructuralError("feature_regressor: shape mismatch");
  }
  std::vector<int> train;
  for (std::size_t e = 0; e < train_mask.size(); ++e) {
    if (train_mask[e]) train.push_back(static_cast<int>(e));
  }
  if (train.empty()) throw ConfigError("feature_regressor needs at least one training edge");

  BaselineResult out;
  out.method = "mlp";
  const Eigen::VectorXd y_all = entries_of(targets, train);
  if (y_all.maxCoeff() == y_all.minCoeff()) {
    out.f_tilde = Eigen::VectorXd::Constant(targets.size(), y_all[0]);
    for (int e : train) out.f_tilde[e] = targets[e];
    out.hyperparameters["constant"] = y_all[0];
    return out;
  }

  std::mt19937_64 rng(config.seed);
  std::vector<int> shuffled = train;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  int n_val = 0;
  if (shuffled.size() >= 2) {
    n_val = std::max(1, static_cast<int>(std::lround(config.validation_fraction *
                                                     static_cast<double>(shuffled.size()))));
    n_val = std::min(n_val, static_cast<int>(shuffled.size()) - 1);
  }
  std::vector<int> val(shuffled.begin(), shuffled.begin() + n_val);
  std::vector<int> fit(shuffled.begin() + n_val, shuffled.end());
  if (val.empty()) val = fit;

  const Eigen::MatrixXd x_fit = rows_of(features, fit);
  const Eigen::VectorXd y_fit = entries_of(targets, fit);
  const Eigen::MatrixXd x_val = rows_of(features, val);
  const Eigen::VectorXd y_val = entries_of(targets, val);
  const int d = static_cast<int>(features.cols());

  Mlp best_model;
  double best_val = std::numeric_limits<double>::infinity();
  int best_width = 0;
  double best_lr = 0.0;
  std::uint64_t config_index = 0;
  for (int width : config.widths) {
    for (double lr : config.learning_rates) {
      std::mt19937_64 init_rng(config.seed + 1 + config_index++);
      const auto glorot = [&init_rng](Eigen::Index rows, Eigen::Index cols, double fan_in,
                                      double fan_out) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
          for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = limit * u(init_rng);
        }
        return w;
      };
      Mlp model;
      model.w1 = glorot(width, d, d, width);
      model.b1 = Eigen::VectorXd::Zero(width);
      model.w2 = glorot(width, 1, width, 1).col(0);
      model.b2 = y_fit.mean();

      Eigen::VectorXd flat = model.flatten();
      Adam adam(flat.size(), lr);
      Mlp run_best = model;
      double run_best_val = (model.predict(x_val) - y_val).squaredNorm() / y_val.size();
      int stale = 0;
      for (int it = 0; it < config.max_iterations; ++it) {
        const Eigen::VectorXd grad = model.gradient(x_fit, y_fit);
        if (!grad.allFinite()) break;
        adam.step(flat, grad);
        model.assign(flat);
        const double v = (model.predict(x_val) - y_val).squaredNorm() / y_val.size();
        if (!std::isfinite(v)) break;
        if (v < run_best_val) {
          run_best_val = v;
          run_best = model;
          stale = 0;
        } else if (++stale >= config.patience) {
          break;
        }
      }
      if (run_best_val < best_val) {
        best_val = run_best_val;
        best_model = run_best;
        best_width = width;
        best_lr = lr;
      }
    }
  }

  out.f_tilde = best_model.predict(features);
  for (int e : train) out.f_tilde[e] = targets[e];
  out.hyperparameters["width"] = best_width;
  out.hyperparameters["learning_rate"] = best_lr;
  out.hyperparameters["validation_mse"] = best_val;
  out.hyperparameters["train_mse"] =
      (best_model.predict(x_fit) - y_fit).squaredNorm() / static_cast<double>(y_fit.size());
  return out;
}

BaselineResult predict_then_project(const Eigen::VectorXd& z, const Eigen::MatrixXd& admissible,
                                    const Eigen::VectorXd& f0) {
  if (admissible.rows() != z.size() || admissible.cols() != z.size() || f0.size() != z.size()) {
    throw StructuralError("predict_then_project: shape mismatch");
  }
  BaselineResult out;
  out.method = "pnp";
  out.f_tilde = f0 + admissible * z;
  return out;
}

Eigen::VectorXd PnpModel::scores(const TrainingData& data) const {
  return encode(encoder, data.lines, data.graph.features).embeddings * head;
}

PnpTrainResult train_pnp(const TrainingData& data, const std::vector<FoldProblem>& folds,
                         const TrainConfig& config) {
  config.validate();
  if (folds.empty()) throw ConfigError("PnP training needs at least one fold");
  EncoderShape shape;
  shape.input_dim = data.graph.feature_dim();
  shape.hidden_dim = config.hidden_dim;
  shape.heads = config.heads;
  shape.basis_slots = 0;

  PnpModel model;
  model.encoder = EncoderParams::initialize(shape, config.seed);
  {
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double limit = std::sqrt(6.0 / (config.hidden_dim + 1.0));
    model.head.resize(config.hidden_dim);
    for (Eigen::Index i = 0; i < model.head.size(); ++i) model.head[i] = limit * u(rng);
  }

  const Eigen::Index enc_size = model.encoder.parameter_count();
  const auto flatten = [&](const PnpModel& mdl) {
    Eigen::VectorXd flat(enc_size + mdl.head.size());
    flat << mdl.encoder.flatten(), mdl.head;
    return flat;
  };
  Eigen::VectorXd flat = flatten(model);
  Adam adam(flat.size(), config.learning_rate, config.beta1, config.beta2, config.epsilon);

  PnpTrainResult result;
  result.model = model;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  const double scale = 1.0 / static_cast<double>(folds.size());
  for (int epoch = 0;; ++epoch) {
    const Encoding enc = encode(model.encoder, data.lines, data.graph.features);
    const Eigen::VectorXd z = enc.embeddings * model.head;
    Eigen::VectorXd grad_z = Eigen::VectorXd::Zero(z.size());
    double loss = 0.0;
    for (const FoldProblem& fold : folds) {
      // Prediction on the fold: f0 + P_A z, scored on its validation edges.
      const Eigen::VectorXd delta = fold.admissible * z;
      const auto edges = validation_edges(fold);
      Eigen::VectorXd residual = Eigen::VectorXd::Zero(z.size());
      for (std::size_t j = 0; j < edges.size(); ++j) {
        const int e = edges[j];
        const double r = fold.anchor.f0[e] + delta[e] - fold.truth[static_cast<Eigen::Index>(j)];
        loss += r * r;
        residual[e] = 2.0 * r;
      }
      grad_z += fold.admissible * residual;  // P_A is symmetric
    }
    loss *= scale;
    grad_z *= scale;
    if (!std::isfinite(loss)) throw NumericalError("PnP training loss became non-finite");
    result.loss_history.push_back(loss);
    if (loss < best) {
      best = loss;
      result.model = model;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
    if (epoch >= config.max_epochs) break;

    const Eigen::VectorXd grad_head = enc.embeddings.transpose() * grad_z;
    const Eigen::MatrixXd grad_h = grad_z * model.head.transpose();
    const EncoderParams grad_enc = encode_backward(model.encoder, data.lines, enc.trace, grad_h);
    Eigen::VectorXd grad(flat.size());
    grad << grad_enc.flatten(), grad_head;
    adam.step(flat, grad);
    model.encoder.assign_flat(flat.head(enc_size));
    model.head = flat.tail(model.head.size());
  }
  return result;
}

Eigen::MatrixXd random_admissible_directions(const Eigen::MatrixXd& admissible, int k,
                                             std::uint64_t seed) {
  if (k < 1) throw ConfigError("number of sampled directions must be >= 1");
  const Eigen::Index m = admissible.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd draws(m, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) draws(i, j) = normal(rng);
  }
  const Eigen::MatrixXd projected = admissible * draws;

  std::vector<Eigen::VectorXd> kept;
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::VectorXd v = projected.col(j);
    const double original = draws.col(j).norm();
    for (const auto& u : kept) v -= u.dot(v) * u;
    for (const auto& u : kept) v -= u.dot(v) * u;  // second pass for stability
    const double norm = v.norm();
    if (norm > 1e-8 * original) kept.push_back(v / norm);
  }
  Eigen::MatrixXd out(m, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = kept[j];
  return out;
}

Eigen::VectorXd no_attention_direction(const Eigen::MatrixXd& admissible, int k,
                                       std::uint64_t seed) {
  const Eigen::MatrixXd dirs = random_admissible_directions(admissible, k, seed);
  if (dirs.cols() == 0) return Eigen::VectorXd::Zero(admissible.rows());
  return dirs.rowwise().sum() / std::sqrt(static_cast<double>(dirs.cols()));
}

BaselineResult no_attention_variant(const FoldProblem& target,
                                    const std::vector<FoldProblem>& folds, int k,
                                    std::uint64_t seed) {
  double num = 0.0;
  double den = 0.0;
  for (const FoldProblem& fold : folds) {
    const Eigen::VectorXd dir = no_attention_direction(fold.admissible, k, seed);
    const auto edges = validation_edges(fold);
    for (std::size_t j = 0; j < edges.size(); ++j) {
      const int e = edges[j];
      num += dir[e] * (fold.truth[static_cast<Eigen::Index>(j)] - fold.anchor.f0[e]);
      den += dir[e] * dir[e];
    }
  }
  BaselineResult out;
  out.method = "no_attention";
  const double weight = den > 0.0 ? num / den : 0.0;
  const Eigen::VectorXd dir = no_attention_direction(target.admissible, k, seed);
  out.f_tilde = target.anchor.f0 + weight * dir;
  out.hyperparameters["weight"] = weight;
  out.hyperparameters["directions"] =
      static_cast<double>(random_admissible_directions(target.admissible, k, seed).cols());
  if (dir.isZero(0.0)) out.warnings.push_back("admissible space is empty; returning the anchor");
  return out;
}

}  // namespace flowsymm
