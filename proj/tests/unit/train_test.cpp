#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "flowsymm/errors.hpp"
#include "flowsymm/train.hpp"

namespace flowsymm {
namespace {

TEST(MakeFolds, ExactSplit) {
  const auto folds = make_folds(4, 2, 1);
  ASSERT_EQ(folds.size(), 2u);
  EXPECT_EQ(folds[0].size(), 2u);
  EXPECT_EQ(folds[1].size(), 2u);
  std::set<int> all(folds[0].begin(), folds[0].end());
  all.insert(folds[1].begin(), folds[1].end());
  EXPECT_EQ(all, (std::set<int>{0, 1, 2, 3}));
}

TEST(MakeFolds, DeterministicAndSized) {
  EXPECT_EQ(make_folds(17, 4, 5), make_folds(17, 4, 5));
  EXPECT_NE(make_folds(17, 4, 5), make_folds(17, 4, 6));
  const auto folds = make_folds(10, 3, 0);
  EXPECT_EQ(folds[0].size(), 4u);
  EXPECT_EQ(folds[1].size(), 3u);
  EXPECT_EQ(folds[2].size(), 3u);
}

TEST(MakeFolds, RejectsTooManyFolds) {
  EXPECT_THROW(make_folds(3, 4, 0), ConfigError);
  EXPECT_THROW(make_folds(3, 1, 0), ConfigError);
}

TEST(MakeFoldSpecs, HideOnlyObservedEdges) {
  const SynthInstance inst = generate(testing::small_config(2, 15, 8, 0.5));
  const Observation obs = inst.observation();
  const auto specs = make_fold_specs(obs, 3, 9);
  std::set<int> seen;
  for (const FoldSpec& spec : specs) {
    EXPECT_TRUE(std::is_sorted(spec.validation_edges.begin(), spec.validation_edges.end()));
    for (std::size_t j = 0; j < spec.validation_edges.size(); ++j) {
      const int e = spec.validation_edges[j];
      EXPECT_TRUE(obs.observed_mask[e]);
      EXPECT_FALSE(spec.observed_mask[e]);
      EXPECT_EQ(spec.truth[j], obs.f_hat[e]);
      EXPECT_TRUE(seen.insert(e).second);
    }
    EXPECT_EQ(count_true(spec.observed_mask),
              count_true(obs.observed_mask) - static_cast<int>(spec.validation_edges.size()));
  }
  EXPECT_EQ(static_cast<int>(seen.size()), count_true(obs.observed_mask));
}

TrainConfig tiny_config(int k = 16) {
  TrainConfig c;
  c.k = k;
  c.folds = 3;
  c.hidden_dim = 4;
  c.heads = 2;
  c.seed = 5;
  return c;
}

struct Instance {
  SynthInstance inst;
  TrainingData data;
  Instance(std::uint64_t seed, int n, int extra, double observed = 0.5)
      : inst(generate(testing::small_config(seed, n, extra, observed))),
        data(TrainingData::from(inst.graph, inst.observation())) {}
};

TEST(OuterLoss, ZeroWhenValidationMatchesRefinement) {
  // Tree graph, noiseless: every fold's refinement at huge lambda reproduces
  // the anchor, which is exact because the completion is unique.
  Instance in(1, 10, 0, 0.7);
  TrainConfig cfg = tiny_config();
  cfg.lambda_init = 1e12;
  const auto folds = prepare_folds(in.data, cfg);
  const ModelParams params = initial_params(in.data, cfg);
  EXPECT_LE(outer_loss(folds, in.data, params), 1e-18);
}

TEST(OuterLoss, SingleEdgeArithmetic) {
  // Fully sensed triangle carrying the unit circulation; the fold hides e2.
  // The anchor fills it with 1, the basis is empty, and lambda = 2 shrinks
  // the refinement to 0.5, so the loss is (0.5 - 1)^2.
  const FlowGraph g = testing::triangle(2);
  const Observation obs = Observation::from_flows(Eigen::Vector3d(1, 1, 1), Eigen::Vector3d::Zero(),
                                                  testing::mask_from({1, 1, 1}));
  const TrainingData data = TrainingData::from(g, obs);
  FoldSpec spec;
  spec.validation_edges = {2};
  spec.observed_mask = testing::mask_from({1, 1, 0});
  spec.truth = Eigen::VectorXd::Constant(1, 1.0);
  const FoldProblem fold = prepare_fold(data, spec, 1);
  ASSERT_TRUE(fold.basis.empty());
  ModelParams params;
  params.encoder = EncoderParams::initialize({2, 4, 2, 1}, 0);
  params.log_lambda = std::log(2.0);
  EXPECT_NEAR(infer(fold, data, params).refinement.delta_tik[0], 0.5, 1e-15);
  EXPECT_NEAR(outer_loss({fold}, data, params), 0.25, 1e-15);
}

TEST(Hypergradient, ZeroAtZeroLoss) {
  Instance in(1, 10, 0, 0.7);
  TrainConfig cfg = tiny_config();
  cfg.lambda_init = 1e12;
  const auto folds = prepare_folds(in.data, cfg);
  const HyperGradient hg = hypergradient(folds, in.data, initial_params(in.data, cfg));
  EXPECT_LE(hg.loss, 1e-18);
  EXPECT_LE(hg.gradient.flatten().norm(), 1e-7);
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

TEST(Hypergradient, LogLambdaMatchesFiniteDifference) {
  Instance in(4, 5, 3, 0.6);  // 7 edges
  TrainConfig cfg = tiny_config(4);
  const auto folds = prepare_folds(in.data, cfg);
  ModelParams p = initial_params(in.data, cfg);
  p.log_lambda = 0.3;
  const HyperGradient hg = hypergradient(folds, in.data, p);
  const double h = 1e-5;
  ModelParams up = p, down = p;
  up.log_lambda += h;
  down.log_lambda -= h;
  const double fd = (outer_loss(folds, in.data, up) - outer_loss(folds, in.data, down)) / (2 * h);
  ASSERT_GT(std::abs(fd), 1e-8);
  EXPECT_LE(relative_error(hg.gradient.log_lambda, fd), 1e-4);
  EXPECT_NEAR(hg.loss, outer_loss(folds, in.data, p), 1e-14);
}

TEST(Hypergradient, EveryParameterMatchesFiniteDifference) {
  Instance in(6, 6, 3, 0.6);  // 8 edges
  TrainConfig cfg = tiny_config(4);
  const auto folds = prepare_folds(in.data, cfg);
  ModelParams p = initial_params(in.data, cfg);
  p.log_lambda = -0.2;
  const HyperGradient hg = hypergradient(folds, in.data, p);
  const Eigen::VectorXd analytic = hg.gradient.flatten();
  const Eigen::VectorXd theta = p.flatten();
  Eigen::VectorXd numeric(theta.size());
  ModelParams probe = p;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd t = theta;
    t[i] += h;
    probe.assign_flat(t);
    const double a = outer_loss(folds, in.data, probe);
    t[i] -= 2 * h;
    probe.assign_flat(t);
    numeric[i] = (a - outer_loss(folds, in.data, probe)) / (2 * h);
  }
  ASSERT_GT(analytic.norm(), 0.0);
  EXPECT_LE((analytic - numeric).norm() / analytic.norm(), 1e-4);
}

TEST(Hypergradient, TwoSolvesPerFold) {
  Instance in(3, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.folds = 4;
  const auto folds = prepare_folds(in.data, cfg);
  for (SolverKind kind : {SolverKind::kDenseCholesky, SolverKind::kConjugateGradient}) {
    const HyperGradient hg = hypergradient(folds, in.data, initial_params(in.data, cfg), kind);
    ASSERT_EQ(hg.solve_counts.size(), 4u);
    for (int c : hg.solve_counts) EXPECT_EQ(c, 2);
  }
}

TEST(Hypergradient, IndependentOfJobs) {
  Instance in(3, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.folds = 4;
  const auto folds = prepare_folds(in.data, cfg);
  const ModelParams p = initial_params(in.data, cfg);
  const HyperGradient one = hypergradient(folds, in.data, p, SolverKind::kDenseCholesky, 1);
  const HyperGradient four = hypergradient(folds, in.data, p, SolverKind::kDenseCholesky, 4);
  EXPECT_EQ(one.loss, four.loss);
  EXPECT_EQ(one.gradient.flatten(), four.gradient.flatten());
}

TEST(Hypergradient, FoldOrderDoesNotChangeTheGradient) {
  Instance in(8, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.folds = 4;
  auto folds = prepare_folds(in.data, cfg);
  const ModelParams p = initial_params(in.data, cfg);
  const HyperGradient a = hypergradient(folds, in.data, p);
  std::reverse(folds.begin(), folds.end());
  const HyperGradient b = hypergradient(folds, in.data, p);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  EXPECT_LE((a.gradient.flatten() - b.gradient.flatten()).norm(),
            1e-12 * (1.0 + a.gradient.flatten().norm()));
}

TEST(Pipeline, ManifoldPreservedForRandomParameters) {
  Instance in(9, 16, 10, 0.4);
  TrainConfig cfg = tiny_config();
  for (std::uint64_t s = 0; s < 5; ++s) {
    cfg.seed = 100 + s;
    const ModelParams p = initial_params(in.data, cfg);
    const Prediction pred = predict(in.data, in.inst.observed, p);
    const Eigen::VectorXd& f_cand = pred.output.attention.f_cand;
    EXPECT_LE((in.data.incidence * f_cand - in.inst.injections).norm(),
              1e-8 * (1 + in.inst.injections.norm()));
    for (int e : pred.problem.system.observed_edges()) {
      EXPECT_EQ(f_cand[e], in.data.observation.f_hat[e]);
      EXPECT_EQ(pred.f_tilde()[e], in.data.observation.f_hat[e]);
    }
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam(2, 0.1);
  Eigen::VectorXd x(2);
  x << 1.0, -1.0;
  adam.step(x, Eigen::Vector2d(3.0, -0.5));
  EXPECT_NEAR(x[0], 0.9, 1e-8);
  EXPECT_NEAR(x[1], -0.9, 1e-8);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda_init = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.folds = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, DeterministicLossHistory) {
  Instance in(2, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 4;
  const TrainState a = train(in.data, cfg);
  const TrainState b = train(in.data, cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.params.flatten(), b.params.flatten());
  EXPECT_EQ(a.loss_history.size(), 5u);  // epoch 0 plus one per step
}

TEST(Train, ReturnsBestSnapshot) {
  Instance in(2, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 6;
  const TrainState s = train(in.data, cfg);
  const auto best = std::min_element(s.loss_history.begin(), s.loss_history.end());
  EXPECT_EQ(s.best_val, *best);
  EXPECT_EQ(s.best_epoch, best - s.loss_history.begin());
  const auto folds = prepare_folds(in.data, cfg);
  EXPECT_NEAR(outer_loss(folds, in.data, s.params), s.best_val, 1e-14);
}

TEST(Train, PatienceStopsEarly) {
  Instance in(2, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 200;
  cfg.patience = 1;
  cfg.learning_rate = 5.0;  // overshoots, so the loss stops improving quickly
  const TrainState s = train(in.data, cfg);
  EXPECT_TRUE(s.stopped_early);
  EXPECT_LT(s.epoch, cfg.max_epochs);
  EXPECT_EQ(s.epoch - s.best_epoch, cfg.patience);
}

TEST(Train, ZeroEpochsEvaluatesInitialParameters) {
  Instance in(2, 14, 8);
  TrainConfig cfg = tiny_config();
  cfg.max_epochs = 0;
  const TrainState s = train(in.data, cfg);
  EXPECT_EQ(s.loss_history.size(), 1u);
  EXPECT_EQ(s.params.flatten(), initial_params(in.data, cfg).flatten());
}

TEST(Train, ProgressOnInformativeInstances) {
  // The last evaluated loss should not exceed the initial one on at least
  // 90% of instances.
  int improved = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    SynthConfig sc = testing::small_config(500 + seed, 16, 10, 0.5);
    sc.feature_informativeness = 0.9;
    const SynthInstance inst = generate(sc);
    const TrainingData data = TrainingData::from(inst.graph, inst.observation());
    TrainConfig cfg = tiny_config(16);
    cfg.max_epochs = 10;
    const TrainState s = train(data, cfg);
    if (s.loss_history.back() <= s.loss_history.front()) ++improved;
  }
  EXPECT_GE(improved, 18);
}

}  // namespace
}  // namespace flowsymm
