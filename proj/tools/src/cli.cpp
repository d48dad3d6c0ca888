#include "flowsymm_cli/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flowsymm/checkpoint.hpp"
#include "flowsymm/dataset.hpp"
#include "flowsymm/errors.hpp"
#include "flowsymm/experiment.hpp"
#include "flowsymm/synth.hpp"
#include "flowsymm/train.hpp"

namespace flowsymm::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int jobs = 1;
};

struct ModelOptions {
  std::string data;
  int k = kDefaultBasisSize;
  int folds = 10;
  std::string solver = "dense";
  double lambda_init = 1.0;
  int max_epochs = 10;
  int patience = 10;
  double learning_rate = 1e-2;
  std::string sign = "positive-sum";
  bool timing = false;
};

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out-dir", common.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--jobs", common.jobs, "Worker threads for fold-level work")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_model(CLI::App* cmd, ModelOptions& model) {
  cmd->add_option("--data", model.data, "Dataset directory")->required();
  cmd->add_option("--k", model.k, "Basis size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--folds", model.folds, "Number of folds")
      ->check(CLI::Range(2, 1 << 20))
      ->capture_default_str();
  cmd->add_option("--solver", model.solver, "Tikhonov solver")
      ->check(CLI::IsMember({"dense", "cg"}))
      ->capture_default_str();
  cmd->add_option("--lambda-init", model.lambda_init, "Initial Tikhonov weight")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-epochs", model.max_epochs, "Maximum training epochs")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--patience", model.patience, "Early-stopping patience")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--lr", model.learning_rate, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--sign", model.sign, "Basis orientation rule")
      ->check(CLI::IsMember({"positive-sum", "first-nonzero"}))
      ->capture_default_str();
}

TrainConfig train_config(const CommonOptions& common, const ModelOptions& model) {
  TrainConfig tc;
  tc.k = model.k;
  tc.folds = model.folds;
  tc.solver = solver_kind_from_string(model.solver);
  tc.lambda_init = model.lambda_init;
  tc.max_epochs = model.max_epochs;
  tc.patience = model.patience;
  tc.learning_rate = model.learning_rate;
  tc.sign = model.sign == "first-nonzero" ? SignConvention::kFirstNonzero
                                          : SignConvention::kPositiveSum;
  tc.seed = common.seed;
  tc.jobs = common.jobs;
  tc.validate();
  return tc;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out(const CommonOptions& common) {
  const fs::path dir(common.out_dir);
  fs::create_directories(dir);
  return dir;
}

int cmd_generate(const CommonOptions& common, SynthConfig cfg, const std::string& name,
                 std::ostream& out) {
  cfg.seed = common.seed;
  const SynthInstance inst = generate(cfg);
  const fs::path dir = prepare_out(common);
  save_dataset(inst.to_dataset(name), dir);
  out << "wrote " << inst.graph.edge_count() << " edges, " << inst.graph.node_count
      << " nodes to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const CommonOptions& common, const ModelOptions& model, std::ostream& out) {
  const TrainConfig tc = train_config(common, model);
  const Dataset ds = load_dataset(model.data);
  const Task task = prepare_task(ds.graph, ds.flows, ds.injections, ds.observed, tc);
  TrainConfig inner = tc;
  inner.folds = static_cast<int>(task.folds.size());
  const TrainState state = train(task.data, task.folds, inner);

  const fs::path dir = prepare_out(common);
  save_checkpoint(state.params, dir / "checkpoint.txt");
  std::string log = "epoch,loss,lambda,grad_norm\n";
  std::string timing = "epoch,wall_seconds\n";
  for (const EpochRecord& r : state.records) {
    log += std::to_string(r.epoch) + "," + num(r.loss) + "," + num(r.lambda) + "," +
           num(r.grad_norm) + "\n";
    timing += std::to_string(r.epoch) + "," + num(r.wall_seconds) + "\n";
  }
  write_text(dir / "epoch_log.csv", log);
  if (model.timing) write_text(dir / "epoch_timing.csv", timing);
  out << "best epoch " << state.best_epoch << ", validation loss " << state.best_val
      << ", lambda " << state.params.lambda() << "\n";
  for (const auto& w : state.warnings) out << "warning: " << w << "\n";
  return 0;
}

int cmd_predict(const CommonOptions& common, const std::string& data,
                const std::string& checkpoint, const std::string& solver, const std::string& sign,
                std::ostream& out) {
  const Dataset ds = load_dataset(data);
  const ModelParams params = load_checkpoint(checkpoint);
  if (params.encoder.shape.input_dim != ds.graph.feature_dim()) {
    throw ConfigError("checkpoint expects " + std::to_string(params.encoder.shape.input_dim) +
                      " features but the dataset has " + std::to_string(ds.graph.feature_dim()));
  }
  const TrainingData td = TrainingData::from(ds.graph, ds.observation());
  const Prediction pred =
      predict(td, ds.observed, params, solver_kind_from_string(solver),
              sign == "first-nonzero" ? SignConvention::kFirstNonzero
                                      : SignConvention::kPositiveSum);

  const fs::path dir = prepare_out(common);
  std::string csv = "edge_id,observed,f0,action,f_tilde\n";
  for (int e = 0; e < ds.graph.edge_count(); ++e) {
    csv += std::to_string(e) + "," + (ds.observed[e] ? "1" : "0") + "," +
           num(pred.problem.anchor.f0[e]) + "," + num(pred.output.attention.action[e]) + "," +
           num(pred.f_tilde()[e]) + "\n";
  }
  write_text(dir / "predictions.csv", csv);
  std::string attn = "basis_index,alpha\n";
  const Eigen::VectorXd& alpha = pred.output.attention.alpha;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    attn += std::to_string(i) + "," + num(alpha[i]) + "\n";
  }
  write_text(dir / "attention.csv", attn);
  out << "predicted " << ds.graph.edge_count() - count_true(ds.observed)
      << " missing edges with " << alpha.size() << " basis vectors\n";
  return 0;
}

std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(method_from_string(item));
  }
  if (out.empty()) throw ConfigError("no methods selected");
  return out;
}

void print_summary(const MetricsReport& report, std::ostream& out) {
  for (const auto& name : report.methods()) {
    const MethodSummary s = report.summary(name);
    out << name << ": rmse " << s.rmse.mean << " +- " << s.rmse.stddev << ", mae " << s.mae.mean
        << " +- " << s.mae.stddev << "\n";
  }
}

int cmd_evaluate(const CommonOptions& common, const ModelOptions& model,
                 const std::string& methods, std::ostream& out) {
  ExperimentConfig cfg;
  cfg.train = train_config(common, model);
  cfg.outer_folds = model.folds;
  cfg.methods = parse_methods(methods);
  const MetricsReport report = evaluate(load_dataset(model.data), cfg);
  const fs::path dir = prepare_out(common);
  write_text(dir / "metrics.csv", report.to_csv());
  write_text(dir / "metrics.json", report.to_json().dump(2) + "\n");
  print_summary(report, out);
  return 0;
}

int cmd_ablate(const CommonOptions& common, const ModelOptions& model, const std::vector<int>& ks,
               std::ostream& out) {
  ExperimentConfig cfg;
  cfg.train = train_config(common, model);
  cfg.outer_folds = model.folds;
  AblationConfig ab;
  ab.basis_sizes = ks;
  const MetricsReport report = ablate(load_dataset(model.data), cfg, ab);
  const fs::path dir = prepare_out(common);
  write_text(dir / "ablation.csv", report.to_csv());
  write_text(dir / "ablation.json", report.to_json().dump(2) + "\n");
  print_summary(report, out);
  return 0;
}

int cmd_sensitivity(const CommonOptions& common, const ModelOptions& model,
                    const std::vector<double>& levels, std::ostream& out) {
  ExperimentConfig cfg;
  cfg.train = train_config(common, model);
  const auto rows = sensitivity(load_dataset(model.data), cfg, levels);
  const fs::path dir = prepare_out(common);
  write_text(dir / "sensitivity.csv", sensitivity_csv(rows));
  for (const auto& r : rows) {
    out << "rho " << r.rho << ": |f0| " << r.anchor_norm << ", |Delta| " << r.action_norm
        << ", rmse " << r.metrics.rmse << "\n";
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Flow completion under conservation laws"};
  app.name("flowsymm");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonOptions common;
  ModelOptions model;

  SynthConfig synth;
  std::string name = "synthetic";
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  add_common(gen, common);
  gen->add_option("--n", synth.n, "Nodes")->capture_default_str();
  gen->add_option("--extra-edges", synth.extra_edges, "Chords beyond the spanning tree")
      ->capture_default_str();
  gen->add_option("--feature-dim", synth.feature_dim, "Features per edge")->capture_default_str();
  gen->add_option("--observed-fraction", synth.observed_fraction, "Share of sensed edges")
      ->capture_default_str();
  gen->add_option("--obs-noise", synth.obs_noise_std, "Sensor noise std")->capture_default_str();
  gen->add_option("--informativeness", synth.feature_informativeness,
                  "Feature informativeness in [0,1]")
      ->capture_default_str();
  gen->add_option("--injection-scale", synth.injection_scale, "Std of nodal injections")
      ->capture_default_str();
  gen->add_option("--circulation-scale", synth.circulation_scale, "Mean circulation strength")
      ->capture_default_str();
  gen->add_option("--name", name, "Dataset name")->capture_default_str();

  auto* trn = app.add_subcommand("train", "Train the model and write a checkpoint");
  add_common(trn, common);
  add_model(trn, model);
  trn->add_flag("--timing", model.timing, "Also write per-epoch wall time");

  std::string checkpoint;
  auto* prd = app.add_subcommand("predict", "Complete the missing flows with a checkpoint");
  add_common(prd, common);
  prd->add_option("--data", model.data, "Dataset directory")->required();
  prd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  prd->add_option("--solver", model.solver, "Tikhonov solver")
      ->check(CLI::IsMember({"dense", "cg"}))
      ->capture_default_str();
  prd->add_option("--sign", model.sign, "Basis orientation rule")
      ->check(CLI::IsMember({"positive-sum", "first-nonzero"}))
      ->capture_default_str();

  std::string methods = "flowsymm,min_div,mlp,pnp,no_attention,no_bilevel";
  auto* evl = app.add_subcommand("evaluate", "K-fold comparison of methods");
  add_common(evl, common);
  add_model(evl, model);
  evl->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();

  std::vector<int> ks{64, 128, 256, 512};
  auto* abl = app.add_subcommand("ablate", "Basis-size sweep and variants");
  add_common(abl, common);
  add_model(abl, model);
  abl->add_option("--ks", ks, "Basis sizes")->delimiter(',')->check(CLI::PositiveNumber);

  std::vector<double> levels = default_noise_levels();
  auto* sen = app.add_subcommand("sensitivity", "Injection-noise sensitivity table");
  add_common(sen, common);
  add_model(sen, model);
  sen->add_option("--levels", levels, "Relative noise levels")
      ->delimiter(',')
      ->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return cmd_generate(common, synth, name, out);
    if (*trn) return cmd_train(common, model, out);
    if (*prd) return cmd_predict(common, model.data, checkpoint, model.solver, model.sign, out);
    if (*evl) return cmd_evaluate(common, model, methods, out);
    if (*abl) return cmd_ablate(common, model, ks, out);
    if (*sen) return cmd_sensitivity(common, model, levels, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace flowsymm::cli
