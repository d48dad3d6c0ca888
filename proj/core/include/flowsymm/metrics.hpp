#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace flowsymm {

/// Error metrics on a set of held-out edges. corr is empty when either vector
/// has zero population variance.
struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> corr;
  std::size_t count = 0;
};

Metrics compute_metrics(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth);

/// ||B f - c||_2.
double divergence_residual(const Eigen::MatrixXd& incidence, const Eigen::VectorXd& flow,
                           const Eigen::VectorXd& injections);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // population, 0 for a single value
  int count = 0;
};

Summary summarize(const std::vector<double>& values);

/// One (method, fold) row.
struct FoldMetrics {
  std::string method;
  int k = 0;  // basis size where it applies, 0 otherwise
  int fold = 0;
  Metrics metrics;
  double divergence_residual = 0.0;
};

/// Per-fold rows plus per-method mean and std. Undefined correlations are
/// skipped in the corr mean and counted in undefined_corr.
struct MethodSummary {
  std::string method;
  Summary rmse;
  Summary mae;
  Summary corr;
  Summary divergence_residual;
  int undefined_corr = 0;
};

struct MetricsReport {
  std::vector<FoldMetrics> rows;

  std::vector<std::string> methods() const;  // first-appearance order
  MethodSummary summary(const std::string& method) const;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

}  // namespace flowsymm
