#include "flowsymm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "flowsymm/errors.hpp"

namespace flowsymm {

Metrics compute_metrics(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth) {
  if (prediction.size() != truth.size()) throw StructuralError("metric inputs differ in length");
  if (prediction.size() == 0) throw StructuralError("metrics need at least one value");
  const double n = static_cast<double>(truth.size());
  const Eigen::ArrayXd diff = (prediction - truth).array();

  Metrics out;
  out.count = static_cast<std::size_t>(truth.size());
  out.rmse = std::sqrt(diff.square().sum() / n);
  out.mae = diff.abs().sum() / n;

  const Eigen::ArrayXd p = prediction.array() - prediction.mean();
  const Eigen::ArrayXd t = truth.array() - truth.mean();
  const double sp = std::sqrt(p.square().sum() / n);
  const double st = std::sqrt(t.square().sum() / n);
  if (sp > 0.0 && st > 0.0) {
    const double cov = (p * t).sum() / n;
    out.corr = std::clamp(cov / (sp * st), -1.0, 1.0);
  }
  return out;
}

double divergence_residual(const Eigen::MatrixXd& incidence, const Eigen::VectorXd& flow,
                           const Eigen::VectorXd& injections) {
  if (incidence.cols() != flow.size() || incidence.rows() != injections.size()) {
    throw StructuralError("divergence_residual: shape mismatch");
  }
  return (incidence * flow - injections).norm();
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

std::vector<std::string> MetricsReport::methods() const {
  std::vector<std::string> out;
  for (const auto& row : rows) {
    if (std::find(out.begin(), out.end(), row.method) == out.end()) out.push_back(row.method);
  }
  return out;
}

MethodSummary MetricsReport::summary(const std::string& method) const {
  std::vector<double> rmse, mae, corr, div;
  MethodSummary out;
  out.method = method;
  for (const auto& row : rows) {
    if (row.method != method) continue;
    rmse.push_back(row.metrics.rmse);
    mae.push_back(row.metrics.mae);
    div.push_back(row.divergence_residual);
    if (row.metrics.corr) {
      corr.push_back(*row.metrics.corr);
    } else {
      ++out.undefined_corr;
    }
  }
  out.rmse = summarize(rmse);
  out.mae = summarize(mae);
  out.corr = summarize(corr);
  out.divergence_residual = summarize(div);
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string MetricsReport::to_csv() const {
  std::string out = "method,k,fold,count,rmse,mae,corr,corr_defined,divergence_residual\n";
  for (const auto& row : rows) {
    out += row.method + "," + std::to_string(row.k) + "," + std::to_string(row.fold) + "," +
           std::to_string(row.metrics.count) + "," + fmt(row.metrics.rmse) + "," +
           fmt(row.metrics.mae) + "," + (row.metrics.corr ? fmt(*row.metrics.corr) : "") + "," +
           (row.metrics.corr ? "1" : "0") + "," + fmt(row.divergence_residual) + "\n";
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  using nlohmann::json;
  const auto summary_json = [](const Summary& s) {
    return json{{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
  };
  json folds = json::array();
  for (const auto& row : rows) {
    folds.push_back({{"method", row.method},
                     {"k", row.k},
                     {"fold", row.fold},
                     {"count", row.metrics.count},
                     {"rmse", row.metrics.rmse},
                     {"mae", row.metrics.mae},
                     {"corr", row.metrics.corr ? json(*row.metrics.corr) : json(nullptr)},
                     {"divergence_residual", row.divergence_residual}});
  }
  json methods = json::object();
  for (const auto& name : this->methods()) {
    const MethodSummary s = summary(name);
    methods[name] = {{"rmse", summary_json(s.rmse)},
                     {"mae", summary_json(s.mae)},
                     {"corr", summary_json(s.corr)},
                     {"undefined_corr", s.undefined_corr},
                     {"divergence_residual", summary_json(s.divergence_residual)}};
  }
  return json{{"folds", folds}, {"methods", methods}};
}

}  // namespace flowsymm
