#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "flowsymm/graph.hpp"

namespace flowsymm {

/// In-memory form of a dataset directory:
///   edges.csv       edge_id,source,target,observed,flow,f1..fd
///   injections.csv  node_id,c
///   manifest.txt    key=value lines (n, m, d, name, normalization, directed)
struct Dataset {
  std::string name = "dataset";
  std::string normalization = "none";  // "none" or "minmax" (applied on load)
  bool directed = true;
  FlowGraph graph;
  Eigen::VectorXd injections;
  Eigen::VectorXd flows;  // flow column, one entry per edge
  Mask observed;

  /// Sensor snapshot: flows on observed edges, zero elsewhere.
  Observation observation() const;
  void validate() const;
};

/// Writes the three files into dir (created if needed). Numbers are printed
/// with 17 significant digits so a load returns identical doubles.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Throws ParseError naming file, line and column on any schema violation.
Dataset load_dataset(const std::filesystem::path& dir);

/// Scales each feature column to [0, 1]; constant columns become 0.
void minmax_normalize(Eigen::MatrixXd& features);

}  // namespace flowsymm
