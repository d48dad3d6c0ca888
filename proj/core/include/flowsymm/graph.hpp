#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace flowsymm {

using Mask = std::vector<bool>;

struct Edge {
  int source = 0;
  int target = 0;
  bool directed = true;
};

/// Graph with one feature row per edge. Edge order is the canonical column
/// order for every matrix built from the graph.
struct FlowGraph {
  int node_count = 0;
  std::vector<Edge> edges;
  Eigen::MatrixXd features;  // edge_count() x feature_dim()

  int edge_count() const noexcept { return static_cast<int>(edges.size()); }
  int feature_dim() const noexcept { return static_cast<int>(features.cols()); }

  /// Throws StructuralError on out-of-range ids, self-loops, duplicate
  /// (source, target) pairs, an empty edge list or a feature row mismatch.
  void validate() const;
};

/// Oriented incidence matrix: +1 at the target row, -1 at the source row, so
/// (B f)_v is the net inflow at v.
Eigen::MatrixXd build_incidence(const FlowGraph& graph);

/// Incidence matrix split into observed and missing columns. Selectors are
/// stored as ascending edge-index lists; dense selector matrices are
/// materialized on request.
class IncidenceSystem {
 public:
  IncidenceSystem() = default;
  IncidenceSystem(Eigen::MatrixXd incidence, Mask observed);

  int node_count() const noexcept { return static_cast<int>(incidence_.rows()); }
  int edge_count() const noexcept { return static_cast<int>(incidence_.cols()); }
  int observed_count() const noexcept { return static_cast<int>(observed_.size()); }
  int missing_count() const noexcept { return static_cast<int>(missing_.size()); }

  /// True when no edge is missing (nothing to complete).
  bool degenerate() const noexcept { return missing_.empty(); }

  const Eigen::MatrixXd& incidence() const noexcept { return incidence_; }
  const Eigen::MatrixXd& observed_incidence() const noexcept { return b_obs_; }
  const Eigen::MatrixXd& missing_incidence() const noexcept { return b_miss_; }
  const Mask& observed_mask() const noexcept { return mask_; }
  std::span<const int> observed_edges() const noexcept { return observed_; }
  std::span<const int> missing_edges() const noexcept { return missing_; }

  /// Position of an edge inside the missing list, or -1 when observed.
  int missing_position(int edge) const { return missing_pos_.at(edge); }

  Eigen::MatrixXd observed_selector() const;
  Eigen::MatrixXd missing_selector() const;

  /// S_obs * f and S_miss * f.
  Eigen::VectorXd gather_observed(const Eigen::VectorXd& f) const;
  Eigen::VectorXd gather_missing(const Eigen::VectorXd& f) const;

  /// Copy of f whose missing entries are replaced by delta; observed entries
  /// are copied, never recomputed.
  Eigen::VectorXd with_missing(const Eigen::VectorXd& f,
                               const Eigen::VectorXd& delta) const;

  /// Sparse view of B_miss for matrix-free solvers.
  Eigen::SparseMatrix<double> sparse_missing_incidence() const;

 private:
  Eigen::MatrixXd incidence_;
  Mask mask_;
  std::vector<int> observed_;
  std::vector<int> missing_;
  std::vector<int> missing_pos_;
  Eigen::MatrixXd b_obs_;
  Eigen::MatrixXd b_miss_;
};

IncidenceSystem partition_edges(const Eigen::MatrixXd& incidence, const Mask& observed);

/// Sensor snapshot: flows on observed edges (zero elsewhere) and nodal
/// injections (c_v > 0 marks a sink).
struct Observation {
  Eigen::VectorXd f_hat;
  Eigen::VectorXd injections;
  Mask observed_mask;

  /// Builds an observation from full flows, zeroing every masked-out entry.
  static Observation from_flows(const Eigen::VectorXd& flows,
                                const Eigen::VectorXd& injections,
                                const Mask& observed);

  void validate(int node_count, int edge_count) const;
};

/// c_hat = B_obs * (S_obs * f_hat).
Eigen::VectorXd empirical_imbalance(const IncidenceSystem& system,
                                    const Observation& obs);

int count_true(const Mask& mask);

}  // namespace flowsymm
