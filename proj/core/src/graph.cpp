#include "flowsymm/graph.hpp"

#include <set>
#include <string>
#include <utility>

#include "flowsymm/errors.hpp"

namespace flowsymm {

void FlowGraph::validate() const {
  if (node_count <= 0) throw StructuralError("graph has no nodes");
  if (edges.empty()) throw StructuralError("graph has no edges");
  if (features.rows() != edge_count()) {
    throw StructuralError("feature matrix has " + std::to_string(features.rows()) +
                          " rows for " + std::to_string(edge_count()) + " edges");
  }
  std::set<std::pair<int, int>> seen;
  for (int e = 0; e < edge_count(); ++e) {
    const Edge& edge = edges[e];
    if (edge.source < 0 || edge.source >= node_count || edge.target < 0 ||
        edge.target >= node_count) {
      throw StructuralError("edge " + std::to_string(e) + " references a node outside [0, " +
                            std::to_string(node_count) + ")");
    }
    if (edge.source == edge.target) {
      throw StructuralError("edge " + std::to_string(e) + " is a self-loop");
    }
    if (!seen.emplace(edge.source, edge.target).second) {
      throw StructuralError("edge " + std::to_string(e) + " duplicates (" +
                            std::to_string(edge.source) + ", " +
                            std::to_string(edge.target) + ")");
    }
  }
  if (!features.allFinite()) throw StructuralError("edge features contain non-finite values");
}

Eigen::MatrixXd build_incidence(const FlowGraph& graph) {
  if (graph.node_count <= 0) throw StructuralError("graph has no nodes");
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(graph.node_count, graph.edge_count());
  for (int e = 0; e < graph.edge_count(); ++e) {
    const Edge& edge = graph.edges[e];
    if (edge.source < 0 || edge.source >= graph.node_count || edge.target < 0 ||
        edge.target >= graph.node_count) {
      throw StructuralError("edge " + std::to_string(e) + " references a node out of range");
    }
    if (edge.source == edge.target) {
      throw StructuralError("edge " + std::to_string(e) + " is a self-loop");
    }
    b(edge.source, e) = -1.0;
    b(edge.target, e) = 1.0;
  }
  return b;
}

IncidenceSystem::IncidenceSystem(Eigen::MatrixXd incidence, Mask observed)
    : incidence_(std::move(incidence)), mask_(std::move(observed)) {
  if (static_cast<Eigen::Index>(mask_.size()) != incidence_.cols()) {
    throw StructuralError("mask length " + std::to_string(mask_.size()) +
                          " does not match edge count " +
                          std::to_string(incidence_.cols()));
  }
  const int m = edge_count();
  missing_pos_.assign(m, -1);
  for (int e = 0; e < m; ++e) {
    if (mask_[e]) {
      observed_.push_back(e);
    } else {
      missing_pos_[e] = static_cast<int>(missing_.size());
      missing_.push_back(e);
    }
  }
  b_obs_.resize(incidence_.rows(), observed_count());
  for (int j = 0; j < observed_count(); ++j) b_obs_.col(j) = incidence_.col(observed_[j]);
  b_miss_.resize(incidence_.rows(), missing_count());
  for (int j = 0; j < missing_count(); ++j) b_miss_.col(j) = incidence_.col(missing_[j]);
}

Eigen::MatrixXd IncidenceSystem::observed_selector() const {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(observed_count(), edge_count());
  for (int j = 0; j < observed_count(); ++j) s(j, observed_[j]) = 1.0;
  return s;
}

Eigen::MatrixXd IncidenceSystem::missing_selector() const {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(missing_count(), edge_count());
  for (int j = 0; j < missing_count(); ++j) s(j, missing_[j]) = 1.0;
  return s;
}

Eigen::VectorXd IncidenceSystem::gather_observed(const Eigen::VectorXd& f) const {
  if (f.size() != edge_count()) throw StructuralError("flow vector has wrong length");
  Eigen::VectorXd out(observed_count());
  for (int j = 0; j < observed_count(); ++j) out[j] = f[observed_[j]];
  return out;
}

Eigen::VectorXd IncidenceSystem::gather_missing(const Eigen::VectorXd& f) const {
  if (f.size() != edge_count()) throw StructuralError("flow vector has wrong length");
  Eigen::VectorXd out(missing_count());
  for (int j = 0; j < missing_count(); ++j) out[j] = f[missing_[j]];
  return out;
}

Eigen::VectorXd IncidenceSystem::with_missing(const Eigen::VectorXd& f,
                                              const Eigen::VectorXd& delta) const {
  if (f.size() != edge_count() || delta.size() != missing_count()) {
    throw StructuralError("with_missing: shape mismatch");
  }
  Eigen::VectorXd out = f;
  for (int j = 0; j < missing_count(); ++j) out[missing_[j]] = delta[j];
  return out;
}

Eigen::SparseMatrix<double> IncidenceSystem::sparse_missing_incidence() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * missing_.size());
  for (int j = 0; j < missing_count(); ++j) {
    for (Eigen::Index v = 0; v < incidence_.rows(); ++v) {
      const double value = incidence_(v, missing_[j]);
      if (value != 0.0) triplets.emplace_back(static_cast<int>(v), j, value);
    }
  }
  Eigen::SparseMatrix<double> sparse(node_count(), missing_count());
  sparse.setFromTriplets(triplets.begin(), triplets.end());
  return sparse;
}

IncidenceSystem partition_edges(const Eigen::MatrixXd& incidence, const Mask& observed) {
  return IncidenceSystem(incidence, observed);
}

Observation Observation::from_flows(const Eigen::VectorXd& flows,
                                    const Eigen::VectorXd& injections,
                                    const Mask& observed) {
  if (static_cast<Eigen::Index>(observed.size()) != flows.size()) {
    throw StructuralError("mask length does not match flow vector");
  }
  Observation obs;
  obs.f_hat = flows;
  for (Eigen::Index e = 0; e < flows.size(); ++e) {
    if (!observed[e]) obs.f_hat[e] = 0.0;
  }
  obs.injections = injections;
  obs.observed_mask = observed;
  return obs;
}

void Observation::validate(int node_count, int edge_count) const {
  if (f_hat.size() != edge_count) throw StructuralError("observation has wrong flow length");
  if (injections.size() != node_count) {
    throw StructuralError("observation has wrong injection length");
  }
  if (static_cast<int>(observed_mask.size()) != edge_count) {
    throw StructuralError("observation has wrong mask length");
  }
  for (int e = 0; e < edge_count; ++e) {
    if (!observed_mask[e] && f_hat[e] != 0.0) {
      throw StructuralError("observation is nonzero on missing edge " + std::to_string(e));
    }
  }
}

Eigen::VectorXd empirical_imbalance(const IncidenceSystem& system, const Observation& obs) {
  obs.validate(system.node_count(), system.edge_count());
  if (obs.observed_mask != system.observed_mask()) {
    throw StructuralError("observation mask differs from the partition mask");
  }
  return system.observed_incidence() * system.gather_observed(obs.f_hat);
}

int count_true(const Mask& mask) {
  int count = 0;
  for (bool b : mask) count += b ? 1 : 0;
  return count;
}

}  // namespace flowsymm
