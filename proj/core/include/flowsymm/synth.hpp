#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "flowsymm/dataset.hpp"
#include "flowsymm/graph.hpp"

namespace flowsymm {

struct SynthConfig {
  int n = 30;
  int extra_edges = 20;  // chords beyond the spanning tree = cycle-space dimension
  int feature_dim = 8;
  double observed_fraction = 0.4;
  double obs_noise_std = 0.0;
  double feature_informativeness = 0.9;
  double injection_scale = 1.0;    // std of the raw nodal injections
  double circulation_scale = 3.0;  // mean strength of each chord circulation
  std::uint64_t seed = 0;

  void validate() const;
};

/// Generated instance. truth satisfies B truth = injections exactly; measured
/// carries sensor noise on observed edges and equals truth elsewhere.
struct SynthInstance {
  FlowGraph graph;
  Eigen::VectorXd truth;
  Eigen::VectorXd injections;
  Eigen::VectorXd measured;
  Mask observed;

  Observation observation() const;
  /// Dataset whose flow column is `measured`.
  Dataset to_dataset(const std::string& name = "synthetic") const;
};

/// Random spanning tree plus extra_edges chords, tree-routed injections plus
/// positive chord circulations, every edge oriented along its true flow and
/// flows scaled so max |f| = 1. Flows are multiples of 2^-30, so the
/// injections c = B f are exact.
SynthInstance generate(const SynthConfig& config);

}  // namespace flowsymm
