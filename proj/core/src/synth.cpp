#include "flowsymm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <utility>

#include "flowsymm/errors.hpp"

namespace flowsymm {

void SynthConfig::validate() const {
  if (n < 2) throw ConfigError("synthetic graph needs n >= 2");
  if (extra_edges < 0) throw ConfigError("extra_edges must be >= 0 (the graph must stay connected)");
  const long long max_extra = static_cast<long long>(n) * (n - 1) / 2 - (n - 1);
  if (extra_edges > max_extra) {
    throw ConfigError("extra_edges = " + std::to_string(extra_edges) + " exceeds the " +
                      std::to_string(max_extra) + " free node pairs");
  }
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (!(observed_fraction > 0.0 && observed_fraction <= 1.0)) {
    throw ConfigError("observed_fraction must lie in (0, 1]");
  }
  if (!(obs_noise_std >= 0.0) || !std::isfinite(obs_noise_std)) {
    throw ConfigError("obs_noise_std must be finite and >= 0");
  }
  if (!(feature_informativeness >= 0.0 && feature_informativeness <= 1.0)) {
    throw ConfigError("feature_informativeness must lie in [0, 1]");
  }
  if (!(injection_scale >= 0.0) || !std::isfinite(injection_scale) ||
      !(circulation_scale >= 0.0) || !std::isfinite(circulation_scale)) {
    throw ConfigError("injection and circulation scales must be finite and >= 0");
  }
}

Observation SynthInstance::observation() const {
  return Observation::from_flows(measured, injections, observed);
}

Dataset SynthInstance::to_dataset(const std::string& name) const {
  Dataset ds;
  ds.name = name;
  ds.normalization = "none";
  ds.graph = graph;
  ds.injections = injections;
  ds.flows = measured;
  ds.observed = observed;
  return ds;
}

SynthInstance generate(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int n = config.n;

  // Random spanning tree: nodes in shuffled order, each attached to an
  // earlier one. Tree edges are oriented parent -> child.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> parent(static_cast<std::size_t>(n), -1);
  std::vector<int> depth(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<int, int>> edges;
  std::set<std::pair<int, int>> used;
  for (int i = 1; i < n; ++i) {
    const int child = order[i];
    const int p = order[std::uniform_int_distribution<int>(0, i - 1)(rng)];
    parent[child] = p;
    depth[child] = depth[p] + 1;
    edges.emplace_back(p, child);
    used.insert({std::min(p, child), std::max(p, child)});
  }
  const int tree_edges = static_cast<int>(edges.size());

  std::uniform_int_distribution<int> pick(0, n - 1);
  while (static_cast<int>(edges.size()) < tree_edges + config.extra_edges) {
    const int a = pick(rng);
    const int b = pick(rng);
    if (a == b || used.count({std::min(a, b), std::max(a, b)})) continue;
    used.insert({std::min(a, b), std::max(a, b)});
    edges.emplace_back(a, b);
  }
  const int m = static_cast<int>(edges.size());

  // Position of each tree edge, indexed by its child node.
  std::vector<int> tree_edge_of(static_cast<std::size_t>(n), -1);
  for (int e = 0; e < tree_edges; ++e) tree_edge_of[edges[e].second] = e;

  Eigen::VectorXd flow = Eigen::VectorXd::Zero(m);

  // Zero-sum injections routed along the tree: the edge into a subtree
  // carries the subtree's total demand.
  Eigen::VectorXd demand(n);
  for (int v = 0; v < n; ++v) demand[v] = config.injection_scale * normal(rng);
  demand.array() -= demand.mean();
  std::vector<double> subtree(static_cast<std::size_t>(n), 0.0);
  for (int v = 0; v < n; ++v) subtree[v] = demand[v];
  for (int i = n - 1; i >= 1; --i) {
    const int v = order[i];
    subtree[parent[v]] += subtree[v];
    flow[tree_edge_of[v]] = subtree[v];
  }

  // One positive circulation per chord a -> b, closed through the tree b ~> a.
  for (int e = tree_edges; e < m; ++e) {
    const double gamma = config.circulation_scale * (0.5 + uniform(rng));
    flow[e] += gamma;
    int a = edges[e].first;
    int b = edges[e].second;
    // Walk b up to the common ancestor (against tree orientation), and a up
    // to it (along orientation reversed, i.e. the path ancestor -> a).
    while (a != b) {
      if (depth[b] >= depth[a]) {
        flow[tree_edge_of[b]] -= gamma;  // traverse child b -> parent
        b = parent[b];
      } else {
        flow[tree_edge_of[a]] += gamma;  // traverse parent -> child a
        a = parent[a];
      }
    }
  }

  // Orient every edge along its flow and scale to max |f| = 1 on a 2^-30 grid.
  const double scale = flow.cwiseAbs().maxCoeff();
  const double grid = std::ldexp(1.0, 30);
  for (int e = 0; e < m; ++e) {
    if (flow[e] < 0.0) {
      std::swap(edges[e].first, edges[e].second);
      flow[e] = -flow[e];
    }
    if (scale > 0.0) flow[e] = std::round(flow[e] / scale * grid) / grid;
  }

  // Random edge order.
  std::vector<int> perm(static_cast<std::size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  SynthInstance out;
  out.graph.node_count = n;
  out.truth.resize(m);
  for (int e = 0; e < m; ++e) {
    Edge edge;
    edge.source = edges[perm[e]].first;
    edge.target = edges[perm[e]].second;
    out.graph.edges.push_back(edge);
    out.truth[e] = flow[perm[e]];
  }
  out.injections = build_incidence(out.graph) * out.truth;

  // Features: per column an affine read-out of the flow blended with noise of
  // matching spread, then min-max normalized.
  const int d = config.feature_dim;
  const double iota = config.feature_informativeness;
  double spread = 0.0;
  {
    const double mean = out.truth.mean();
    spread = std::sqrt((out.truth.array() - mean).square().mean());
    if (spread == 0.0) spread = 1.0;
  }
  out.graph.features.resize(m, d);
  for (int j = 0; j < d; ++j) {
    const double slope = (uniform(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + uniform(rng));
    const double offset = uniform(rng) - 0.5;
    for (int e = 0; e < m; ++e) {
      const double signal = slope * out.truth[e] + offset;
      const double noise = std::abs(slope) * spread * normal(rng);
      out.graph.features(e, j) = iota * signal + (1.0 - iota) * noise;
    }
  }
  minmax_normalize(out.graph.features);

  // Exactly round(fraction * m) observed edges, at least one.
  const int observed_count =
      std::clamp(static_cast<int>(std::lround(config.observed_fraction * m)), 1, m);
  std::vector<int> sensors(static_cast<std::size_t>(m));
  std::iota(sensors.begin(), sensors.end(), 0);
  std::shuffle(sensors.begin(), sensors.end(), rng);
  out.observed.assign(static_cast<std::size_t>(m), false);
  for (int i = 0; i < observed_count; ++i) out.observed[sensors[i]] = true;

  out.measured = out.truth;
  for (int e = 0; e < m; ++e) {
    if (out.observed[e] && config.obs_noise_std > 0.0) {
      out.measured[e] += config.obs_noise_std * normal(rng);
    }
  }
  return out;
}

}  // namespace flowsymm
