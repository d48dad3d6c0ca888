#include "flowsymm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "flowsymm/errors.hpp"

namespace flowsymm {

namespace {

double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
double leaky_grad(double x) { return x > 0.0 ? 1.0 : kLeakySlope; }

template <class Tensor>
void glorot_fill(Tensor& tensor, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < tensor.size(); ++i) tensor.data()[i] = dist(rng);
}

std::vector<AttentionHead> zero_heads(int heads, int hidden, int in_dim) {
  std::vector<AttentionHead> out(heads);
  for (auto& h : out) {
    h.w_src = Eigen::MatrixXd::Zero(hidden, in_dim);
    h.w_dst = Eigen::MatrixXd::Zero(hidden, in_dim);
    h.attn = Eigen::VectorXd::Zero(hidden);
  }
  return out;
}

// Forward pass of one GATv2 layer for all heads; returns per-head outputs
// (hidden x m) and fills the trace.
std::vector<Eigen::MatrixXd> gat_forward(const std::vector<AttentionHead>& heads,
                                         const LineGraph& graph, const Eigen::MatrixXd& input,
                                         GatLayerTrace& trace) {
  const int m = graph.size();
  trace.input = input;
  trace.z_src.resize(heads.size());
  trace.z_dst.resize(heads.size());
  trace.coeff.resize(heads.size());

  std::vector<Eigen::MatrixXd> outputs(heads.size());
  std::vector<double> logits;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const AttentionHead& head = heads[h];
    const Eigen::MatrixXd zs = head.w_src * input;
    const Eigen::MatrixXd zd = head.w_dst * input;
    std::vector<double>& coeff = trace.coeff[h];
    coeff.assign(graph.neighbors.size(), 0.0);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(head.w_src.rows(), m);
    Eigen::VectorXd pre(head.w_src.rows());

    for (int i = 0; i < m; ++i) {
      const auto nbrs = graph.neighbors_of(i);
      logits.resize(nbrs.size());
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        pre = zd.col(i) + zs.col(nbrs[s]);
        double score = 0.0;
        for (Eigen::Index r = 0; r < pre.size(); ++r) score += head.attn[r] * leaky(pre[r]);
        logits[s] = score;
        top = std::max(top, score);
      }
      double total = 0.0;
      for (double& l : logits) {
        l = std::exp(l - top);
        total += l;
      }
      const int base = graph.offsets[i];
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        const double a = logits[s] / total;
        coeff[base + s] = a;
        out.col(i) += a * zs.col(nbrs[s]);
      }
    }
    trace.z_src[h] = zs;
    trace.z_dst[h] = zd;
    outputs[h] = std::move(out);
  }
  return outputs;
}

// Backward pass of one GATv2 layer. grad_outputs holds one hidden x m block
// per head. Accumulates weight gradients into grads and returns dL/dinput.
Eigen::MatrixXd gat_backward(const std::vector<AttentionHead>& heads, const LineGraph& graph,
                             const GatLayerTrace& trace,
                             const std::vector<Eigen::MatrixXd>& grad_outputs,
                             std::vector<AttentionHead>& grads) {
  const int m = graph.size();
  Eigen::MatrixXd grad_input = Eigen::MatrixXd::Zero(trace.input.rows(), trace.input.cols());
  std::vector<double> grad_coeff;

  for (std::size_t h = 0; h < heads.size(); ++h) {
    const AttentionHead& head = heads[h];
    const Eigen::MatrixXd& zs = trace.z_src[h];
    const Eigen::MatrixXd& zd = trace.z_dst[h];
    const std::vector<double>& coeff = trace.coeff[h];
    const Eigen::MatrixXd& g = grad_outputs[h];

    Eigen::MatrixXd g_zs = Eigen::MatrixXd::Zero(zs.rows(), m);
    Eigen::MatrixXd g_zd = Eigen::MatrixXd::Zero(zd.rows(), m);
    Eigen::VectorXd g_attn = Eigen::VectorXd::Zero(head.attn.size());
    Eigen::VectorXd pre(zs.rows());

    for (int i = 0; i < m; ++i) {
      const auto nbrs = graph.neighbors_of(i);
      const int base = graph.offsets[i];
      grad_coeff.resize(nbrs.size());
      double weighted = 0.0;
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        const double a = coeff[base + s];
        g_zs.col(nbrs[s]) += a * g.col(i);
        grad_coeff[s] = g.col(i).dot(zs.col(nbrs[s]));
        weighted += a * grad_coeff[s];
      }
      for (std::size_t s = 0; s < nbrs.size(); ++s) {
        const double g_score = coeff[base + s] * (grad_coeff[s] - weighted);
        if (g_score == 0.0) continue;
        pre = zd.col(i) + zs.col(nbrs[s]);
        for (Eigen::Index r = 0; r < pre.size(); ++r) {
          g_attn[r] += g_score * leaky(pre[r]);
          const double g_pre = g_score * head.attn[r] * leaky_grad(pre[r]);
          g_zd(r, i) += g_pre;
          g_zs(r, nbrs[s]) += g_pre;
        }
      }
    }

    grads[h].w_src += g_zs * trace.input.transpose();
    grads[h].w_dst += g_zd * trace.input.transpose();
    grads[h].attn += g_attn;
    grad_input.noalias() += head.w_src.transpose() * g_zs;
    grad_input.noalias() += head.w_dst.transpose() * g_zd;
  }
  return grad_input;
}

void check_shape(const EncoderParams& params) {
  const EncoderShape& s = params.shape;
  if (s.input_dim < 1 || s.hidden_dim < 1 || s.heads < 1 || s.basis_slots < 0) {
    throw ConfigError("invalid encoder shape");
  }
  if (static_cast<int>(params.layer1.size()) != s.heads ||
      static_cast<int>(params.layer2.size()) != s.heads ||
      params.basis_scores.rows() != s.basis_slots || params.basis_scores.cols() != s.hidden_dim) {
    throw StructuralError("encoder parameters do not match their shape");
  }
}

}  // namespace

LineGraph line_graph(const FlowGraph& graph) {
  std::vector<std::vector<int>> incident(graph.node_count);
  for (int e = 0; e < graph.edge_count(); ++e) {
    incident.at(graph.edges[e].source).push_back(e);
    incident.at(graph.edges[e].target).push_back(e);
  }
  LineGraph lg;
  lg.offsets.reserve(graph.edges.size() + 1);
  std::vector<int> nbrs;
  for (int e = 0; e < graph.edge_count(); ++e) {
    const auto& a = incident[graph.edges[e].source];
    const auto& b = incident[graph.edges[e].target];
    nbrs.assign(a.begin(), a.end());
    nbrs.insert(nbrs.end(), b.begin(), b.end());
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    lg.neighbors.insert(lg.neighbors.end(), nbrs.begin(), nbrs.end());
    lg.offsets.push_back(static_cast<int>(lg.neighbors.size()));
  }
  return lg;
}

EncoderParams EncoderParams::zeros(const EncoderShape& shape) {
  EncoderParams p;
  p.shape = shape;
  p.layer1 = zero_heads(shape.heads, shape.hidden_dim, shape.input_dim);
  p.layer2 = zero_heads(shape.heads, shape.hidden_dim, shape.heads * shape.hidden_dim);
  p.basis_scores = Eigen::MatrixXd::Zero(shape.basis_slots, shape.hidden_dim);
  return p;
}

EncoderParams EncoderParams::initialize(const EncoderShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.hidden_dim < 1 || shape.heads < 1 || shape.basis_slots < 0) {
    throw ConfigError("invalid encoder shape");
  }
  EncoderParams p = zeros(shape);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  const auto init_layer = [&](std::vector<AttentionHead>& heads, int in_dim) {
    for (auto& head : heads) {
      glorot_fill(head.w_src, in_dim, shape.hidden_dim, rng);
      glorot_fill(head.w_dst, in_dim, shape.hidden_dim, rng);
      glorot_fill(head.attn, shape.hidden_dim, 1, rng);
    }
  };
  init_layer(p.layer1, shape.input_dim);
  init_layer(p.layer2, shape.heads * shape.hidden_dim);
  glorot_fill(p.basis_scores, shape.hidden_dim, 1, rng);
  return p;
}

Eigen::Index EncoderParams::parameter_count() const {
  Eigen::Index total = 0;
  for_each_tensor([&total](const std::string&, const auto& t) { total += t.size(); });
  return total;
}

Eigen::VectorXd EncoderParams::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index offset = 0;
  for_each_tensor([&](const std::string&, const auto& t) {
    flat.segment(offset, t.size()) = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
    offset += t.size();
  });
  return flat;
}

void EncoderParams::assign_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw StructuralError("flat parameter length mismatch");
  Eigen::Index offset = 0;
  for_each_tensor([&](const std::string&, auto& t) {
    Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = flat.segment(offset, t.size());
    offset += t.size();
  });
}

Encoding encode(const EncoderParams& params, const LineGraph& graph,
                const Eigen::MatrixXd& features) {
  check_shape(params);
  const EncoderShape& shape = params.shape;
  if (features.rows() != graph.size()) {
    throw StructuralError("feature rows do not match the line graph size");
  }
  if (features.cols() != shape.input_dim) {
    throw StructuralError("feature width " + std::to_string(features.cols()) +
                          " does not match encoder input " + std::to_string(shape.input_dim));
  }
  if (!features.allFinite()) throw NumericalError("edge features contain non-finite values");

  Encoding enc;
  EncodeTrace& trace = enc.trace;
  const int m = graph.size();
  const int hid = shape.hidden_dim;

  const auto first = gat_forward(params.layer1, graph, features.transpose(), trace.layer1);
  trace.hidden_pre.resize(static_cast<Eigen::Index>(shape.heads) * hid, m);
  for (int h = 0; h < shape.heads; ++h) trace.hidden_pre.middleRows(h * hid, hid) = first[h];

  const Eigen::MatrixXd activated = trace.hidden_pre.unaryExpr(
      [](double x) { return x > 0.0 ? x : std::expm1(x); });

  const auto second = gat_forward(params.layer2, graph, activated, trace.layer2);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(hid, m);
  for (const auto& out : second) mean += out;
  mean /= static_cast<double>(shape.heads);

  enc.embeddings = mean.transpose();
  trace.valid = true;
  return enc;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) return logits;
  Eigen::VectorXd out = (logits.array() - logits.maxCoeff()).exp();
  return out / out.sum();
}

AttentionState select_action(const Eigen::MatrixXd& embeddings, const GroupActionBasis& basis,
                             const EncoderParams& params, const IncidenceSystem& system,
                             const Eigen::VectorXd& f0) {
  const int k = basis.size();
  const int m_miss = system.missing_count();
  if (f0.size() != system.edge_count()) throw StructuralError("anchor length mismatch");
  if (embeddings.rows() != system.edge_count() ||
      embeddings.cols() != params.shape.hidden_dim) {
    throw StructuralError("embedding shape mismatch");
  }

  AttentionState state;
  if (k == 0 || m_miss == 0) {
    state.scores.resize(m_miss, 0);
    state.pooled.resize(0);
    state.alpha.resize(0);
    state.action = Eigen::VectorXd::Zero(system.edge_count());
    state.f_cand = f0;
    state.delta_attn = system.gather_missing(f0);
    return state;
  }
  if (k > params.shape.basis_slots) {
    throw StructuralError("basis has " + std::to_string(k) + " vectors but the encoder has " +
                          std::to_string(params.shape.basis_slots) + " score slots");
  }
  if (basis.vectors.rows() != system.edge_count()) throw StructuralError("basis row mismatch");

  const auto missing = system.missing_edges();
  const Eigen::MatrixXd w = params.basis_scores.topRows(k);
  state.scores.resize(m_miss, k);
  for (int r = 0; r < m_miss; ++r) {
    const int e = missing[r];
    const Eigen::VectorXd votes = w * embeddings.row(e).transpose();
    for (int i = 0; i < k; ++i) state.scores(r, i) = votes[i] * std::abs(basis.vectors(e, i));
  }
  state.pooled = state.scores.colwise().mean().transpose();
  state.alpha = softmax(state.pooled);
  state.action = basis.vectors * state.alpha;
  state.f_cand = f0 + state.action;
  state.delta_attn = system.gather_missing(state.f_cand);
  return state;
}

SelectionGradient select_action_backward(const AttentionState& state,
                                         const Eigen::MatrixXd& embeddings,
                                         const GroupActionBasis& basis,
                                         const EncoderParams& params,
                                         const IncidenceSystem& system,
                                         const Eigen::VectorXd& grad_alpha,
                                         const Eigen::VectorXd& grad_delta_attn) {
  const int k = basis.size();
  const int m_miss = system.missing_count();
  SelectionGradient grad;
  grad.basis_scores = Eigen::MatrixXd::Zero(params.shape.basis_slots, params.shape.hidden_dim);
  grad.embeddings = Eigen::MatrixXd::Zero(system.edge_count(), params.shape.hidden_dim);
  if (k == 0 || m_miss == 0) return grad;
  if (state.alpha.size() != k) throw StructuralError("attention state does not match the basis");
  if (grad_delta_attn.size() != m_miss) throw StructuralError("grad_delta_attn length mismatch");

  const auto missing = system.missing_edges();
  Eigen::MatrixXd abs_u(m_miss, k);
  for (int r = 0; r < m_miss; ++r) abs_u.row(r) = basis.vectors.row(missing[r]).cwiseAbs();

  // delta_attn = S_miss f0 + U_miss alpha.
  Eigen::VectorXd g_alpha = Eigen::VectorXd::Zero(k);
  if (grad_alpha.size() != 0) {
    if (grad_alpha.size() != k) throw StructuralError("grad_alpha length mismatch");
    g_alpha = grad_alpha;
  }
  for (int r = 0; r < m_miss; ++r) {
    g_alpha += grad_delta_attn[r] * basis.vectors.row(missing[r]).transpose();
  }
  const Eigen::VectorXd g_pooled =
      state.alpha.cwiseProduct((g_alpha.array() - state.alpha.dot(g_alpha)).matrix());
  const Eigen::VectorXd per_basis = g_pooled / static_cast<double>(m_miss);

  Eigen::MatrixXd h_miss(m_miss, embeddings.cols());
  for (int r = 0; r < m_miss; ++r) h_miss.row(r) = embeddings.row(missing[r]);

  // dL/dw_i = per_basis_i * sum_e |u_e^(i)| H_e
  grad.basis_scores.topRows(k) = per_basis.asDiagonal() * (abs_u.transpose() * h_miss);
  // dL/dH_e = sum_i per_basis_i |u_e^(i)| w_i
  const Eigen::MatrixXd g_h_miss =
      abs_u * per_basis.asDiagonal() * params.basis_scores.topRows(k);
  for (int r = 0; r < m_miss; ++r) grad.embeddings.row(missing[r]) = g_h_miss.row(r);
  return grad;
}

EncoderParams encode_backward(const EncoderParams& params, const LineGraph& graph,
                              const EncodeTrace& trace, const Eigen::MatrixXd& grad_embeddings) {
  if (!trace.valid) throw StructuralError("encode_backward called without a forward trace");
  check_shape(params);
  const EncoderShape& shape = params.shape;
  const int m = graph.size();
  const int hid = shape.hidden_dim;
  if (grad_embeddings.rows() != m || grad_embeddings.cols() != hid) {
    throw StructuralError("grad_embeddings shape mismatch");
  }

  EncoderParams grads = EncoderParams::zeros(shape);
  grads.seed = params.seed;

  // Layer 2 averages its heads.
  const Eigen::MatrixXd g_mean = grad_embeddings.transpose() / static_cast<double>(shape.heads);
  const std::vector<Eigen::MatrixXd> g_second(shape.heads, g_mean);
  const Eigen::MatrixXd g_activated =
      gat_backward(params.layer2, graph, trace.layer2, g_second, grads.layer2);

  const Eigen::MatrixXd g_pre = g_activated.cwiseProduct(
      trace.hidden_pre.unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); }));

  // Layer 1 concatenates its heads.
  std::vector<Eigen::MatrixXd> g_first(shape.heads);
  for (int h = 0; h < shape.heads; ++h) g_first[h] = g_pre.middleRows(h * hid, hid);
  gat_backward(params.layer1, graph, trace.layer1, g_first, grads.layer1);
  return grads;
}

EncoderParams encoder_backward(const EncoderParams& params, const LineGraph& graph,
                               const Encoding& encoding, const AttentionState& state,
                               const GroupActionBasis& basis, const IncidenceSystem& system,
                               const Eigen::VectorXd& grad_alpha,
                               const Eigen::VectorXd& grad_delta_attn) {
  const SelectionGradient sel = select_action_backward(
      state, encoding.embeddings, basis, params, system, grad_alpha, grad_delta_attn);
  EncoderParams grads = encode_backward(params, graph, encoding.trace, sel.embeddings);
  grads.basis_scores = sel.basis_scores;
  return grads;
}

}  // namespace flowsymm
