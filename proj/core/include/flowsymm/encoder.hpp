#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowsymm/graph.hpp"
#include "flowsymm/symmetry.hpp"

namespace flowsymm {

/// Edge adjacency of the line graph in CSR form. Two edges are adjacent when
/// they share an endpoint; every edge is adjacent to itself.
struct LineGraph {
  std::vector<int> offsets{0};
  std::vector<int> neighbors;

  int size() const noexcept { return static_cast<int>(offsets.size()) - 1; }
  std::span<const int> neighbors_of(int edge) const {
    return {neighbors.data() + offsets[edge],
            static_cast<std::size_t>(offsets[edge + 1] - offsets[edge])};
  }
};

LineGraph line_graph(const FlowGraph& graph);

struct EncoderShape {
  int input_dim = 0;
  int hidden_dim = 16;
  int heads = 4;
  int basis_slots = 0;  // number of score vectors w_i

  bool operator==(const EncoderShape&) const = default;
};

/// One GATv2 head: score(i <- j) = attn . LeakyReLU(w_dst h_i + w_src h_j),
/// message = w_src h_j. No bias terms.
struct AttentionHead {
  Eigen::MatrixXd w_src;
  Eigen::MatrixXd w_dst;
  Eigen::VectorXd attn;
};

/// Two GATv2 layers (heads concatenated, ELU, heads averaged) followed by one
/// score vector per basis slot. The same struct holds parameter gradients.
struct EncoderParams {
  EncoderShape shape;
  std::vector<AttentionHead> layer1;
  std::vector<AttentionHead> layer2;
  Eigen::MatrixXd basis_scores;  // basis_slots x hidden_dim; row i is w_i
  std::uint64_t seed = 0;

  /// Glorot-uniform initialization, fully determined by seed.
  static EncoderParams initialize(const EncoderShape& shape, std::uint64_t seed);
  static EncoderParams zeros(const EncoderShape& shape);

  /// Visits every tensor in a fixed order as fn(name, tensor), where tensor
  /// is an Eigen::MatrixXd or Eigen::VectorXd.
  template <class Fn>
  void for_each_tensor(Fn&& fn) {
    visit(*this, fn);
  }
  template <class Fn>
  void for_each_tensor(Fn&& fn) const {
    visit(*this, fn);
  }

  Eigen::Index parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);

 private:
  template <class Self, class Fn>
  static void visit(Self& self, Fn& fn) {
    const auto layer = [&fn](auto& heads, const std::string& prefix) {
      for (std::size_t h = 0; h < heads.size(); ++h) {
        const std::string base = prefix + ".head" + std::to_string(h);
        fn(base + ".w_src", heads[h].w_src);
        fn(base + ".w_dst", heads[h].w_dst);
        fn(base + ".attn", heads[h].attn);
      }
    };
    layer(self.layer1, "layer1");
    layer(self.layer2, "layer2");
    fn(std::string("basis_scores"), self.basis_scores);
  }
};

inline constexpr double kLeakySlope = 0.2;

/// Per-layer values kept from the forward pass for the backward pass.
struct GatLayerTrace {
  Eigen::MatrixXd input;                    // in_dim x m
  std::vector<Eigen::MatrixXd> z_src;       // per head, hidden x m
  std::vector<Eigen::MatrixXd> z_dst;       // per head, hidden x m
  std::vector<std::vector<double>> coeff;   // per head, one entry per CSR slot
};

struct EncodeTrace {
  GatLayerTrace layer1;
  GatLayerTrace layer2;
  Eigen::MatrixXd hidden_pre;  // layer-1 output before ELU, (heads*hidden) x m
  bool valid = false;
};

struct Encoding {
  Eigen::MatrixXd embeddings;  // H, m x hidden
  EncodeTrace trace;
};

/// Runs both attention layers. Throws on non-finite features or shape
/// mismatch.
Encoding encode(const EncoderParams& params, const LineGraph& graph,
                const Eigen::MatrixXd& features);

/// Attention-guided choice of a group action.
struct AttentionState {
  Eigen::MatrixXd scores;      // Q, m_miss x k
  Eigen::VectorXd pooled;      // s, length k
  Eigen::VectorXd alpha;       // softmax(s)
  Eigen::VectorXd action;      // Delta = U alpha, length m
  Eigen::VectorXd f_cand;      // f0 + Delta
  Eigen::VectorXd delta_attn;  // S_miss f_cand
};

/// q_{e,i} = (w_i . H_e) |u_e^(i)| over missing edges, mean-pooled and
/// softmaxed into alpha. An empty basis gives f_cand = f0 and empty alpha.
AttentionState select_action(const Eigen::MatrixXd& embeddings, const GroupActionBasis& basis,
                             const EncoderParams& params, const IncidenceSystem& system,
                             const Eigen::VectorXd& f0);

struct SelectionGradient {
  Eigen::MatrixXd basis_scores;  // basis_slots x hidden
  Eigen::MatrixXd embeddings;    // m x hidden
};

/// Pulls gradients w.r.t. alpha and delta_attn back to the score vectors and
/// the embeddings.
SelectionGradient select_action_backward(const AttentionState& state,
                                         const Eigen::MatrixXd& embeddings,
                                         const GroupActionBasis& basis,
                                         const EncoderParams& params,
                                         const IncidenceSystem& system,
                                         const Eigen::VectorXd& grad_alpha,
                                         const Eigen::VectorXd& grad_delta_attn);

/// Gradients of the attention-layer weights given dL/dH. basis_scores of the
/// result is zero. Throws if the trace was not produced by encode().
EncoderParams encode_backward(const EncoderParams& params, const LineGraph& graph,
                              const EncodeTrace& trace, const Eigen::MatrixXd& grad_embeddings);

/// Full reverse pass for one forward (encode + select_action).
EncoderParams encoder_backward(const EncoderParams& params, const LineGraph& graph,
                               const Encoding& encoding, const AttentionState& state,
                               const GroupActionBasis& basis, const IncidenceSystem& system,
                               const Eigen::VectorXd& grad_alpha,
                               const Eigen::VectorXd& grad_delta_attn);

/// Numerically stable softmax (max subtracted).
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace flowsymm
