#pragma once

#include <optional>
#include <span>
#include <unordered_map>

#include "ctrl/graph.hpp"
#include "ctrl/sampler.hpp"
#include "ctrl/tensor.hpp"

namespace ctrl {

enum class HawkesMode { kEdgeBased, kSingleDelta };

struct ModelConfig {
    int dim = 128;
    int layers = 2;
    int neighbors = 10;
    int heads = 2;
    int degree_buckets = 16;
    bool use_centrality = true;
    HawkesMode hawkes_mode = HawkesMode::kEdgeBased;
};

// y = x * W + b with W: [in x out]. A zero-width input degenerates to the
// bias row, which is how types without raw features are handled.
struct Linear {
    Tensor weight;
    Tensor bias;
    std::size_t in = 0, out = 0;

    Tensor apply(Tape& tape, const Tensor& x) const { return tape.add_bias(tape.matmul(x, weight), bias); }
};

// Two linear layers with a ReLU in between; the output stays linear so
// heads can pick their own activation.
struct Mlp {
    Linear hidden;
    Linear output;

    Tensor apply(Tape& tape, const Tensor& x) const {
        return output.apply(tape, tape.relu(hidden.apply(tape, x)));
    }
};

// log2-bucketed dynamic degree: 0 -> 0, 1 -> 1, 1000 -> min(9, buckets-1).
std::size_t degree_bucket(std::size_t degree, int buckets);

// Every trainable component, keyed by the node and edge types of the graph
// the model was built for. Parameters are shared across layers.
class ModelParams {
  public:
    ModelParams(const TemporalHinGraph& graph, const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    const Linear& ffn_v(TypeId node_type) const { return ffn_v_.at(node_type); }
    const Linear& ffn_q(TypeId node_type) const { return ffn_q_.at(node_type); }
    const Linear& ffn_k(TypeId node_type) const { return ffn_k_.at(node_type); }
    const Linear& adapt(TypeId node_type) const { return adapt_.at(node_type); }
    const Linear& feat_proj(TypeId node_type) const { return feat_proj_.at(node_type); }
    const Tensor& beta(TypeId node_type) const { return beta_.at(node_type); }
    const Tensor& w_msg(TypeId edge_type) const { return w_msg_.at(edge_type); }
    const Tensor& w_key(TypeId edge_type) const { return w_key_.at(edge_type); }
    const Tensor& alpha_logits() const { return alpha_logits_; }
    const Tensor& degree_table() const { return degree_table_; }
    const Mlp& decay_mlp() const { return decay_mlp_; }
    const Tensor& single_delta() const { return single_delta_; }
    const Mlp& mlp_event() const { return mlp_event_; }
    const Mlp& mlp_edge() const { return mlp_edge_; }
    // 3 mixing weights, or 2 with the centrality term ablated.
    int alpha_count() const { return config_.use_centrality ? 3 : 2; }

  private:
    ModelConfig config_;
    ParamStore store_;
    std::vector<Linear> ffn_v_, ffn_q_, ffn_k_, adapt_, feat_proj_;
    std::vector<Tensor> beta_;
    std::vector<Tensor> w_msg_, w_key_;
    Tensor alpha_logits_, degree_table_, single_delta_;
    Mlp decay_mlp_, mlp_event_, mlp_edge_;
};

// Projected query/key vectors shared by the attention and Hawkes units.
struct QkProjection {
    Tensor q;                // [1 x d]
    std::vector<Tensor> k;   // per neighbor, [1 x d]
    Tensor k_rows;           // stacked, [N x d]
};

// Layer-0 state: projected raw feature plus the degree embedding (the
// latter dropped when centrality is ablated).
Tensor input_embedding(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                       NodeId v, Time t);

// One message per neighbor, through the neighbor-type FFN then the
// edge-type matrix, in batch order.
std::vector<Tensor> pass_messages(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                                  const NeighborBatch& batch, std::span<const Tensor> neighbor_states);

QkProjection project_qk(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                        const Tensor& target_state, const NeighborBatch& batch,
                        std::span<const Tensor> neighbor_states);

// Scaled-dot attention per head over d/H-wide chunks; each head's weights
// sum to one.
std::vector<Tensor> attention_weights(Tape& tape, const ModelParams& params, const QkProjection& qk);

// Edge-based Hawkes intensities: per-edge decay rates from an MLP over the
// concatenated query/key projections (or one shared rate), exponential
// decay over span-normalized elapsed time, softmax-normalized.
Tensor hawkes_weights(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                      const QkProjection& qk, const NeighborBatch& batch);

// Softmax over type-scaled dynamic degrees at the batch time.
Tensor centrality_weights(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                          const NeighborBatch& batch);

// One CTRL layer: convex mix of the three weight families per head,
// weighted message aggregation, adapt module, residual connection. An
// empty neighborhood aggregates a zero message.
Tensor layer_forward(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph, NodeId v,
                     const Tensor& prev_state, const std::optional<NeighborBatch>& batch,
                     std::span<const Tensor> neighbor_states);

// Recursive temporal encoder. Neighbor states at layer l-1 are computed at
// their own edge times with fresh neighbor draws; repeated (node, time,
// layer) states within one forward context are shared.
class NodeEncoder {
  public:
    NodeEncoder(Tape& tape, const TemporalHinGraph& graph, const ModelParams& params, Sampler& sampler)
        : tape_(tape), graph_(graph), params_(params), sampler_(sampler) {}

    Tensor encode(NodeId v, Time t) { return encode(v, t, params_.config().layers); }
    Tensor encode(NodeId v, Time t, int layer);

    Tape& tape() { return tape_; }
    const TemporalHinGraph& graph() const { return graph_; }
    const ModelParams& params() const { return params_; }

  private:
    struct Key {
        NodeId v;
        Time t;
        int layer;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = std::hash<NodeId>()(k.v) * 0x9e3779b97f4a7c15ULL;
            h ^= std::hash<Time>()(k.t) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            return h ^ (static_cast<std::size_t>(k.layer) << 1);
        }
    };

    Tape& tape_;
    const TemporalHinGraph& graph_;
    const ModelParams& params_;
    Sampler& sampler_;
    std::unordered_map<Key, Tensor, KeyHash> cache_;
};

// Sigmoid head over the mean of the event's node representations (anchor
// plus members, duplicates collapsed).
Tensor event_probability(NodeEncoder& encoder, const EventRecord& event);

// Sigmoid head over the concatenated (source, target) representations at t.
Tensor edge_probability(NodeEncoder& encoder, NodeId src, NodeId dst, Time t);

}  // namespace ctrl
