#include "ctrl/model.hpp"

#include <bit>
#include <cmath>

namespace ctrl {

std::size_t degree_bucket(std::size_t degree, int buckets) {
    const auto raw = static_cast<std::size_t>(std::bit_width(degree + 1) - 1);
    return std::min(raw, static_cast<std::size_t>(buckets - 1));
}

ModelParams::ModelParams(const TemporalHinGraph& graph, const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
    if (config.dim <= 0 || config.heads <= 0 || config.dim % config.heads != 0) {
        throw ConfigError("model: dim " + std::to_string(config.dim) +
                          " must be positive and divisible by heads " + std::to_string(config.heads));
    }
    if (config.layers < 1) throw ConfigError("model: layers must be >= 1");
    if (config.neighbors < 1) throw ConfigError("model: neighbors must be >= 1");
    if (config.use_centrality && config.degree_buckets < 1) {
        throw ConfigError("model: degree_buckets must be >= 1");
    }

    RngStream rng(seed);
    const auto d = static_cast<std::size_t>(config.dim);
    auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
        Linear l;
        l.in = in;
        l.out = out;
        l.weight = store_.add(name + "/weight", Tensor::param_uniform({in, out}, in, rng));
        l.bias = store_.add(name + "/bias", Tensor::param_zeros({out}));
        return l;
    };
    auto square = [&](const std::string& name) {
        return store_.add(name, Tensor::param_uniform({d, d}, d, rng));
    };

    for (TypeId a = 0; a < static_cast<TypeId>(graph.node_type_count()); ++a) {
        const std::string& name = graph.node_type_name(a);
        ffn_v_.push_back(linear("ffn_v/" + name, d, d));
        ffn_q_.push_back(linear("ffn_q/" + name, d, d));
        ffn_k_.push_back(linear("ffn_k/" + name, d, d));
        adapt_.push_back(linear("adapt/" + name, d, d));
        feat_proj_.push_back(linear("feat_proj/" + name, graph.feature_width(a), d));
        if (config.use_centrality) {
            beta_.push_back(store_.add("beta/" + name, Tensor::param_zeros({1, 1})));
        }
    }
    for (TypeId r = 0; r < static_cast<TypeId>(graph.edge_type_count()); ++r) {
        const std::string& name = graph.edge_type_name(r);
        w_msg_.push_back(square("w_msg/" + name));
        w_key_.push_back(square("w_key/" + name));
    }

    alpha_logits_ = store_.add("alpha_logits",
                               Tensor::param_zeros({static_cast<std::size_t>(alpha_count())}));
    if (config.use_centrality) {
        degree_table_ = store_.add(
            "degree_table",
            Tensor::param_uniform({static_cast<std::size_t>(config.degree_buckets), d}, d, rng));
    }
    if (config.hawkes_mode == HawkesMode::kEdgeBased) {
        decay_mlp_.hidden = linear("decay_mlp/hidden", 2 * d, d);
        decay_mlp_.output = linear("decay_mlp/out", d, 1);
    } else {
        single_delta_ = store_.add("single_delta", Tensor::param_full({1, 1}, 0.5));
    }
    mlp_event_.hidden = linear("mlp_event/hidden", d, d);
    mlp_event_.output = linear("mlp_event/out", d, 1);
    mlp_edge_.hidden = linear("mlp_edge/hidden", 2 * d, d);
    mlp_edge_.output = linear("mlp_edge/out", d, 1);
}

Tensor input_embedding(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                       NodeId v, Time t) {
    const TypeId a = graph.node_type(v);
    const auto& raw = graph.feature(v);
    const Linear& proj = params.feat_proj(a);
    if (raw.size() != proj.in) {
        throw ContractError("input embedding: node " + std::to_string(v) + " has feature width " +
                            std::to_string(raw.size()) + ", projector expects " +
                            std::to_string(proj.in));
    }
    Tensor x = Tensor::from({1, raw.size()}, raw);
    Tensor h = proj.apply(tape, x);
    if (params.config().use_centrality) {
        const std::size_t bucket =
            degree_bucket(graph.dynamic_degree(v, t), params.config().degree_buckets);
        h = tape.add(h, tape.select_row(params.degree_table(), bucket));
    }
    return h;
}

std::vector<Tensor> pass_messages(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                                  const NeighborBatch& batch, std::span<const Tensor> neighbor_states) {
    if (batch.entries.size() != neighbor_states.size()) {
        throw ContractError("pass_messages: batch and state counts differ");
    }
    std::vector<Tensor> messages;
    messages.reserve(batch.entries.size());
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const auto& e = batch.entries[i];
        const Tensor mapped = params.ffn_v(graph.node_type(e.neighbor)).apply(tape, neighbor_states[i]);
        messages.push_back(tape.matmul(mapped, params.w_msg(e.etype)));
    }
    return messages;
}

QkProjection project_qk(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                        const Tensor& target_state, const NeighborBatch& batch,
                        std::span<const Tensor> neighbor_states) {
    if (batch.entries.empty()) throw ContractError("project_qk: empty neighbor batch");
    QkProjection qk;
    qk.q = params.ffn_q(graph.node_type(batch.target)).apply(tape, target_state);
    qk.k.reserve(batch.entries.size());
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const auto& e = batch.entries[i];
        const Tensor mapped = params.ffn_k(graph.node_type(e.neighbor)).apply(tape, neighbor_states[i]);
        qk.k.push_back(tape.matmul(mapped, params.w_key(e.etype)));
    }
    qk.k_rows = tape.stack_rows(qk.k);
    return qk;
}

std::vector<Tensor> attention_weights(Tape& tape, const ModelParams& params, const QkProjection& qk) {
    const int heads = params.config().heads;
    const auto d = static_cast<std::size_t>(params.config().dim);
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = tape.slice_last(qk.q, static_cast<std::size_t>(h) * dh, dh);
        const Tensor kh = tape.slice_last(qk.k_rows, static_cast<std::size_t>(h) * dh, dh);
        const Tensor scores = tape.affine(tape.matmul(qh, tape.transpose(kh)), inv_scale, 0.0);
        out.push_back(tape.softmax(scores));
    }
    return out;
}

Tensor hawkes_weights(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                      const QkProjection& qk, const NeighborBatch& batch) {
    if (batch.entries.empty()) throw ContractError("hawkes_weights: empty neighbor batch");
    const double span = graph.time_span();
    std::vector<Tensor> kappa;
    kappa.reserve(batch.entries.size());
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const auto& e = batch.entries[i];
        if (e.time >= batch.time) {
            throw ContractError("hawkes_weights: causality violation, neighbor edge at time " +
                                std::to_string(e.time) + " is not before target time " +
                                std::to_string(batch.time));
        }
        Tensor delta;
        if (params.config().hawkes_mode == HawkesMode::kEdgeBased) {
            const Tensor pair = tape.concat(std::array<Tensor, 2>{qk.q, qk.k[i]});
            delta = tape.relu(params.decay_mlp().apply(tape, pair));
        } else {
            delta = params.single_delta();
        }
        const double dt = static_cast<double>(batch.time - e.time) / span;
        kappa.push_back(tape.exp(tape.affine(delta, -dt, 0.0)));
    }
    return tape.softmax(tape.concat(kappa));
}

Tensor centrality_weights(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph,
                          const NeighborBatch& batch) {
    if (!params.config().use_centrality) {
        throw ConfigError("centrality_weights: centrality is ablated in this configuration");
    }
    if (batch.entries.empty()) throw ContractError("centrality_weights: empty neighbor batch");
    std::vector<Tensor> logits;
    logits.reserve(batch.entries.size());
    for (const auto& e : batch.entries) {
        const auto degree = static_cast<double>(graph.dynamic_degree(e.neighbor, batch.time));
        logits.push_back(tape.affine(params.beta(graph.node_type(e.neighbor)), degree, 0.0));
    }
    return tape.softmax(tape.concat(logits));
}

Tensor layer_forward(Tape& tape, const ModelParams& params, const TemporalHinGraph& graph, NodeId v,
                     const Tensor& prev_state, const std::optional<NeighborBatch>& batch,
                     std::span<const Tensor> neighbor_states) {
    const auto d = static_cast<std::size_t>(params.config().dim);
    Tensor aggregated;
    if (!batch.has_value() || batch->entries.empty()) {
        aggregated = Tensor::zeros({1, d});
    } else {
        const auto messages = pass_messages(tape, params, graph, *batch, neighbor_states);
        const QkProjection qk = project_qk(tape, params, graph, prev_state, *batch, neighbor_states);
        const auto attn = attention_weights(tape, params, qk);
        const Tensor lambda = hawkes_weights(tape, params, graph, qk, *batch);
        Tensor omega;
        if (params.config().use_centrality) omega = centrality_weights(tape, params, graph, *batch);

        const Tensor alpha = tape.softmax(params.alpha_logits());
        const Tensor a_attn = tape.slice_last(alpha, 0, 1);
        const Tensor a_hawkes = tape.slice_last(alpha, 1, 1);
        Tensor a_cent;
        if (params.config().use_centrality) a_cent = tape.slice_last(alpha, 2, 1);

        const Tensor stacked = tape.stack_rows(messages);
        const int heads = params.config().heads;
        const std::size_t dh = d / static_cast<std::size_t>(heads);
        std::vector<Tensor> head_out;
        head_out.reserve(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            Tensor w = tape.add(tape.scale_by(attn[static_cast<std::size_t>(h)], a_attn),
                                tape.scale_by(lambda, a_hawkes));
            if (params.config().use_centrality) w = tape.add(w, tape.scale_by(omega, a_cent));
            const Tensor chunk = tape.slice_last(stacked, static_cast<std::size_t>(h) * dh, dh);
            head_out.push_back(tape.matmul(w, chunk));
        }
        aggregated = tape.concat(head_out);
    }
    return tape.add(prev_state, params.adapt(graph.node_type(v)).apply(tape, aggregated));
}

Tensor NodeEncoder::encode(NodeId v, Time t, int layer) {
    const Key key{v, t, layer};
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    Tensor h;
    if (layer == 0) {
        h = input_embedding(tape_, params_, graph_, v, t);
    } else {
        const Tensor prev = encode(v, t, layer - 1);
        auto batch = sampler_.sample_neighbors(v, t, static_cast<std::size_t>(params_.config().neighbors));
        std::vector<Tensor> states;
        if (batch) {
            states.reserve(batch->entries.size());
            for (const auto& e : batch->entries) states.push_back(encode(e.neighbor, e.time, layer - 1));
        }
        h = layer_forward(tape_, params_, graph_, v, prev, batch, states);
    }
    cache_.emplace(key, h);
    return h;
}

Tensor event_probability(NodeEncoder& encoder, const EventRecord& event) {
    // The event's node set: anchor plus members, first occurrence wins.
    std::vector<NodeId> nodes;
    nodes.push_back(event.anchor);
    for (NodeId m : event.members) {
        bool seen = false;
        for (NodeId n : nodes) {
            if (n == m) {
                seen = true;
                break;
            }
        }
        if (!seen) nodes.push_back(m);
    }
    if (nodes.empty()) throw ContractError("event probability: event has no nodes");

    Tape& tape = encoder.tape();
    std::vector<Tensor> states;
    states.reserve(nodes.size());
    for (NodeId v : nodes) states.push_back(encoder.encode(v, event.time));
    const Tensor pooled = tape.mean_rows(tape.stack_rows(states));
    return tape.sigmoid(encoder.params().mlp_event().apply(tape, pooled));
}

Tensor edge_probability(NodeEncoder& encoder, NodeId src, NodeId dst, Time t) {
    Tape& tape = encoder.tape();
    const Tensor hs = encoder.encode(src, t);
    const Tensor hd = encoder.encode(dst, t);
    const Tensor pair = tape.concat(std::array<Tensor, 2>{hs, hd});
    return tape.sigmoid(encoder.params().mlp_edge().apply(tape, pair));
}

}  // namespace ctrl
