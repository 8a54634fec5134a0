#include "ctrl/sampler.hpp"

#include <unordered_map>

namespace ctrl {

std::optional<NeighborBatch> Sampler::sample_neighbors(NodeId v, Time t, std::size_t n) {
    if (n == 0) throw ContractError("sample_neighbors: n must be >= 1");
    const auto hist = graph_->historical_neighbors(v, t);
    if (hist.empty()) return std::nullopt;
    NeighborBatch batch;
    batch.target = v;
    batch.time = t;
    batch.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = hist[rng_.uniform_index(hist.size())];
        batch.entries.push_back({e.neighbor, e.etype, e.time});
    }
    return batch;
}

EventRecord Sampler::sample_negative_event(const EventRecord& event) {
    EventRecord neg;
    neg.anchor = event.anchor;
    neg.time = event.time;
    std::unordered_map<NodeId, NodeId> replacement{{event.anchor, event.anchor}};
    neg.members.reserve(event.members.size());
    for (NodeId m : event.members) {
        auto it = replacement.find(m);
        if (it == replacement.end()) {
            const TypeId t = graph_->node_type(m);
            const std::size_t pool = graph_->pool_size_before(t, event.time);
            if (pool == 0) {
                throw SamplingError("negative event: no node of type '" + graph_->node_type_name(t) +
                                    "' exists before time " + std::to_string(event.time));
            }
            const NodeId draw = graph_->pool_node(t, rng_.uniform_index(pool));
            it = replacement.emplace(m, draw).first;
        }
        neg.members.push_back(it->second);
    }
    neg.edges.reserve(event.edges.size());
    for (const auto& e : event.edges) {
        neg.edges.push_back({replacement.at(e.src), replacement.at(e.dst), e.etype});
    }
    return neg;
}

TimedEdge Sampler::sample_negative_edge(const TimedEdge& edge) {
    const TypeId t = graph_->node_type(edge.dst);
    const std::size_t pool = graph_->pool_size_before(t, edge.time);
    const std::size_t pos = graph_->pool_position(edge.dst);
    const bool excluded = pos < pool;  // original target inside the candidate prefix
    const std::size_t candidates = pool - (excluded ? 1 : 0);
    if (candidates == 0) {
        throw SamplingError("negative edge: no candidate of type '" + graph_->node_type_name(t) +
                            "' other than node " + std::to_string(edge.dst) + " exists before time " +
                            std::to_string(edge.time));
    }
    std::size_t k = rng_.uniform_index(candidates);
    if (excluded && k >= pos) ++k;
    return {edge.src, graph_->pool_node(t, k), edge.etype, edge.time};
}

}  // namespace ctrl
