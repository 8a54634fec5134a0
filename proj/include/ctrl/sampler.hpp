#pragma once

#include <optional>

#include "ctrl/graph.hpp"
#include "ctrl/rng.hpp"

namespace ctrl {

// A fixed-size draw of historical neighbors, sampled uniformly with
// replacement. Every entry strictly predates the target time.
struct NeighborBatch {
    struct Entry {
        NodeId neighbor;
        TypeId etype;
        Time time;
    };
    NodeId target = 0;
    Time time = 0;
    std::vector<Entry> entries;
};

struct TimedEdge {
    NodeId src;
    NodeId dst;
    TypeId etype;
    Time time;
};

// Per-worker sampling state over an immutable graph. The same seed yields
// the same draw sequence for an entire epoch.
class Sampler {
  public:
    Sampler(const TemporalHinGraph& graph, std::uint64_t seed) : graph_(&graph), rng_(seed) {}

    // nullopt marks an empty historical neighborhood; the model then uses
    // a zero aggregated message.
    std::optional<NeighborBatch> sample_neighbors(NodeId v, Time t, std::size_t n);

    // Keeps the anchor, replaces every other member with a uniform node of
    // the same type existing before the event time, and rewrites the edge
    // pattern through that mapping. Draws may coincide with the original
    // members.
    EventRecord sample_negative_event(const EventRecord& event);

    // Replaces the target slot with a uniform node of the same type
    // existing before t, never the original target.
    TimedEdge sample_negative_edge(const TimedEdge& edge);

    RngStream& rng() { return rng_; }

  private:
    const TemporalHinGraph* graph_;
    RngStream rng_;
};

}  // namespace ctrl
