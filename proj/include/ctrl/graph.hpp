#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ctrl/errors.hpp"

namespace ctrl {

using NodeId = std::int64_t;
using Time = std::int64_t;
using TypeId = std::int32_t;

struct AdjEntry {
    NodeId neighbor;
    TypeId etype;
    Time time;
};

struct MemberEdge {
    NodeId src;
    NodeId dst;
    TypeId etype;
};

// A timestamped subgraph: the unit of graph evolution and of training.
// `members` never contains the anchor; all member edges carry the event
// timestamp in the underlying edge store.
struct EventRecord {
    NodeId anchor = 0;
    std::vector<NodeId> members;
    std::vector<MemberEdge> edges;
    Time time = 0;
};

// Immutable typed temporal graph. Node and edge type ids are assigned in
// lexicographic name order; adjacency lists are sorted by time so degree
// and history queries are prefix lookups. Edges are undirected and
// mirrored into both endpoint lists.
class TemporalHinGraph {
  public:
    bool has_node(NodeId v) const { return index_.count(v) > 0; }
    TypeId node_type(NodeId v) const;
    const std::vector<double>& feature(NodeId v) const;
    std::span<const AdjEntry> adjacency(NodeId v) const;

    // Count of edges incident to v strictly before t.
    std::size_t dynamic_degree(NodeId v, Time t) const;
    // Adjacency prefix with edge time strictly before t, in time order.
    std::span<const AdjEntry> historical_neighbors(NodeId v, Time t) const;

    std::size_t node_count() const { return ids_.size(); }
    std::size_t edge_count() const { return edge_count_; }
    std::size_t node_type_count() const { return node_type_names_.size(); }
    std::size_t edge_type_count() const { return edge_type_names_.size(); }
    const std::string& node_type_name(TypeId t) const { return node_type_names_.at(t); }
    const std::string& edge_type_name(TypeId t) const { return edge_type_names_.at(t); }
    TypeId node_type_id(const std::string& name) const;
    TypeId edge_type_id(const std::string& name) const;
    std::size_t feature_width(TypeId node_type) const { return feature_width_.at(node_type); }
    const std::vector<NodeId>& node_ids() const { return ids_; }

    std::pair<Time, Time> time_range() const { return {tmin_, tmax_}; }
    double time_span() const;

    // Existence pool: a node exists at t once its first edge is strictly
    // in the past; nodes with no edges at all count as always existing.
    // Negative sampling draws from these prefixes so nothing from the
    // future leaks backwards.
    std::size_t pool_size_before(TypeId node_type, Time t) const;
    NodeId pool_node(TypeId node_type, std::size_t index) const;
    // Position of v inside its own type pool.
    std::size_t pool_position(NodeId v) const;
    std::optional<Time> first_edge_time(NodeId v) const;

  private:
    friend class GraphBuilder;

    std::vector<std::string> node_type_names_, edge_type_names_;
    std::unordered_map<std::string, TypeId> node_type_ids_, edge_type_ids_;
    std::unordered_map<NodeId, std::uint32_t> index_;
    std::vector<NodeId> ids_;  // dense index -> id, sorted by id
    std::vector<TypeId> ntype_;
    std::vector<std::vector<double>> feat_;
    std::vector<std::vector<AdjEntry>> adj_;
    std::vector<std::size_t> feature_width_;
    Time tmin_ = 0, tmax_ = 0;
    std::size_t edge_count_ = 0;

    struct Pool {
        std::vector<Time> birth;  // sorted; INT64_MIN marks edge-free nodes
        std::vector<NodeId> id;
    };
    std::vector<Pool> pools_;
    std::unordered_map<NodeId, std::size_t> pool_pos_;

    std::uint32_t dense(NodeId v) const;
};

struct IngestResult {
    TemporalHinGraph graph;
    std::vector<EventRecord> events;
};

// Parses and validates the three JSONL files. Every malformed line is
// reported with its file and line number.
IngestResult ingest_files(const std::string& nodes_path, const std::string& edges_path,
                          const std::string& events_path);

struct TemporalSplit {
    std::vector<EventRecord> train, valid, test;
    Time train_end = 0;  // first validation timestamp
    Time valid_end = 0;  // first test timestamp
};

// Sorts events by time and cuts at the fraction boundaries. Events tied
// with a boundary timestamp fall into the later split; an empty split is
// an error rather than a silent overlap.
TemporalSplit temporal_split(std::vector<EventRecord> events, double train_frac, double valid_frac);

// Every node touched by the given events (anchors and members).
std::unordered_set<NodeId> event_node_set(std::span<const EventRecord> events);

}  // namespace ctrl
