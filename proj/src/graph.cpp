#include "ctrl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace ctrl {

namespace {

constexpr Time kAlwaysExisting = std::numeric_limits<Time>::min();

struct RawNode {
    NodeId id;
    std::string type;
    std::vector<double> feature;
};

struct RawEdge {
    NodeId src, dst;
    std::string etype;
    Time time;
};

struct RawEventEdge {
    NodeId src, dst;
    std::string etype;
};

struct RawEvent {
    NodeId anchor;
    std::vector<NodeId> nodes;
    std::vector<RawEventEdge> edges;
    Time time;
};

// Undirected edge identity used to verify that event edges exist in the
// edge file at the event timestamp.
struct EdgeKey {
    NodeId lo, hi;
    std::string etype;
    Time time;
    bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& k) const {
        std::size_t h = std::hash<NodeId>()(k.lo);
        h = h * 1315423911u ^ std::hash<NodeId>()(k.hi);
        h = h * 1315423911u ^ std::hash<std::string>()(k.etype);
        h = h * 1315423911u ^ std::hash<Time>()(k.time);
        return h;
    }
};

Time parse_time(const nlohmann::json& j, const std::string& file, std::size_t line) {
    if (!j.is_number_integer()) {
        throw IngestError(file, line, "'time' must be an integer timestamp, got " + j.dump());
    }
    return j.get<Time>();
}

NodeId parse_id(const nlohmann::json& j, const char* key, const std::string& file, std::size_t line) {
    if (!j.is_number_integer()) {
        throw IngestError(file, line, std::string("'") + key + "' must be an integer id, got " + j.dump());
    }
    return j.get<NodeId>();
}

template <typename Fn>
void for_each_line(const std::string& path, Fn fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IngestError(path, lineno, std::string("invalid JSON: ") + e.what());
        }
        try {
            fn(j, lineno);
        } catch (const nlohmann::json::exception& e) {
            throw IngestError(path, lineno, std::string("malformed record: ") + e.what());
        }
    }
}

}  // namespace

class GraphBuilder {
  public:
    static IngestResult build(const std::string& nodes_path, const std::string& edges_path,
                              const std::string& events_path);
};

TypeId TemporalHinGraph::node_type_id(const std::string& name) const {
    auto it = node_type_ids_.find(name);
    if (it == node_type_ids_.end()) throw LookupError("unknown node type '" + name + "'");
    return it->second;
}

TypeId TemporalHinGraph::edge_type_id(const std::string& name) const {
    auto it = edge_type_ids_.find(name);
    if (it == edge_type_ids_.end()) throw LookupError("unknown edge type '" + name + "'");
    return it->second;
}

std::uint32_t TemporalHinGraph::dense(NodeId v) const {
    auto it = index_.find(v);
    if (it == index_.end()) throw LookupError("unknown node id " + std::to_string(v));
    return it->second;
}

TypeId TemporalHinGraph::node_type(NodeId v) const { return ntype_[dense(v)]; }

const std::vector<double>& TemporalHinGraph::feature(NodeId v) const { return feat_[dense(v)]; }

std::span<const AdjEntry> TemporalHinGraph::adjacency(NodeId v) const { return adj_[dense(v)]; }

std::size_t TemporalHinGraph::dynamic_degree(NodeId v, Time t) const {
    const auto& a = adj_[dense(v)];
    auto it = std::lower_bound(a.begin(), a.end(), t,
                               [](const AdjEntry& e, Time tt) { return e.time < tt; });
    return static_cast<std::size_t>(it - a.begin());
}

std::span<const AdjEntry> TemporalHinGraph::historical_neighbors(NodeId v, Time t) const {
    const auto& a = adj_[dense(v)];
    return std::span<const AdjEntry>(a.data(), dynamic_degree(v, t));
}

double TemporalHinGraph::time_span() const {
    return std::max<double>(1.0, static_cast<double>(tmax_ - tmin_));
}

std::size_t TemporalHinGraph::pool_size_before(TypeId node_type, Time t) const {
    const auto& pool = pools_.at(node_type);
    auto it = std::lower_bound(pool.birth.begin(), pool.birth.end(), t);
    return static_cast<std::size_t>(it - pool.birth.begin());
}

NodeId TemporalHinGraph::pool_node(TypeId node_type, std::size_t index) const {
    return pools_.at(node_type).id.at(index);
}

std::size_t TemporalHinGraph::pool_position(NodeId v) const {
    auto it = pool_pos_.find(v);
    if (it == pool_pos_.end()) throw LookupError("unknown node id " + std::to_string(v));
    return it->second;
}

std::optional<Time> TemporalHinGraph::first_edge_time(NodeId v) const {
    const auto& a = adj_[dense(v)];
    if (a.empty()) return std::nullopt;
    return a.front().time;
}

IngestResult GraphBuilder::build(const std::string& nodes_path, const std::string& edges_path,
                                 const std::string& events_path) {
    std::vector<RawNode> raw_nodes;
    std::vector<RawEdge> raw_edges;
    std::vector<RawEvent> raw_events;

    std::unordered_set<NodeId> seen_ids;
    for_each_line(nodes_path, [&](const nlohmann::json& j, std::size_t line) {
        RawNode n;
        n.id = parse_id(j.at("id"), "id", nodes_path, line);
        n.type = j.at("type").get<std::string>();
        if (n.type.empty()) throw IngestError(nodes_path, line, "empty node type");
        if (!seen_ids.insert(n.id).second) {
            throw IngestError(nodes_path, line, "duplicate node id " + std::to_string(n.id));
        }
        const auto& f = j.at("feature");
        if (!f.is_array()) throw IngestError(nodes_path, line, "'feature' must be an array");
        for (const auto& x : f) {
            if (!x.is_number()) throw IngestError(nodes_path, line, "feature values must be numbers");
            const double v = x.get<double>();
            if (!std::isfinite(v)) throw IngestError(nodes_path, line, "non-finite feature value");
            n.feature.push_back(v);
        }
        raw_nodes.push_back(std::move(n));
    });

    std::unordered_set<EdgeKey, EdgeKeyHash> edge_keys;
    for_each_line(edges_path, [&](const nlohmann::json& j, std::size_t line) {
        RawEdge e;
        e.src = parse_id(j.at("src"), "src", edges_path, line);
        e.dst = parse_id(j.at("dst"), "dst", edges_path, line);
        e.etype = j.at("etype").get<std::string>();
        e.time = parse_time(j.at("time"), edges_path, line);
        if (!seen_ids.count(e.src)) {
            throw IngestError(edges_path, line, "edge references missing node id " + std::to_string(e.src));
        }
        if (!seen_ids.count(e.dst)) {
            throw IngestError(edges_path, line, "edge references missing node id " + std::to_string(e.dst));
        }
        if (e.src == e.dst) {
            throw IngestError(edges_path, line, "self-loop on node " + std::to_string(e.src));
        }
        edge_keys.insert({std::min(e.src, e.dst), std::max(e.src, e.dst), e.etype, e.time});
        raw_edges.push_back(std::move(e));
    });

    for_each_line(events_path, [&](const nlohmann::json& j, std::size_t line) {
        RawEvent ev;
        ev.anchor = parse_id(j.at("anchor"), "anchor", events_path, line);
        ev.time = parse_time(j.at("time"), events_path, line);
        if (!seen_ids.count(ev.anchor)) {
            throw IngestError(events_path, line, "anchor references missing node id " + std::to_string(ev.anchor));
        }
        for (const auto& x : j.at("nodes")) {
            const NodeId v = parse_id(x, "nodes[]", events_path, line);
            if (!seen_ids.count(v)) {
                throw IngestError(events_path, line, "event references missing node id " + std::to_string(v));
            }
            ev.nodes.push_back(v);
        }
        std::unordered_set<NodeId> allowed(ev.nodes.begin(), ev.nodes.end());
        allowed.insert(ev.anchor);
        for (const auto& x : j.at("edges")) {
            if (!x.is_array() || x.size() != 3) {
                throw IngestError(events_path, line, "event edge must be [src, dst, etype]");
            }
            RawEventEdge e;
            e.src = parse_id(x[0], "edges[][0]", events_path, line);
            e.dst = parse_id(x[1], "edges[][1]", events_path, line);
            e.etype = x[2].get<std::string>();
            if (!allowed.count(e.src) || !allowed.count(e.dst)) {
                throw IngestError(events_path, line,
                                  "event edge endpoint outside the event's node set: " +
                                      std::to_string(e.src) + "-" + std::to_string(e.dst));
            }
            const EdgeKey key{std::min(e.src, e.dst), std::max(e.src, e.dst), e.etype, ev.time};
            if (!edge_keys.count(key)) {
                throw IngestError(events_path, line,
                                  "event edge " + std::to_string(e.src) + "-" + std::to_string(e.dst) +
                                      " ('" + e.etype + "') not present in the edge file at time " +
                                      std::to_string(ev.time));
            }
            ev.edges.push_back(std::move(e));
        }
        raw_events.push_back(std::move(ev));
    });

    TemporalHinGraph g;

    // Type ids in sorted name order, independent of file order.
    {
        std::vector<std::string> names;
        for (const auto& n : raw_nodes) names.push_back(n.type);
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        g.node_type_names_ = names;
        for (std::size_t i = 0; i < names.size(); ++i) g.node_type_ids_[names[i]] = static_cast<TypeId>(i);
    }
    {
        std::vector<std::string> names;
        for (const auto& e : raw_edges) names.push_back(e.etype);
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        g.edge_type_names_ = names;
        for (std::size_t i = 0; i < names.size(); ++i) g.edge_type_ids_[names[i]] = static_cast<TypeId>(i);
    }
    if (g.node_type_names_.size() + g.edge_type_names_.size() <= 2) {
        throw IngestError(edges_path, 0,
                          "graph is not heterogeneous: " + std::to_string(g.node_type_names_.size()) +
                              " node types + " + std::to_string(g.edge_type_names_.size()) +
                              " edge types <= 2");
    }

    std::sort(raw_nodes.begin(), raw_nodes.end(),
              [](const RawNode& a, const RawNode& b) { return a.id < b.id; });
    g.ids_.reserve(raw_nodes.size());
    g.feature_width_.assign(g.node_type_names_.size(), std::numeric_limits<std::size_t>::max());
    for (auto& n : raw_nodes) {
        const auto idx = static_cast<std::uint32_t>(g.ids_.size());
        const TypeId t = g.node_type_ids_.at(n.type);
        auto& width = g.feature_width_[t];
        if (width == std::numeric_limits<std::size_t>::max()) {
            width = n.feature.size();
        } else if (width != n.feature.size()) {
            throw IngestError(nodes_path, 0,
                              "ragged features for node type '" + n.type + "': node " +
                                  std::to_string(n.id) + " has width " + std::to_string(n.feature.size()) +
                                  ", expected " + std::to_string(width));
        }
        g.index_[n.id] = idx;
        g.ids_.push_back(n.id);
        g.ntype_.push_back(t);
        g.feat_.push_back(std::move(n.feature));
    }
    for (auto& w : g.feature_width_)
        if (w == std::numeric_limits<std::size_t>::max()) w = 0;

    g.adj_.resize(g.ids_.size());
    bool any_edge = false;
    for (const auto& e : raw_edges) {
        const TypeId et = g.edge_type_ids_.at(e.etype);
        g.adj_[g.index_.at(e.src)].push_back({e.dst, et, e.time});
        g.adj_[g.index_.at(e.dst)].push_back({e.src, et, e.time});
        if (!any_edge) {
            g.tmin_ = g.tmax_ = e.time;
            any_edge = true;
        } else {
            g.tmin_ = std::min(g.tmin_, e.time);
            g.tmax_ = std::max(g.tmax_, e.time);
        }
    }
    g.edge_count_ = raw_edges.size();
    for (auto& a : g.adj_) {
        std::sort(a.begin(), a.end(), [](const AdjEntry& x, const AdjEntry& y) {
            if (x.time != y.time) return x.time < y.time;
            if (x.neighbor != y.neighbor) return x.neighbor < y.neighbor;
            return x.etype < y.etype;
        });
    }

    // Existence pools per node type, sorted by (first edge time, id).
    g.pools_.resize(g.node_type_names_.size());
    {
        std::vector<std::pair<Time, NodeId>> tmp;
        for (TypeId t = 0; t < static_cast<TypeId>(g.pools_.size()); ++t) {
            tmp.clear();
            for (std::size_t i = 0; i < g.ids_.size(); ++i) {
                if (g.ntype_[i] != t) continue;
                const Time birth = g.adj_[i].empty() ? kAlwaysExisting : g.adj_[i].front().time;
                tmp.emplace_back(birth, g.ids_[i]);
            }
            std::sort(tmp.begin(), tmp.end());
            auto& pool = g.pools_[t];
            for (std::size_t k = 0; k < tmp.size(); ++k) {
                pool.birth.push_back(tmp[k].first);
                pool.id.push_back(tmp[k].second);
                g.pool_pos_[tmp[k].second] = k;
            }
        }
    }

    // Canonical events: members exclude the anchor and are deduplicated in
    // first-appearance order.
    std::vector<EventRecord> events;
    events.reserve(raw_events.size());
    for (const auto& rev : raw_events) {
        EventRecord ev;
        ev.anchor = rev.anchor;
        ev.time = rev.time;
        std::unordered_set<NodeId> seen{rev.anchor};
        for (NodeId v : rev.nodes)
            if (seen.insert(v).second) ev.members.push_back(v);
        for (const auto& e : rev.edges) ev.edges.push_back({e.src, e.dst, g.edge_type_ids_.at(e.etype)});
        events.push_back(std::move(ev));
    }

    return {std::move(g), std::move(events)};
}

IngestResult ingest_files(const std::string& nodes_path, const std::string& edges_path,
                          const std::string& events_path) {
    return GraphBuilder::build(nodes_path, edges_path, events_path);
}

TemporalSplit temporal_split(std::vector<EventRecord> events, double train_frac, double valid_frac) {
    if (events.empty()) throw ContractError("temporal split: no events");
    if (!(train_frac > 0.0) || !(valid_frac > 0.0) || !(train_frac + valid_frac < 1.0)) {
        throw ContractError("temporal split: fractions must satisfy 0 < train, valid and train + valid < 1");
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const EventRecord& a, const EventRecord& b) { return a.time < b.time; });
    const std::size_t n = events.size();
    auto cut = [&](double frac) {
        // nudge before the floor so 0.7 + 0.1 style sums land on the intended index
        auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * frac + 1e-9));
        k = std::min(k, n);
        if (k == 0 || k == n) return k;
        // Ties with the boundary timestamp belong to the later split.
        const Time boundary = events[k].time;
        while (k > 0 && events[k - 1].time == boundary) --k;
        return k;
    };
    const std::size_t k1 = cut(train_frac);
    const std::size_t k2 = std::max(cut(train_frac + valid_frac), k1);
    if (k1 == 0 || k1 >= k2 || k2 >= n) {
        throw ContractError(
            "temporal split: degenerate boundary leaves an empty split "
            "(train " + std::to_string(k1) + ", valid " + std::to_string(k2 - k1) + ", test " +
            std::to_string(n - k2) + " of " + std::to_string(n) + ")");
    }
    TemporalSplit split;
    split.train.assign(events.begin(), events.begin() + static_cast<std::ptrdiff_t>(k1));
    split.valid.assign(events.begin() + static_cast<std::ptrdiff_t>(k1),
                       events.begin() + static_cast<std::ptrdiff_t>(k2));
    split.test.assign(events.begin() + static_cast<std::ptrdiff_t>(k2), events.end());
    split.train_end = split.valid.front().time;
    split.valid_end = split.test.front().time;
    return split;
}

std::unordered_set<NodeId> event_node_set(std::span<const EventRecord> events) {
    std::unordered_set<NodeId> out;
    for (const auto& ev : events) {
        out.insert(ev.anchor);
        out.insert(ev.members.begin(), ev.members.end());
    }
    return out;
}

}  // namespace ctrl
