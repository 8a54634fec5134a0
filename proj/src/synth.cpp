#include "ctrl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "ctrl/rng.hpp"

namespace ctrl {

namespace {

std::vector<double> jittered_feature(const std::vector<double>& centroid, double jitter,
                                     RngStream& rng) {
    std::vector<double> f(centroid.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = centroid[i] + jitter * rng.normal();
    return f;
}

std::vector<double> unit_centroid(int width, RngStream& rng) {
    std::vector<double> c(static_cast<std::size_t>(width));
    double norm = 0.0;
    for (auto& v : c) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& v : c) v /= norm;
    }
    return c;
}

}  // namespace

void SynthConfig::validate() const {
    if (anchor_type.empty()) throw GenerationError("synth: anchor type name is empty");
    if (anchor_feat_width < 0) throw GenerationError("synth: anchor feature width < 0");
    if (num_events < 1) throw GenerationError("synth: num_events must be >= 1");
    if (events_per_anchor < 1) throw GenerationError("synth: events_per_anchor must be >= 1");
    if (time_span < 1) throw GenerationError("synth: time_span must be >= 1");
    if (communities < 1) throw GenerationError("synth: communities must be >= 1");
    if (!(noise >= 0.0 && noise <= 1.0)) throw GenerationError("synth: noise must lie in [0, 1]");
    if (!(feature_jitter >= 0.0)) throw GenerationError("synth: feature_jitter must be >= 0");
    if (slots.empty()) throw GenerationError("synth: event template has no member slots");

    std::set<std::string> member_names;
    for (const auto& m : member_types) {
        if (m.name.empty()) throw GenerationError("synth: member type name is empty");
        if (m.name == anchor_type) {
            throw GenerationError("synth: member type '" + m.name + "' collides with the anchor type");
        }
        if (!member_names.insert(m.name).second) {
            throw GenerationError("synth: duplicate member type '" + m.name + "'");
        }
        if (m.count < 2) {
            throw GenerationError("synth: member type '" + m.name + "' needs at least 2 nodes");
        }
        if (m.feat_width < 0) throw GenerationError("synth: negative feature width for '" + m.name + "'");
    }
    std::set<std::string> edge_names;
    for (const auto& s : slots) {
        if (s.count < 1) throw GenerationError("synth: slot for '" + s.member_type + "' has count < 1");
        if (s.edge_type.empty()) throw GenerationError("synth: slot edge type name is empty");
        if (s.member_type != anchor_type && !member_names.count(s.member_type)) {
            throw GenerationError("synth: slot references unknown member type '" + s.member_type + "'");
        }
        edge_names.insert(s.edge_type);
    }
    // |node types| + |edge types| > 2 keeps the output heterogeneous.
    if (1 + member_types.size() + edge_names.size() <= 2) {
        throw GenerationError("synth: schema is not heterogeneous");
    }
}

SynthMeta generate(const SynthConfig& config, const std::string& nodes_path,
                   const std::string& edges_path, const std::string& events_path) {
    config.validate();
    RngStream rng(config.seed);
    const int k = config.communities;

    SynthMeta meta;
    meta.event_count = static_cast<std::size_t>(config.num_events);
    meta.anchor_count = (static_cast<std::size_t>(config.num_events) +
                         static_cast<std::size_t>(config.events_per_anchor) - 1) /
                        static_cast<std::size_t>(config.events_per_anchor);

    struct NodeOut {
        NodeId id;
        std::string type;
        std::vector<double> feature;
    };
    std::vector<NodeOut> nodes;

    // Member pools, round-robin community assignment for balance.
    std::unordered_map<std::string, std::vector<NodeId>> pool_all;
    std::unordered_map<std::string, std::vector<std::vector<NodeId>>> pool_by_comm;
    NodeId next_id = 0;
    for (const auto& mt : config.member_types) {
        auto& all = pool_all[mt.name];
        auto& by_comm = pool_by_comm[mt.name];
        by_comm.assign(static_cast<std::size_t>(k), {});
        std::vector<std::vector<double>> centroids;
        for (int c = 0; c < k; ++c) centroids.push_back(unit_centroid(mt.feat_width, rng));
        for (int i = 0; i < mt.count; ++i) {
            const int comm = i % k;
            const NodeId id = next_id++;
            nodes.push_back({id, mt.name, jittered_feature(centroids[comm], config.feature_jitter, rng)});
            meta.community[id] = comm;
            all.push_back(id);
            by_comm[static_cast<std::size_t>(comm)].push_back(id);
        }
    }

    // Anchors: one per burst of events_per_anchor consecutive events.
    std::vector<NodeId> anchors;
    std::vector<int> anchor_comm;
    {
        std::vector<std::vector<double>> centroids;
        for (int c = 0; c < k; ++c) centroids.push_back(unit_centroid(config.anchor_feat_width, rng));
        for (std::size_t a = 0; a < meta.anchor_count; ++a) {
            const int comm = static_cast<int>(a % static_cast<std::size_t>(k));
            const NodeId id = next_id++;
            nodes.push_back(
                {id, config.anchor_type, jittered_feature(centroids[comm], config.feature_jitter, rng)});
            meta.community[id] = comm;
            anchors.push_back(id);
            anchor_comm.push_back(comm);
        }
    }
    meta.node_count = nodes.size();

    // Event times: a homogeneous-rate arrival process over [0, span].
    std::vector<Time> times(static_cast<std::size_t>(config.num_events));
    for (auto& t : times) {
        t = static_cast<Time>(rng.uniform_index(static_cast<std::uint64_t>(config.time_span) + 1));
    }
    std::sort(times.begin(), times.end());

    struct EventOut {
        NodeId anchor;
        std::vector<NodeId> members;
        std::vector<std::pair<NodeId, std::string>> edges;  // (member, edge type)
        Time time;
    };
    std::vector<EventOut> events;
    events.reserve(times.size());

    // Anchors of earlier bursts, usable as citation-style member slots.
    auto debuted_anchors_before = [&](std::size_t event_index) {
        std::size_t n = 0;
        const Time t = times[event_index];
        while (n < meta.anchor_count && times[n * static_cast<std::size_t>(config.events_per_anchor)] < t)
            ++n;
        return n;
    };

    for (std::size_t e = 0; e < times.size(); ++e) {
        EventOut ev;
        ev.time = times[e];
        const std::size_t a = e / static_cast<std::size_t>(config.events_per_anchor);
        ev.anchor = anchors[a];
        const int comm = anchor_comm[a];

        std::unordered_set<NodeId> picked;
        for (const auto& slot : config.slots) {
            for (int c = 0; c < slot.count; ++c) {
                NodeId member;
                if (slot.member_type == config.anchor_type) {
                    // Citation-style slot: only anchors of earlier bursts
                    // qualify, and the earliest events have none to cite.
                    const std::size_t avail = debuted_anchors_before(e);
                    if (avail == 0) continue;
                    // Community targeting over the debuted prefix.
                    std::vector<NodeId> in_comm;
                    for (std::size_t j = 0; j < avail; ++j) {
                        if (anchor_comm[j] == comm) in_comm.push_back(anchors[j]);
                    }
                    const bool planted = rng.uniform_real() >= config.noise && !in_comm.empty();
                    member = planted ? in_comm[rng.uniform_index(in_comm.size())]
                                     : anchors[rng.uniform_index(avail)];
                    ++meta.total_draws;
                    if (meta.community.at(member) == comm) ++meta.within_community_draws;
                } else {
                    const auto& all = pool_all.at(slot.member_type);
                    const auto& by_comm = pool_by_comm.at(slot.member_type)[static_cast<std::size_t>(comm)];
                    const bool planted = rng.uniform_real() >= config.noise && !by_comm.empty();
                    member = planted ? by_comm[rng.uniform_index(by_comm.size())]
                                     : all[rng.uniform_index(all.size())];
                    ++meta.total_draws;
                    if (meta.community.at(member) == comm) ++meta.within_community_draws;
                }
                if (member == ev.anchor) continue;  // no self-loops
                if (picked.insert(member).second) {
                    ev.members.push_back(member);
                    ev.edges.emplace_back(member, slot.edge_type);
                }
            }
        }
        events.push_back(std::move(ev));
    }

    auto open = [](const std::string& path) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path + "'");
        return out;
    };

    {
        auto out = open(nodes_path);
        for (const auto& n : nodes) {
            nlohmann::json j;
            j["id"] = n.id;
            j["type"] = n.type;
            j["feature"] = n.feature;
            out << j.dump() << '\n';
        }
    }
    {
        auto out = open(edges_path);
        for (const auto& ev : events) {
            for (const auto& [member, etype] : ev.edges) {
                nlohmann::json j;
                j["src"] = ev.anchor;
                j["dst"] = member;
                j["etype"] = etype;
                j["time"] = ev.time;
                out << j.dump() << '\n';
            }
        }
    }
    {
        auto out = open(events_path);
        for (const auto& ev : events) {
            nlohmann::json j;
            j["anchor"] = ev.anchor;
            j["nodes"] = ev.members;
            auto edges = nlohmann::json::array();
            for (const auto& [member, etype] : ev.edges) {
                edges.push_back(nlohmann::json::array({ev.anchor, member, etype}));
            }
            j["edges"] = std::move(edges);
            j["time"] = ev.time;
            out << j.dump() << '\n';
        }
    }
    return meta;
}

}  // namespace ctrl
