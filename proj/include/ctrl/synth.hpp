#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ctrl/graph.hpp"

namespace ctrl {

struct MemberTypeSpec {
    std::string name;
    int count = 0;
    int feat_width = 0;
};

struct SlotSpec {
    std::string member_type;
    int count = 0;
    std::string edge_type;
};

// Deterministic community-planted temporal HIN generator. Anchors debut in
// bursts of `events_per_anchor` consecutive events; member slots draw from
// the anchor's community with probability 1 - noise and uniformly
// otherwise, so link prediction has a known learnable signal that the
// noise knob can dial down to chance.
struct SynthConfig {
    std::string anchor_type = "paper";
    int anchor_feat_width = 16;
    std::vector<MemberTypeSpec> member_types = {{"author", 384, 16}, {"venue", 16, 0}};
    std::vector<SlotSpec> slots = {{"author", 3, "writes"}, {"venue", 1, "published_in"}};
    int num_events = 2000;
    int events_per_anchor = 2;
    Time time_span = 1000000;
    int communities = 4;
    double noise = 0.1;          // eta: probability a member ignores the community
    double feature_jitter = 0.1; // stddev around the unit-norm centroid
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthMeta {
    std::unordered_map<NodeId, int> community;
    std::size_t node_count = 0;
    std::size_t anchor_count = 0;
    std::size_t event_count = 0;
    // Member draws that landed in the anchor's community / total draws.
    std::size_t within_community_draws = 0;
    std::size_t total_draws = 0;
};

SynthMeta generate(const SynthConfig& config, const std::string& nodes_path,
                   const std::string& edges_path, const std::string& events_path);

}  // namespace ctrl
