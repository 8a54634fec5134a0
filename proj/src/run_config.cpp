#include "ctrl/run_config.hpp"

#include <fstream>
#include <sstream>

namespace ctrl {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

int parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + s + "' is not an integer in " + what);
    }
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    RunConfig cfg;
    cfg.apply_json(j);
    return cfg;
}

void RunConfig::apply_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object of flat keys");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "out_dir") out_dir = value.get<std::string>();
            else if (key == "nodes_path") nodes_path = value.get<std::string>();
            else if (key == "edges_path") edges_path = value.get<std::string>();
            else if (key == "events_path") events_path = value.get<std::string>();
            else if (key == "checkpoint_path") checkpoint_path = value.get<std::string>();
            else if (key == "log_path") log_path = value.get<std::string>();
            else if (key == "report_path") report_path = value.get<std::string>();
            else if (key == "scores_csv_path") scores_csv_path = value.get<std::string>();
            else if (key == "dim") dim = value.get<int>();
            else if (key == "layers") layers = value.get<int>();
            else if (key == "neighbors") neighbors = value.get<int>();
            else if (key == "heads") heads = value.get<int>();
            else if (key == "degree_buckets") degree_buckets = value.get<int>();
            else if (key == "learning_rate") learning_rate = value.get<double>();
            else if (key == "batch_size") batch_size = value.get<int>();
            else if (key == "epochs") epochs = value.get<int>();
            else if (key == "patience") patience = value.get<int>();
            else if (key == "clip_eps") clip_eps = value.get<double>();
            else if (key == "variant") variant = value.get<std::string>();
            else if (key == "train_frac") train_frac = value.get<double>();
            else if (key == "valid_frac") valid_frac = value.get<double>();
            else if (key == "seed") seed = value.get<std::uint64_t>();
            else if (key == "synth_num_events") synth_num_events = value.get<int>();
            else if (key == "synth_events_per_anchor") synth_events_per_anchor = value.get<int>();
            else if (key == "synth_time_span") synth_time_span = value.get<std::int64_t>();
            else if (key == "synth_communities") synth_communities = value.get<int>();
            else if (key == "synth_noise") synth_noise = value.get<double>();
            else if (key == "synth_feature_jitter") synth_feature_jitter = value.get<double>();
            else if (key == "synth_anchor_type") synth_anchor_type = value.get<std::string>();
            else if (key == "synth_anchor_feat_width") synth_anchor_feat_width = value.get<int>();
            else if (key == "synth_member_types") synth_member_types = value.get<std::string>();
            else if (key == "synth_event_slots") synth_event_slots = value.get<std::string>();
            else throw ConfigError("config: unknown key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        }
    }
}

std::string RunConfig::resolved_nodes_path() const {
    return nodes_path.empty() ? out_dir + "/nodes.jsonl" : nodes_path;
}

std::string RunConfig::resolved_edges_path() const {
    return edges_path.empty() ? out_dir + "/edges.jsonl" : edges_path;
}

std::string RunConfig::resolved_events_path() const {
    return events_path.empty() ? out_dir + "/events.jsonl" : events_path;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.dim = dim;
    mc.layers = layers;
    mc.neighbors = neighbors;
    mc.heads = heads;
    mc.degree_buckets = degree_buckets;
    if (variant == "full" || variant == "no-event-loss") {
        // structural defaults
    } else if (variant == "no-centrality") {
        mc.use_centrality = false;
    } else if (variant == "single-delta") {
        mc.use_centrality = false;
        mc.hawkes_mode = HawkesMode::kSingleDelta;
    } else {
        throw ConfigError("config: unknown variant '" + variant +
                          "' (expected full, no-event-loss, no-centrality or single-delta)");
    }
    return mc;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig tc;
    tc.learning_rate = learning_rate;
    tc.batch_size = batch_size;
    tc.epochs = epochs;
    tc.seed = seed;
    tc.use_event_loss = variant == "full";
    tc.clip_eps = clip_eps;
    tc.patience = patience;
    return tc;
}

SynthConfig RunConfig::synth_config() const {
    SynthConfig sc;
    sc.anchor_type = synth_anchor_type;
    sc.anchor_feat_width = synth_anchor_feat_width;
    sc.member_types.clear();
    for (const auto& item : split(synth_member_types, ',')) {
        if (item.empty()) continue;
        const auto f = split(item, ':');
        if (f.size() != 3) {
            throw ConfigError("config: synth_member_types entry '" + item +
                              "' is not name:count:feat_width");
        }
        sc.member_types.push_back(
            {f[0], parse_int(f[1], "synth_member_types"), parse_int(f[2], "synth_member_types")});
    }
    sc.slots.clear();
    for (const auto& item : split(synth_event_slots, ',')) {
        if (item.empty()) continue;
        const auto f = split(item, ':');
        if (f.size() != 3) {
            throw ConfigError("config: synth_event_slots entry '" + item + "' is not type:count:etype");
        }
        sc.slots.push_back({f[0], parse_int(f[1], "synth_event_slots"), f[2]});
    }
    sc.num_events = synth_num_events;
    sc.events_per_anchor = synth_events_per_anchor;
    sc.time_span = synth_time_span;
    sc.communities = synth_communities;
    sc.noise = synth_noise;
    sc.feature_jitter = synth_feature_jitter;
    sc.seed = seed;
    return sc;
}

}  // namespace ctrl
