#pragma once

#include <string>

#include <json.hpp>

#include "ctrl/model.hpp"
#include "ctrl/synth.hpp"
#include "ctrl/training.hpp"

namespace ctrl {

// Flat key/value run configuration. Every key can come from the JSON
// config file and be overridden by a --key flag; flags win. All
// randomness flows from `seed`.
struct RunConfig {
    // paths
    std::string out_dir = "data";
    std::string nodes_path, edges_path, events_path;  // default to out_dir/<name>.jsonl
    std::string checkpoint_path = "ctrl.ckpt";
    std::string log_path = "train_log.jsonl";
    std::string report_path;      // optional metrics JSON copy
    std::string scores_csv_path;  // optional per-edge score dump

    // model
    int dim = 128;
    int layers = 2;
    int neighbors = 10;
    int heads = 2;
    int degree_buckets = 16;

    // training
    double learning_rate = 0.001;
    int batch_size = 1024;
    int epochs = 10;
    int patience = 5;
    double clip_eps = 1e-7;
    std::string variant = "full";  // full | no-event-loss | no-centrality | single-delta

    // split
    double train_frac = 0.7;
    double valid_frac = 0.1;

    std::uint64_t seed = 1;

    // synthetic generator (member types and slots use the compact forms
    // "name:count:feat_width,..." and "type:count:etype,...")
    int synth_num_events = 2000;
    int synth_events_per_anchor = 2;
    std::int64_t synth_time_span = 1000000;
    int synth_communities = 4;
    double synth_noise = 0.1;
    double synth_feature_jitter = 0.1;
    std::string synth_anchor_type = "paper";
    int synth_anchor_feat_width = 16;
    std::string synth_member_types = "author:384:16,venue:16:0";
    std::string synth_event_slots = "author:3:writes,venue:1:published_in";

    static RunConfig from_file(const std::string& path);
    void apply_json(const nlohmann::json& j);  // unknown key -> ConfigError

    std::string resolved_nodes_path() const;
    std::string resolved_edges_path() const;
    std::string resolved_events_path() const;

    // Variant flags are cumulative: no-event-loss drops the event loss,
    // no-centrality additionally removes the centrality sub-module, and
    // single-delta additionally collapses the decay network to one rate.
    ModelConfig model_config() const;
    TrainConfig train_config() const;
    SynthConfig synth_config() const;
};

}  // namespace ctrl
