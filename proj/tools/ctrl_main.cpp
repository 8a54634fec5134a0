// Command-line entry point: dataset generation, training, and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctrl/checkpoint.hpp"
#include "ctrl/metrics.hpp"
#include "ctrl/run_config.hpp"
#include "ctrl/synth.hpp"
#include "ctrl/training.hpp"

namespace {

using nlohmann::json;

// Every RunConfig key is exposed as a --key flag; values given on the
// command line override the config file.
void register_options(CLI::App* cmd, ctrl::RunConfig& cfg) {
    cmd->add_option("--out_dir", cfg.out_dir);
    cmd->add_option("--nodes_path", cfg.nodes_path);
    cmd->add_option("--edges_path", cfg.edges_path);
    cmd->add_option("--events_path", cfg.events_path);
    cmd->add_option("--checkpoint_path", cfg.checkpoint_path);
    cmd->add_option("--log_path", cfg.log_path);
    cmd->add_option("--report_path", cfg.report_path);
    cmd->add_option("--scores_csv_path", cfg.scores_csv_path);
    cmd->add_option("--dim", cfg.dim);
    cmd->add_option("--layers", cfg.layers);
    cmd->add_option("--neighbors", cfg.neighbors);
    cmd->add_option("--heads", cfg.heads);
    cmd->add_option("--degree_buckets", cfg.degree_buckets);
    cmd->add_option("--learning_rate", cfg.learning_rate);
    cmd->add_option("--batch_size", cfg.batch_size);
    cmd->add_option("--epochs", cfg.epochs);
    cmd->add_option("--patience", cfg.patience);
    cmd->add_option("--clip_eps", cfg.clip_eps);
    cmd->add_option("--variant", cfg.variant);
    cmd->add_option("--train_frac", cfg.train_frac);
    cmd->add_option("--valid_frac", cfg.valid_frac);
    cmd->add_option("--seed", cfg.seed);
    cmd->add_option("--synth_num_events", cfg.synth_num_events);
    cmd->add_option("--synth_events_per_anchor", cfg.synth_events_per_anchor);
    cmd->add_option("--synth_time_span", cfg.synth_time_span);
    cmd->add_option("--synth_communities", cfg.synth_communities);
    cmd->add_option("--synth_noise", cfg.synth_noise);
    cmd->add_option("--synth_feature_jitter", cfg.synth_feature_jitter);
    cmd->add_option("--synth_anchor_type", cfg.synth_anchor_type);
    cmd->add_option("--synth_anchor_feat_width", cfg.synth_anchor_feat_width);
    cmd->add_option("--synth_member_types", cfg.synth_member_types);
    cmd->add_option("--synth_event_slots", cfg.synth_event_slots);
}

json model_meta(const ctrl::RunConfig& cfg) {
    json meta;
    meta["dim"] = cfg.dim;
    meta["layers"] = cfg.layers;
    meta["neighbors"] = cfg.neighbors;
    meta["heads"] = cfg.heads;
    meta["degree_buckets"] = cfg.degree_buckets;
    meta["variant"] = cfg.variant;
    meta["train_frac"] = cfg.train_frac;
    meta["valid_frac"] = cfg.valid_frac;
    meta["seed"] = cfg.seed;
    return meta;
}

int run_generate(const ctrl::RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto meta = ctrl::generate(cfg.synth_config(), cfg.resolved_nodes_path(),
                                     cfg.resolved_edges_path(), cfg.resolved_events_path());
    json out;
    out["nodes_path"] = cfg.resolved_nodes_path();
    out["edges_path"] = cfg.resolved_edges_path();
    out["events_path"] = cfg.resolved_events_path();
    out["nodes"] = meta.node_count;
    out["anchors"] = meta.anchor_count;
    out["events"] = meta.event_count;
    std::cout << out.dump() << "\n";
    return 0;
}

int run_train(const ctrl::RunConfig& cfg) {
    auto [graph, events] = ctrl::ingest_files(cfg.resolved_nodes_path(), cfg.resolved_edges_path(),
                                              cfg.resolved_events_path());
    const auto split = ctrl::temporal_split(std::move(events), cfg.train_frac, cfg.valid_frac);
    ctrl::ModelParams params(graph, cfg.model_config(), cfg.seed);
    ctrl::Trainer trainer(graph, params, cfg.train_config());
    const auto fit = trainer.fit(split);

    ctrl::save_checkpoint(cfg.checkpoint_path, params.store(), model_meta(cfg));
    if (!cfg.log_path.empty()) {
        std::ofstream log(cfg.log_path, std::ios::trunc);
        if (!log) throw ctrl::IoError("cannot write '" + cfg.log_path + "'");
        for (const auto& rec : fit.log) {
            json j;
            j["epoch"] = rec.epoch;
            j["mean_event_loss"] = rec.mean_event_loss;
            j["mean_topo_loss"] = rec.mean_topo_loss;
            j["validation"] = ctrl::metrics_to_json(rec.validation);
            j["wall_seconds"] = rec.wall_seconds;
            log << j.dump() << "\n";
        }
    }
    json out;
    out["checkpoint_path"] = cfg.checkpoint_path;
    out["epochs_run"] = fit.log.size();
    out["best_epoch"] = fit.best_epoch;
    out["best_validation_auc"] = fit.best_validation_auc;
    std::cout << out.dump() << "\n";
    return 0;
}

int run_eval(const ctrl::RunConfig& cfg) {
    if (!std::filesystem::exists(cfg.checkpoint_path)) {
        throw ctrl::IoError("checkpoint not found: '" + cfg.checkpoint_path + "'");
    }
    auto [graph, events] = ctrl::ingest_files(cfg.resolved_nodes_path(), cfg.resolved_edges_path(),
                                              cfg.resolved_events_path());
    // The checkpoint meta is authoritative for the model shape and the
    // split it was trained against.
    const json meta = ctrl::load_checkpoint_meta(cfg.checkpoint_path);
    ctrl::RunConfig mc = cfg;
    mc.dim = meta.at("dim").get<int>();
    mc.layers = meta.at("layers").get<int>();
    mc.neighbors = meta.at("neighbors").get<int>();
    mc.heads = meta.at("heads").get<int>();
    mc.degree_buckets = meta.at("degree_buckets").get<int>();
    mc.variant = meta.at("variant").get<std::string>();
    const double train_frac = meta.at("train_frac").get<double>();
    const double valid_frac = meta.at("valid_frac").get<double>();

    const auto split = ctrl::temporal_split(std::move(events), train_frac, valid_frac);
    ctrl::ModelParams params(graph, mc.model_config(), 0);
    ctrl::load_checkpoint(cfg.checkpoint_path, params.store());

    const auto seen = ctrl::event_node_set(split.train);
    const auto result = ctrl::evaluate_inductive(graph, split.test, params, seen, cfg.seed);
    const json report = ctrl::metrics_to_json(result.report);
    std::cout << report.dump() << "\n";
    if (!cfg.report_path.empty()) {
        std::ofstream out(cfg.report_path, std::ios::trunc);
        if (!out) throw ctrl::IoError("cannot write '" + cfg.report_path + "'");
        out << report.dump() << "\n";
    }
    if (!cfg.scores_csv_path.empty()) ctrl::write_scores_csv(cfg.scores_csv_path, result.scores);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // The config file is read first so command-line flags can override it.
    std::string config_path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
    }

    ctrl::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = ctrl::RunConfig::from_file(config_path);
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "config"}, {"detail", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }

    CLI::App app{"Continuous-time representation learning on temporal heterogeneous graphs"};
    app.require_subcommand(1);
    std::string config_opt;
    for (auto* cmd : {app.add_subcommand("generate", "Write a synthetic dataset"),
                      app.add_subcommand("train", "Train a model on a dataset"),
                      app.add_subcommand("eval", "Evaluate a checkpoint on the test split")}) {
        cmd->add_option("--config", config_opt, "JSON config file with flat keys");
        register_options(cmd, cfg);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("generate")) return run_generate(cfg);
        if (app.got_subcommand("train")) return run_train(cfg);
        if (app.got_subcommand("eval")) return run_eval(cfg);
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "runtime"}, {"detail", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
