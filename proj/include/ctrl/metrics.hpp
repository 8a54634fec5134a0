#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ctrl/model.hpp"

namespace ctrl {

struct ScoredPair {
    double score;  // in [0, 1]
    int label;     // 0 or 1
};

struct MetricsReport {
    double accuracy = 0.0;
    double average_precision = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    // Positive edges with at least one endpoint unseen in training.
    std::size_t inductive_edges = 0;
    double inductive_fraction = 0.0;
};

// Accuracy and F1 at the threshold, AUC by rank sum with ties counting
// half, AP by the step-wise precision sweep with ties broken by stable
// input order. Needs at least one positive and one negative.
MetricsReport compute_metrics(std::span<const ScoredPair> pairs, double threshold = 0.5);

struct EdgeScore {
    NodeId src, dst;
    TypeId etype;
    Time time;
    double score;
    int label;
    bool inductive;
};

struct EvalResult {
    MetricsReport report;
    std::vector<EdgeScore> scores;
};

// Inductive temporal link prediction over the member edges of the given
// events: every positive edge is scored together with one seeded negative
// of the same source, type and timestamp. `train_seen` is the set of nodes
// involved in training events.
EvalResult evaluate_inductive(const TemporalHinGraph& graph, std::span<const EventRecord> events,
                              const ModelParams& params, const std::unordered_set<NodeId>& train_seen,
                              std::uint64_t seed);

nlohmann::json metrics_to_json(const MetricsReport& report);

void write_scores_csv(const std::string& path, std::span<const EdgeScore> scores);

}  // namespace ctrl
