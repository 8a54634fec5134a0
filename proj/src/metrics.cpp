#include "ctrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ctrl {

MetricsReport compute_metrics(std::span<const ScoredPair> pairs, double threshold) {
    std::size_t positives = 0, negatives = 0;
    for (const auto& p : pairs) {
        if (!std::isfinite(p.score)) throw MetricError("compute_metrics: non-finite score");
        if (p.label != 0 && p.label != 1) throw MetricError("compute_metrics: label must be 0 or 1");
        (p.label == 1 ? positives : negatives)++;
    }
    if (positives == 0 || negatives == 0) {
        throw MetricError("compute_metrics: need at least one positive and one negative, got " +
                          std::to_string(positives) + " / " + std::to_string(negatives));
    }

    MetricsReport r;
    r.positives = positives;
    r.negatives = negatives;

    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (const auto& p : pairs) {
        const bool predicted = p.score >= threshold;
        if (predicted == (p.label == 1)) ++correct;
        if (predicted && p.label == 1) ++tp;
        if (predicted && p.label == 0) ++fp;
        if (!predicted && p.label == 1) ++fn;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;

    // AUC via the Mann-Whitney rank sum; tied scores share their average
    // rank, which credits half a win per tied (positive, negative) pair.
    {
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return pairs[a].score < pairs[b].score;
        });
        double rank_sum_pos = 0.0;
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j < order.size() && pairs[order[j]].score == pairs[order[i]].score) ++j;
            const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
            for (std::size_t k = i; k < j; ++k) {
                if (pairs[order[k]].label == 1) rank_sum_pos += avg_rank;
            }
            i = j;
        }
        const double p = static_cast<double>(positives);
        r.auc = (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
    }

    // AP: sweep scores in descending order, stable within ties, summing
    // precision at every recall step.
    {
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return pairs[a].score > pairs[b].score;
        });
        double ap = 0.0;
        std::size_t hits = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (pairs[order[k]].label == 1) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(k + 1);
            }
        }
        r.average_precision = ap / static_cast<double>(positives);
    }
    return r;
}

EvalResult evaluate_inductive(const TemporalHinGraph& graph, std::span<const EventRecord> events,
                              const ModelParams& params, const std::unordered_set<NodeId>& train_seen,
                              std::uint64_t seed) {
    if (events.empty()) throw ContractError("evaluate_inductive: no events");
    Sampler sampler(graph, seed);
    EvalResult result;
    std::vector<ScoredPair> pairs;
    for (const auto& ev : events) {
        if (ev.edges.empty()) continue;
        Tape tape;
        tape.set_recording(false);
        NodeEncoder encoder(tape, graph, params, sampler);
        for (const auto& e : ev.edges) {
            const double p_pos = edge_probability(encoder, e.src, e.dst, ev.time).value();
            const TimedEdge neg = sampler.sample_negative_edge({e.src, e.dst, e.etype, ev.time});
            const double p_neg = edge_probability(encoder, neg.src, neg.dst, ev.time).value();
            const bool pos_inductive = !train_seen.count(e.src) || !train_seen.count(e.dst);
            const bool neg_inductive = !train_seen.count(neg.src) || !train_seen.count(neg.dst);
            pairs.push_back({p_pos, 1});
            pairs.push_back({p_neg, 0});
            result.scores.push_back({e.src, e.dst, e.etype, ev.time, p_pos, 1, pos_inductive});
            result.scores.push_back({neg.src, neg.dst, neg.etype, neg.time, p_neg, 0, neg_inductive});
        }
    }
    if (pairs.empty()) throw ContractError("evaluate_inductive: events carry no edges to score");
    result.report = compute_metrics(pairs);
    for (const auto& s : result.scores) {
        if (s.label == 1 && s.inductive) ++result.report.inductive_edges;
    }
    result.report.inductive_fraction =
        static_cast<double>(result.report.inductive_edges) / static_cast<double>(result.report.positives);
    return result;
}

nlohmann::json metrics_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy;
    j["average_precision"] = r.average_precision;
    j["f1"] = r.f1;
    j["auc"] = r.auc;
    j["positives"] = r.positives;
    j["negatives"] = r.negatives;
    j["inductive_edges"] = r.inductive_edges;
    j["inductive_fraction"] = r.inductive_fraction;
    return j;
}

void write_scores_csv(const std::string& path, std::span<const EdgeScore> scores) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "src,dst,etype,time,score,label,inductive\n";
    for (const auto& s : scores) {
        out << s.src << ',' << s.dst << ',' << s.etype << ',' << s.time << ',' << s.score << ','
            << s.label << ',' << (s.inductive ? 1 : 0) << '\n';
    }
}

}  // namespace ctrl
