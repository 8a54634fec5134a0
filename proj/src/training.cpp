#include "ctrl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace ctrl {

namespace {

double clamp01(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

void check_prob(double p, const char* what) {
    if (!std::isfinite(p)) {
        throw NumericError(std::string(what) + ": non-finite probability " + std::to_string(p));
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be > 0");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
    if (!(clip_eps > 0.0 && clip_eps < 0.5)) {
        throw ContractError("train config: clip_eps must lie in (0, 0.5)");
    }
    if (epochs < 0) throw ContractError("train config: epochs must be >= 0");
    if (patience < 1) throw ContractError("train config: patience must be >= 1");
}

Tensor event_occurrence_loss(Tape& tape, const Tensor& p_pos, const Tensor& p_neg, double clip_eps) {
    check_prob(p_pos.value(), "event loss");
    check_prob(p_neg.value(), "event loss");
    const Tensor lp = tape.log(tape.clamp(p_pos, clip_eps, 1.0 - clip_eps));
    const Tensor ln = tape.log(tape.clamp(tape.affine(p_neg, -1.0, 1.0), clip_eps, 1.0 - clip_eps));
    return tape.affine(tape.add(lp, ln), -1.0, 0.0);
}

double event_occurrence_loss(double p_pos, double p_neg, double clip_eps) {
    check_prob(p_pos, "event loss");
    check_prob(p_neg, "event loss");
    return -std::log(clamp01(p_pos, clip_eps)) - std::log(clamp01(1.0 - p_neg, clip_eps));
}

Tensor topo_loss(Tape& tape, std::span<const std::pair<Tensor, Tensor>> edge_probs, double clip_eps) {
    if (edge_probs.empty()) throw ContractError("topo loss: empty edge list");
    Tensor total;
    for (const auto& [p_pos, p_neg] : edge_probs) {
        const Tensor term = event_occurrence_loss(tape, p_pos, p_neg, clip_eps);
        total = total.defined() ? tape.add(total, term) : term;
    }
    return tape.affine(total, 1.0 / static_cast<double>(edge_probs.size()), 0.0);
}

double topo_loss(std::span<const std::pair<double, double>> edge_probs, double clip_eps) {
    if (edge_probs.empty()) throw ContractError("topo loss: empty edge list");
    double total = 0.0;
    for (const auto& [p_pos, p_neg] : edge_probs) {
        total += event_occurrence_loss(p_pos, p_neg, clip_eps);
    }
    return total / static_cast<double>(edge_probs.size());
}

Trainer::Trainer(const TemporalHinGraph& graph, ModelParams& params, TrainConfig config)
    : graph_(graph),
      params_(params),
      config_(config),
      optimizer_(params.store().items(), AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8}) {
    config_.validate();
}

EventLossParts Trainer::accumulate_event_gradients(const EventRecord& event, Sampler& sampler) {
    Tape tape;
    NodeEncoder encoder(tape, graph_, params_, sampler);
    EventLossParts parts;
    Tensor total;

    if (config_.use_event_loss) {
        const EventRecord negative = sampler.sample_negative_event(event);
        const Tensor p_pos = event_probability(encoder, event);
        const Tensor p_neg = event_probability(encoder, negative);
        const Tensor loss = event_occurrence_loss(tape, p_pos, p_neg, config_.clip_eps);
        parts.event_loss = loss.value();
        total = loss;
    }
    if (!event.edges.empty()) {
        std::vector<std::pair<Tensor, Tensor>> probs;
        probs.reserve(event.edges.size());
        for (const auto& e : event.edges) {
            const Tensor p_pos = edge_probability(encoder, e.src, e.dst, event.time);
            const TimedEdge neg = sampler.sample_negative_edge({e.src, e.dst, e.etype, event.time});
            const Tensor p_neg = edge_probability(encoder, neg.src, neg.dst, event.time);
            probs.emplace_back(p_pos, p_neg);
        }
        const Tensor loss = topo_loss(tape, probs, config_.clip_eps);
        parts.topo_loss = loss.value();
        total = total.defined() ? tape.add(total, loss) : loss;
    }
    if (!total.defined()) return parts;

    parts.scored = true;
    if (!std::isfinite(parts.total())) {
        throw NumericError("train step: non-finite loss at event anchor=" +
                           std::to_string(event.anchor) + " time=" + std::to_string(event.time));
    }
    tape.backward(total);
    return parts;
}

double Trainer::train_step(std::span<const EventRecord> batch, Sampler& sampler) {
    if (batch.empty()) throw ContractError("train step: empty batch");
    double total = 0.0;
    for (const auto& event : batch) {
        total += accumulate_event_gradients(event, sampler).total();
    }
    optimizer_.step();
    optimizer_.zero_grad();
    return total;
}

FitResult Trainer::fit(const TemporalSplit& split) {
    FitResult result;
    if (config_.epochs == 0) return result;
    if (split.train.empty()) throw ContractError("fit: empty training split");

    RngStream root(config_.seed);
    RngStream shuffle_rng = root.fork(1);
    Sampler train_sampler(graph_, root.fork(2).seed());
    // Validation negatives stay fixed across epochs so the curves compare.
    const std::uint64_t valid_seed = root.fork(3).seed();

    const auto seen = event_node_set(split.train);
    auto best = params_.store().snapshot();
    double best_auc = -1.0;
    int best_epoch = 0;
    int stale = 0;

    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates with the seeded stream.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        }
        double event_sum = 0.0, topo_sum = 0.0;
        std::size_t count = 0;
        std::size_t offset = 0;
        while (offset < order.size()) {
            const std::size_t take =
                std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), order.size() - offset);
            for (std::size_t i = 0; i < take; ++i) {
                const auto parts =
                    accumulate_event_gradients(split.train[order[offset + i]], train_sampler);
                event_sum += parts.event_loss;
                topo_sum += parts.topo_loss;
                ++count;
            }
            optimizer_.step();
            optimizer_.zero_grad();
            offset += take;
        }

        TrainLogRecord rec;
        rec.epoch = epoch;
        rec.mean_event_loss = count ? event_sum / static_cast<double>(count) : 0.0;
        rec.mean_topo_loss = count ? topo_sum / static_cast<double>(count) : 0.0;
        rec.validation = evaluate_inductive(graph_, split.valid, params_, seen, valid_seed).report;
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(rec);

        if (rec.validation.auc > best_auc) {
            best_auc = rec.validation.auc;
            best_epoch = epoch;
            best = params_.store().snapshot();
            stale = 0;
        } else if (++stale >= config_.patience) {
            break;
        }
    }

    params_.store().restore(best);
    result.best_validation_auc = best_auc;
    result.best_epoch = best_epoch;
    return result;
}

}  // namespace ctrl
