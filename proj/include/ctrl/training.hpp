#pragma once

#include <span>
#include <utility>

#include "ctrl/metrics.hpp"
#include "ctrl/model.hpp"

namespace ctrl {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 1024;
    int epochs = 10;
    std::uint64_t seed = 0;
    bool use_event_loss = true;
    double clip_eps = 1e-7;
    int patience = 5;  // early stop on validation AUC

    void validate() const;
};

struct TrainLogRecord {
    int epoch = 0;
    double mean_event_loss = 0.0;
    double mean_topo_loss = 0.0;
    MetricsReport validation;
    double wall_seconds = 0.0;
};

// -log(p_pos) - log(1 - p_neg) with both probabilities clamped to
// [clip_eps, 1 - clip_eps].
Tensor event_occurrence_loss(Tape& tape, const Tensor& p_pos, const Tensor& p_neg, double clip_eps);
double event_occurrence_loss(double p_pos, double p_neg, double clip_eps);

// Mean over member edges of -log(p_pos) - log(1 - p_neg), same clamping.
Tensor topo_loss(Tape& tape, std::span<const std::pair<Tensor, Tensor>> edge_probs, double clip_eps);
double topo_loss(std::span<const std::pair<double, double>> edge_probs, double clip_eps);

struct EventLossParts {
    double event_loss = 0.0;
    double topo_loss = 0.0;
    bool scored = false;  // false when the event produced no loss terms
    double total() const { return event_loss + topo_loss; }
};

struct FitResult {
    std::vector<TrainLogRecord> log;
    double best_validation_auc = 0.0;
    int best_epoch = 0;
};

// Event-based training: per event one negative event and one negative edge
// per member edge, losses summed over the batch, one Adam step per batch.
class Trainer {
  public:
    Trainer(const TemporalHinGraph& graph, ModelParams& params, TrainConfig config);

    // Forward and backward for one event; gradients accumulate into the
    // parameters and no optimizer step is taken.
    EventLossParts accumulate_event_gradients(const EventRecord& event, Sampler& sampler);

    // Returns the summed batch loss.
    double train_step(std::span<const EventRecord> batch, Sampler& sampler);

    // Runs epochs of seeded-shuffled batches with per-epoch validation,
    // keeps the checkpoint with the best validation AUC and restores it.
    FitResult fit(const TemporalSplit& split);

    AdamOptimizer& optimizer() { return optimizer_; }

  private:
    const TemporalHinGraph& graph_;
    ModelParams& params_;
    TrainConfig config_;
    AdamOptimizer optimizer_;
};

}  // namespace ctrl
