#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "otground/adamw.hpp"
#include "otground/dataset.hpp"
#include "otground/objectives.hpp"

namespace otground {

struct TrainSettings {
    double lr = 1e-2;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 200;
    int batch_size = 16;
    Strategy strategy = Strategy::ClsPot;
    double w_cls = 1.0;
    double w_align = 1.0;
    std::optional<double> hinge_margin;
    int save_every = 0; // 0: checkpoint only at the end

    friend bool operator==(const TrainSettings&, const TrainSettings&) = default;
};

struct Seeds {
    std::uint64_t data = 1;
    std::uint64_t init = 2;
    std::uint64_t train = 3;

    friend bool operator==(const Seeds&, const Seeds&) = default;
};

// Full run description; mirrors the sections of the JSON run config.
struct TrainConfig {
    SolverConfig solver;
    TransportMode eval_mode = TransportMode::Partial; // transport used by evaluate
    ModelDims model;
    AlignTarget align_target = AlignTarget::Ground;
    TrainSettings train;
    DataConfig data;
    Seeds seeds;

    LossConfig loss_config() const;
    AdamWHyper adamw() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

// Frozen encoder outputs for every caption and scene.
struct EncodedDataset {
    std::vector<TextEncoding> captions;
    std::vector<VisionEncoding> images;

    friend bool operator==(const EncodedDataset&, const EncodedDataset&) = default;
};

// Stub encoders seeded from the data seed, so the frozen "pretrained" encoders
// are shared by every run over the same data.
EncodedDataset encode_dataset(const SyntheticDataset& data, const TrainConfig& cfg);

struct Metrics {
    double accuracy = 0.0;     // matching accuracy at threshold 0.5 over balanced pairs
    double recall_at_1 = 0.0;  // caption -> image by smallest transport distance
    double mean_d_pos = 0.0;
    double mean_d_neg = 0.0;
    double gap = 0.0;          // mean_d_neg - mean_d_pos
    std::size_t pairs = 0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct EvalOptions {
    SolverConfig solver;
    TransportMode mode = TransportMode::Partial;
    AlignTarget align_target = AlignTarget::Ground;
    std::uint64_t seed = 0;   // negative sampling for the balanced pairs
    bool with_recall = true;
};

// Caption i is paired with image i; each caption also gets one sampled negative.
// Ties in recall ranking go to the lowest image index.
Metrics evaluate(const GroundingModel& model, std::span<const TextEncoding> captions,
                 std::span<const VisionEncoding> images, const EvalOptions& options);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double cls_loss = 0.0;
    double align_loss = 0.0;
    Metrics metrics;
};

struct TrainResult {
    GroundingModel model;
    OptimizerState optimizer;
    std::vector<EpochRecord> history;
    Metrics final_metrics;
};

using EpochCallback = std::function<void(const EpochRecord&, const GroundingModel&, const OptimizerState&)>;

EvalOptions eval_options(const TrainConfig& cfg);

// Seeded Fisher-Yates shuffle, batches of combined loss + AdamW, held-out
// evaluation after every epoch.
TrainResult train(const TrainConfig& cfg, const SyntheticDataset& data, const EpochCallback& on_epoch = {});
TrainResult train(const TrainConfig& cfg, const SyntheticDataset& data, const EncodedDataset& encoded,
                  const EpochCallback& on_epoch = {});

struct GridRow {
    Strategy strategy;
    Metrics metrics;
    double final_loss = 0.0;
};

// One training run per strategy with identical data and seeds.
std::vector<GridRow> strategy_grid(const TrainConfig& base, const SyntheticDataset& data);

} // namespace otground
