#pragma once

#include <cstdint>
#include <vector>

#include "otground/ot.hpp"

namespace otground {

struct DataConfig {
    int concepts = 12;
    int scenes = 64;
    int patches = 4;
    double coverage_ratio = 0.5;
    int latent_dim = 8;
    double noise = 0.1;
    // Trailing share of scenes held out for evaluation.
    double holdout_fraction = 0.25;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

// Token 0 is the sentence-level CLS slot; concept c is token c + 1.
inline constexpr int kClsToken = 0;
inline int concept_token(int concept_id) { return concept_id + 1; }

struct Scene {
    MatrixXd patch_latents;    // patches x latent_dim, one patch per concept
    std::vector<int> concepts;

    friend bool operator==(const Scene&, const Scene&) = default;
};

struct Caption {
    std::vector<int> tokens;   // CLS followed by one token per covered concept
    std::vector<int> concepts;

    friend bool operator==(const Caption&, const Caption&) = default;
};

// Scenes built from latent concept vectors; caption i describes a
// coverage_ratio share of scene i's concepts.
struct SyntheticDataset {
    MatrixXd concept_vectors;  // concepts x latent_dim, unit rows
    std::vector<Scene> scenes;
    std::vector<Caption> captions;
    double coverage_ratio = 1.0;
    std::size_t train_count = 0; // scenes [0, train_count) train, the rest evaluate

    std::size_t size() const { return scenes.size(); }
    std::size_t eval_count() const { return size() - train_count; }

    friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

// ceil(ratio * scene_concepts), at least one.
int covered_concept_count(int scene_concepts, double coverage_ratio);

void validate(const DataConfig& cfg);
SyntheticDataset generate_synthetic_dataset(const DataConfig& cfg, std::uint64_t seed);

} // namespace otground
