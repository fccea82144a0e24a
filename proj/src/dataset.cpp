#include "otground/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "otground/rng.hpp"

namespace otground {

int covered_concept_count(int scene_concepts, double coverage_ratio)
{
    const int count = static_cast<int>(std::ceil(coverage_ratio * scene_concepts - 1e-9));
    return std::clamp(count, 1, scene_concepts);
}

void validate(const DataConfig& cfg)
{
    if (cfg.concepts < 4)
        throw InvalidArgument("data.concepts must be >= 4");
    if (cfg.scenes < 8)
        throw InvalidArgument("data.scenes must be >= 8");
    if (cfg.patches < 2)
        throw InvalidArgument("data.patches must be >= 2");
    if (!(cfg.coverage_ratio > 0.0 && cfg.coverage_ratio <= 1.0))
        throw InvalidArgument("data.coverage_ratio must be in (0, 1]");
    if (cfg.latent_dim < 1)
        throw InvalidArgument("data.latent_dim must be >= 1");
    if (!(cfg.noise >= 0.0))
        throw InvalidArgument("data.noise must be >= 0");
    if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0))
        throw InvalidArgument("data.holdout_fraction must be in [0, 1)");
}

SyntheticDataset generate_synthetic_dataset(const DataConfig& cfg, std::uint64_t seed)
{
    validate(cfg);
    Rng rng = make_rng(seed, 0xda7a);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticDataset data;
    data.coverage_ratio = cfg.coverage_ratio;
    data.concept_vectors.resize(cfg.concepts, cfg.latent_dim);
    for (int c = 0; c < cfg.concepts; ++c) {
        for (int j = 0; j < cfg.latent_dim; ++j)
            data.concept_vectors(c, j) = normal(rng);
        data.concept_vectors.row(c).normalize();
    }

    const int covered = covered_concept_count(cfg.patches, cfg.coverage_ratio);
    std::vector<int> pool(static_cast<std::size_t>(cfg.concepts));
    for (int s = 0; s < cfg.scenes; ++s) {
        Scene scene;
        // Distinct concepts when there are enough of them, otherwise with replacement.
        if (cfg.patches <= cfg.concepts) {
            std::iota(pool.begin(), pool.end(), 0);
            for (int i = 0; i < cfg.patches; ++i) {
                std::uniform_int_distribution<int> pick(i, cfg.concepts - 1);
                std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
                scene.concepts.push_back(pool[static_cast<std::size_t>(i)]);
            }
        } else {
            std::uniform_int_distribution<int> pick(0, cfg.concepts - 1);
            for (int i = 0; i < cfg.patches; ++i)
                scene.concepts.push_back(pick(rng));
        }

        scene.patch_latents.resize(cfg.patches, cfg.latent_dim);
        for (int p = 0; p < cfg.patches; ++p)
            for (int j = 0; j < cfg.latent_dim; ++j)
                scene.patch_latents(p, j) =
                    data.concept_vectors(scene.concepts[static_cast<std::size_t>(p)], j) + cfg.noise * normal(rng);

        // Caption names a random subset of the scene's patches.
        std::vector<int> order(static_cast<std::size_t>(cfg.patches));
        std::iota(order.begin(), order.end(), 0);
        for (int i = 0; i < covered; ++i) {
            std::uniform_int_distribution<int> pick(i, cfg.patches - 1);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
        }
        Caption caption;
        caption.tokens.push_back(kClsToken);
        for (int i = 0; i < covered; ++i) {
            const int concept_id = scene.concepts[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
            caption.concepts.push_back(concept_id);
            caption.tokens.push_back(concept_token(concept_id));
        }

        data.scenes.push_back(std::move(scene));
        data.captions.push_back(std::move(caption));
    }

    auto holdout = static_cast<std::size_t>(std::lround(cfg.holdout_fraction * cfg.scenes));
    if (holdout == 1)
        holdout = 2;
    data.train_count = data.scenes.size() - holdout;
    if (data.train_count < 2)
        throw InvalidArgument("data.holdout_fraction leaves fewer than 2 training scenes");
    return data;
}

} // namespace otground
