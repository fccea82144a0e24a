#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "otground/ot.hpp"

namespace otground {

// Hidden states of a frozen language encoder: layers[l] is tokens x width,
// ordered from the first to the last layer. Row 0 is the sentence-level CLS slot.
struct TextEncoding {
    std::vector<MatrixXd> layers;

    Eigen::Index layer_count() const { return static_cast<Eigen::Index>(layers.size()); }
    Eigen::Index tokens() const { return layers.empty() ? 0 : layers.front().rows(); }
    Eigen::Index width() const { return layers.empty() ? 0 : layers.front().cols(); }
    const MatrixXd& final_layer() const { return layers.back(); }

    friend bool operator==(const TextEncoding&, const TextEncoding&) = default;
};

// Output of a frozen visual encoder: one global vector and one row per patch.
struct VisionEncoding {
    VectorXd global;
    MatrixXd patches;

    friend bool operator==(const VisionEncoding&, const VisionEncoding&) = default;
};

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual TextEncoding encode(std::span<const int> token_ids) const = 0;
};

class VisualEncoder {
public:
    virtual ~VisualEncoder() = default;
    virtual VisionEncoding encode(const MatrixXd& patch_latents) const = 0;
};

// Deterministic stand-in for a contextual language encoder.
//
// Every token id owns a seeded base vector. Each layer blends a token with its
// left and right neighbours (weights 0.5 / 0.3 / 0.2, missing neighbours count as
// zero) and applies a seeded affine map followed by tanh, so the same id gets
// different states in different contexts. Outputs lie in (-1, 1).
class StubTextEncoder final : public TextEncoder {
public:
    StubTextEncoder(int layers, int width, std::uint64_t seed);

    TextEncoding encode(std::span<const int> token_ids) const override;

    int layers() const { return static_cast<int>(maps_.size()); }
    int width() const { return width_; }

private:
    VectorXd base_vector(int token_id) const;

    int width_;
    std::uint64_t seed_;
    std::vector<MatrixXd> maps_;
    std::vector<VectorXd> offsets_;
};

// Deterministic stand-in for a patch-based visual encoder: a seeded affine map
// per patch, and a second affine map applied to the mean patch embedding for
// the global vector.
class StubVisualEncoder final : public VisualEncoder {
public:
    StubVisualEncoder(int latent_dim, int width, std::uint64_t seed);

    VisionEncoding encode(const MatrixXd& patch_latents) const override;

    int latent_dim() const { return static_cast<int>(patch_map_.rows()); }
    int width() const { return static_cast<int>(patch_map_.cols()); }

private:
    MatrixXd patch_map_;
    VectorXd patch_offset_;
    MatrixXd global_map_;
    VectorXd global_offset_;
};

} // namespace otground
