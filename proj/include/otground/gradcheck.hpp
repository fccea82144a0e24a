#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otground/backprop.hpp"

namespace otground {

// |fd - bp| / max(1e-8, |fd| + |bp|)
double relative_error(double finite_difference, double analytic);

struct GradCheckOptions {
    double epsilon = 1e-5;
    // Re-solve transport plans at every perturbed point instead of holding the
    // forward-pass plans fixed.
    bool resolve_plans = false;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central differences over every model parameter versus backprop.
GradCheckResult finite_difference_check(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                                        const GradCheckOptions& options = {});

// Tiny random model plus encoder outputs (d_h = 4, d_v = 4, d_g = 3, 3 tokens,
// 4 patches, two batch items over three images). Resampled until no hidden
// pre-activation is within 1e-6 of the relu kink.
struct GradCheckInstance {
    GroundingModel model;
    std::vector<TextEncoding> captions;
    std::vector<VisionEncoding> images;
    std::vector<PairTriple> items;

    PairBatch batch() const { return {captions, images, items}; }
};

GradCheckInstance make_gradcheck_instance(std::uint64_t seed);

inline constexpr double kSeparationGap = 0.5;

// Same shapes with three patches per image, built so that every transport
// problem in the batch has a unique optimal assignment: the second-best
// assignment costs at least `min_gap` more. Matching images place their patch
// projections near the caption's ground rows; the negatives use a shifted order.
GradCheckInstance make_separated_instance(std::uint64_t seed, double min_gap = kSeparationGap);

// Cost difference between the best and second-best permutation of a small
// square cost matrix.
double assignment_gap(const MatrixXd& C);

struct GateRow {
    Strategy strategy;
    bool resolve_plans;
    double max_rel_error;
    double tolerance;

    bool passed() const { return max_rel_error < tolerance; }
};

inline constexpr double kFrozenPlanTolerance = 1e-4;
inline constexpr double kResolvedPlanTolerance = 1e-2;

// Frozen-plan check for cls, cls+ot, cls+pot on random tiny models and
// re-solved check for cls+ot, cls+pot on separated ones, `instances` each.
std::vector<GateRow> run_gradient_gate(std::uint64_t seed, int instances = 10);

} // namespace otground
