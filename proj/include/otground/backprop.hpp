#pragma once

#include <vector>

#include "otground/objectives.hpp"

namespace otground {

// Transport plans used for each batch item, positive and negative image.
// Entries are empty when the loss has no alignment term.
struct PlanSet {
    std::vector<MatrixXd> positive;
    std::vector<MatrixXd> negative;
};

struct BackpropResult {
    LossReport report;
    GradientSet grads;
    PlanSet plans;
};

// Reverse-mode pass over the fixed grounding graph for one batch.
//
// Transport plans are constants of the forward pass (dD/dC = T). When `frozen`
// is given its plans are used instead of re-solving, which is what finite
// differences need to check the envelope gradient in isolation.
// Throws NumericFailure naming the graph node on any non-finite intermediate.
BackpropResult backprop(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                        const PlanSet* frozen = nullptr);

// Forward-only loss, optionally with frozen plans.
LossReport forward_loss(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg,
                        const PlanSet* frozen = nullptr);

// Smallest |pre-activation| over both MLP hidden layers for every vector the batch touches.
double min_abs_preactivation(const GroundingModel& model, const PairBatch& batch);

} // namespace otground
