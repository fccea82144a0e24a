#pragma once

#include <cstdint>

#include "otground/model.hpp"

namespace otground {

struct AdamWHyper {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// First and second moments, shape-congruent with the model.
struct OptimizerState {
    GradientSet first_moment;
    GradientSet second_moment;
    std::int64_t step = 0;

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState init_optimizer(const ParameterTensors& model);

// Decoupled weight decay:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
void adamw_step(ParameterTensors& model, const GradientSet& grads, OptimizerState& state, const AdamWHyper& hyper);

} // namespace otground
