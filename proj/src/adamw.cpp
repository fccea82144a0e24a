#include "otground/adamw.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace otground {
namespace {

std::vector<std::span<double>> spans_of(ParameterTensors& p)
{
    std::vector<std::span<double>> out;
    for_each_tensor(p, [&](std::string_view, std::span<double> s) { out.push_back(s); });
    return out;
}

std::vector<std::span<const double>> spans_of(const ParameterTensors& p)
{
    std::vector<std::span<const double>> out;
    for_each_tensor(p, [&](std::string_view, std::span<const double> s) { out.push_back(s); });
    return out;
}

} // namespace

OptimizerState init_optimizer(const ParameterTensors& model)
{
    return {zero_gradients(model), zero_gradients(model), 0};
}

void adamw_step(ParameterTensors& model, const GradientSet& grads, OptimizerState& state, const AdamWHyper& hyper)
{
    auto theta = spans_of(model);
    const auto g = spans_of(grads);
    auto m = spans_of(state.first_moment);
    auto v = spans_of(state.second_moment);
    if (g.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
        throw InvalidArgument("adamw_step: tensor count mismatch");
    for (std::size_t t = 0; t < theta.size(); ++t)
        if (g[t].size() != theta[t].size() || m[t].size() != theta[t].size() || v[t].size() != theta[t].size())
            throw InvalidArgument("adamw_step: shape mismatch in tensor " + std::to_string(t));
    for (const auto& span : g)
        for (double x : span)
            if (!std::isfinite(x))
                throw NumericFailure("adamw_step: non-finite gradient");

    ++state.step;
    const double step = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(hyper.beta1, step);
    const double correction2 = 1.0 - std::pow(hyper.beta2, step);

    for (std::size_t t = 0; t < theta.size(); ++t) {
        for (std::size_t j = 0; j < theta[t].size(); ++j) {
            const double grad = g[t][j];
            m[t][j] = hyper.beta1 * m[t][j] + (1.0 - hyper.beta1) * grad;
            v[t][j] = hyper.beta2 * v[t][j] + (1.0 - hyper.beta2) * grad * grad;
            const double m_hat = m[t][j] / correction1;
            const double v_hat = v[t][j] / correction2;
            theta[t][j] -= hyper.lr * (m_hat / (std::sqrt(v_hat) + hyper.eps) + hyper.weight_decay * theta[t][j]);
        }
    }
}

} // namespace otground
