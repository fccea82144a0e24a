#include "otground/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "otground/backprop.hpp"

namespace otground {

double sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double match_predict(const VectorXd& v_cls, const VectorXd& t_cls, const VectorXd& head_weight, double head_bias)
{
    if (head_weight.size() != v_cls.size() + t_cls.size())
        throw InvalidArgument("match_predict: head length " + std::to_string(head_weight.size()) + " != " +
                              std::to_string(v_cls.size()) + " + " + std::to_string(t_cls.size()));
    const double logit =
        head_weight.head(v_cls.size()).dot(v_cls) + head_weight.tail(t_cls.size()).dot(t_cls) + head_bias;
    return sigmoid(logit);
}

double bce_loss(double y_hat, int y)
{
    if (y != 0 && y != 1)
        throw InvalidArgument("bce_loss: label must be 0 or 1, got " + std::to_string(y));
    if (std::isnan(y_hat))
        throw InvalidArgument("bce_loss: prediction is NaN");
    const double p = std::clamp(y_hat, kProbabilityClamp, 1.0 - kProbabilityClamp);
    return y == 1 ? -std::log(p) : -std::log1p(-p);
}

std::size_t sample_negative(std::size_t pos_index, std::size_t dataset_size, Rng& rng)
{
    if (dataset_size < 2)
        throw InvalidArgument("sample_negative: dataset_size must be >= 2");
    if (pos_index >= dataset_size)
        throw InvalidArgument("sample_negative: pos_index out of range");
    std::uniform_int_distribution<std::size_t> dist(0, dataset_size - 2);
    const std::size_t r = dist(rng);
    return r >= pos_index ? r + 1 : r;
}

Strategy parse_strategy(std::string_view name)
{
    if (name == "cls") return Strategy::Cls;
    if (name == "ot") return Strategy::Ot;
    if (name == "pot") return Strategy::Pot;
    if (name == "cls+ot") return Strategy::ClsOt;
    if (name == "cls+pot") return Strategy::ClsPot;
    throw InvalidArgument("unknown strategy '" + std::string(name) + "' (expected cls, ot, pot, cls+ot, cls+pot)");
}

std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::Cls: return "cls";
    case Strategy::Ot: return "ot";
    case Strategy::Pot: return "pot";
    case Strategy::ClsOt: return "cls+ot";
    case Strategy::ClsPot: return "cls+pot";
    }
    return "?";
}

bool uses_classifier(Strategy s)
{
    return s == Strategy::Cls || s == Strategy::ClsOt || s == Strategy::ClsPot;
}

std::optional<TransportMode> alignment_mode(Strategy s)
{
    switch (s) {
    case Strategy::Ot:
    case Strategy::ClsOt: return TransportMode::Balanced;
    case Strategy::Pot:
    case Strategy::ClsPot: return TransportMode::Partial;
    case Strategy::Cls: break;
    }
    return std::nullopt;
}

AlignTarget parse_align_target(std::string_view name)
{
    if (name == "ground") return AlignTarget::Ground;
    if (name == "visual_textual") return AlignTarget::VisualTextual;
    throw InvalidArgument("unknown align_target '" + std::string(name) + "' (expected ground, visual_textual)");
}

std::string_view to_string(AlignTarget t)
{
    return t == AlignTarget::Ground ? "ground" : "visual_textual";
}

TransportMode parse_transport_mode(std::string_view name)
{
    if (name == "ot") return TransportMode::Balanced;
    if (name == "pot") return TransportMode::Partial;
    throw InvalidArgument("unknown transport mode '" + std::string(name) + "' (expected ot, pot)");
}

std::string_view to_string(TransportMode m)
{
    return m == TransportMode::Balanced ? "ot" : "pot";
}

LossReport alignment_loss(const GroundingModel& model, const PairBatch& batch, const SolverConfig& solver,
                          TransportMode mode, AlignTarget target)
{
    LossConfig cfg;
    cfg.strategy = mode == TransportMode::Balanced ? Strategy::Ot : Strategy::Pot;
    cfg.w_cls = 0.0;
    cfg.w_align = 1.0;
    cfg.solver = solver;
    cfg.align_target = target;
    return forward_loss(model, batch, cfg);
}

LossReport combined_loss(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg)
{
    return forward_loss(model, batch, cfg);
}

} // namespace otground
