#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otground/model.hpp"
#include "otground/rng.hpp"

namespace otground {

// Numerically stable logistic function.
double sigmoid(double x);

// y_hat = sigmoid(head_weight . [v_cls | t_cls] + head_bias).
double match_predict(const VectorXd& v_cls, const VectorXd& t_cls, const VectorXd& head_weight,
                     double head_bias);

// Probabilities are clamped to [1e-12, 1 - 1e-12] before taking logs.
inline constexpr double kProbabilityClamp = 1e-12;
double bce_loss(double y_hat, int y);

// Uniform over {0..dataset_size-1} minus pos_index.
std::size_t sample_negative(std::size_t pos_index, std::size_t dataset_size, Rng& rng);

enum class Strategy { Cls, Ot, Pot, ClsOt, ClsPot };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);
bool uses_classifier(Strategy s);
// Transport flavour used by the alignment term, if the strategy has one.
std::optional<TransportMode> alignment_mode(Strategy s);
inline constexpr Strategy kAllStrategies[] = {Strategy::Cls, Strategy::Ot, Strategy::Pot, Strategy::ClsOt,
                                              Strategy::ClsPot};

// Which caption-side vectors the projected patches are compared against.
//   Ground: the d_g ground embeddings.
//   VisualTextual: the [hidden | ground] rows, with patches zero-padded on the hidden part.
enum class AlignTarget { Ground, VisualTextual };

AlignTarget parse_align_target(std::string_view name);
std::string_view to_string(AlignTarget t);

TransportMode parse_transport_mode(std::string_view name);
std::string_view to_string(TransportMode m);

struct LossConfig {
    Strategy strategy = Strategy::ClsPot;
    double w_cls = 1.0;
    double w_align = 1.0;
    std::optional<double> hinge_margin; // max(0, margin + D+ - D-) when set
    SolverConfig solver;
    AlignTarget align_target = AlignTarget::Ground;
};

// (caption, matching image, non-matching image) indices into a PairBatch's pools.
struct PairTriple {
    std::size_t caption = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
};

// Encoder outputs are referenced, never copied or modified.
struct PairBatch {
    std::span<const TextEncoding> captions;
    std::span<const VisionEncoding> images;
    std::vector<PairTriple> items;
};

struct LossReport {
    double cls_loss = 0.0;
    double align_loss = 0.0;
    double total = 0.0;
    std::vector<double> d_pos;
    std::vector<double> d_neg;
};

// Mean over items of D(v+, t) - D(v-, t) using uniform marginals on both sides.
LossReport alignment_loss(const GroundingModel& model, const PairBatch& batch, const SolverConfig& solver,
                          TransportMode mode, AlignTarget target = AlignTarget::Ground);

// w_cls * mean BCE over the (positive, 1) and (negative, 0) pairs plus
// w_align * alignment term, each only when the strategy includes it.
LossReport combined_loss(const GroundingModel& model, const PairBatch& batch, const LossConfig& cfg);

// Transport distance between one caption and one image under the given model.
double transport_distance(const GroundingModel& model, const TextEncoding& caption, const VisionEncoding& image,
                          const SolverConfig& solver, TransportMode mode, AlignTarget target);

// Matching probability for one caption/image pair.
double match_probability(const GroundingModel& model, const TextEncoding& caption, const VisionEncoding& image);

} // namespace otground
