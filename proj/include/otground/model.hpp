#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <type_traits>

#include "otground/encoders.hpp"

namespace otground {

// One-hidden-layer ReLU perceptron: out = w2^T relu(w1^T x + b1) + b2.
// w1 is in x hidden, w2 is hidden x out.
struct MlpParams {
    MatrixXd w1;
    VectorXd b1;
    MatrixXd w2;
    VectorXd b2;

    Eigen::Index in_dim() const { return w1.rows(); }
    Eigen::Index hidden_dim() const { return w1.cols(); }
    Eigen::Index out_dim() const { return w2.cols(); }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct ModelDims {
    int d_h = 16;              // text hidden width
    int d_v = 16;              // visual feature width
    int d_g = 8;               // ground embedding width (also the image projection width)
    int k = 4;                 // final text layers fed to the grounding MLP
    int layers = 6;            // text encoder depth L
    double hidden_scale = 2.0; // MLP hidden width = hidden_scale * input width

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Every trainable tensor of the grounding model.
struct ParameterTensors {
    MlpParams vg;            // token grounding MLP: k*d_h -> d_g
    MlpParams prj;           // image projection MLP: d_v -> d_g
    VectorXd head_weight;    // matching head over [v_cls | t_cls], length d_g + d_h + d_g
    double head_bias = 0.0;

    friend bool operator==(const ParameterTensors&, const ParameterTensors&) = default;
};

struct GroundingModel : ParameterTensors {
    ModelDims dims;

    friend bool operator==(const GroundingModel&, const GroundingModel&) = default;
};

// Shape-congruent with a GroundingModel's tensors.
struct GradientSet : ParameterTensors {};

// Calls f(name, span) for every tensor in a fixed order.
template <typename Params, typename F>
    requires std::is_base_of_v<ParameterTensors, std::remove_const_t<Params>>
void for_each_tensor(Params& p, F&& f)
{
    auto visit = [&](std::string_view name, auto& t) { f(name, std::span(t.data(), static_cast<std::size_t>(t.size()))); };
    visit("vg.w1", p.vg.w1);
    visit("vg.b1", p.vg.b1);
    visit("vg.w2", p.vg.w2);
    visit("vg.b2", p.vg.b2);
    visit("prj.w1", p.prj.w1);
    visit("prj.b1", p.prj.b1);
    visit("prj.w2", p.prj.w2);
    visit("prj.b2", p.prj.b2);
    visit("head.weight", p.head_weight);
    f(std::string_view("head.bias"), std::span(&p.head_bias, 1));
}

std::size_t parameter_count(const ParameterTensors& p);

// Shape checks shared by the model builders and readers.
void validate_dims(const ModelDims& dims);
Eigen::Index hidden_width(const ModelDims& dims, Eigen::Index input_width);

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
GroundingModel init_model(const ModelDims& dims, std::uint64_t seed);
GradientSet zero_gradients(const ParameterTensors& like);

VectorXd mlp_forward(const MlpParams& p, const VectorXd& x);
// Row-wise application: each row of x is one input vector.
MatrixXd mlp_forward_rows(const MlpParams& p, const MatrixXd& x);

// Concatenation of the last k layers per token: tokens x (k * d_h).
MatrixXd stack_final_layers(const TextEncoding& text, int k);

// Ground embedding per token: tokens x d_g.
MatrixXd ground_embed(const GroundingModel& model, const TextEncoding& text);

// Row-wise [hidden | ground].
MatrixXd visual_textual_embed(const MatrixXd& hidden_final, const MatrixXd& ground);

struct ProjectedImage {
    VectorXd global;   // projected CLS vector
    MatrixXd patches;  // m x d_g
};

ProjectedImage project_image(const GroundingModel& model, const VisionEncoding& vision);

} // namespace otground
