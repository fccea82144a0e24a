#include "otground/model.hpp"

#include <cmath>
#include <string>

#include "otground/rng.hpp"

namespace otground {
namespace {

MatrixXd uniform_fan_in(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < fan_in; ++i)
        for (Eigen::Index j = 0; j < fan_out; ++j)
            w(i, j) = dist(rng);
    return w;
}

MlpParams init_mlp(Rng& rng, Eigen::Index in, Eigen::Index hidden, Eigen::Index out)
{
    MlpParams p;
    p.w1 = uniform_fan_in(rng, in, hidden);
    p.b1 = VectorXd::Zero(hidden);
    p.w2 = uniform_fan_in(rng, hidden, out);
    p.b2 = VectorXd::Zero(out);
    return p;
}

void check_mlp_shapes(const MlpParams& p)
{
    if (p.b1.size() != p.w1.cols() || p.w2.rows() != p.w1.cols() || p.b2.size() != p.w2.cols())
        throw InvalidArgument("mlp: inconsistent parameter shapes");
}

} // namespace

std::size_t parameter_count(const ParameterTensors& p)
{
    std::size_t total = 0;
    for_each_tensor(p, [&](std::string_view, auto span) { total += span.size(); });
    return total;
}

void validate_dims(const ModelDims& dims)
{
    if (dims.d_h < 1 || dims.d_v < 1 || dims.d_g < 1)
        throw InvalidArgument("model dims d_h, d_v, d_g must be >= 1");
    if (dims.k < 1 || dims.layers < 1)
        throw InvalidArgument("model k and layers must be >= 1");
    if (dims.k > dims.layers)
        throw InvalidArgument("model k (" + std::to_string(dims.k) + ") exceeds layers (" +
                              std::to_string(dims.layers) + ")");
    if (!(dims.hidden_scale > 0))
        throw InvalidArgument("model hidden_scale must be > 0");
}

Eigen::Index hidden_width(const ModelDims& dims, Eigen::Index input_width)
{
    const auto h = static_cast<Eigen::Index>(std::lround(dims.hidden_scale * static_cast<double>(input_width)));
    return std::max<Eigen::Index>(h, 1);
}

GroundingModel init_model(const ModelDims& dims, std::uint64_t seed)
{
    validate_dims(dims);
    Rng rng = make_rng(seed, 0x1417);
    GroundingModel model;
    model.dims = dims;
    const Eigen::Index vg_in = static_cast<Eigen::Index>(dims.k) * dims.d_h;
    model.vg = init_mlp(rng, vg_in, hidden_width(dims, vg_in), dims.d_g);
    model.prj = init_mlp(rng, dims.d_v, hidden_width(dims, dims.d_v), dims.d_g);
    const Eigen::Index head_len = 2 * dims.d_g + dims.d_h;
    model.head_weight = uniform_fan_in(rng, head_len, 1).col(0);
    model.head_bias = 0.0;
    return model;
}

GradientSet zero_gradients(const ParameterTensors& like)
{
    GradientSet g;
    g.vg = {MatrixXd::Zero(like.vg.w1.rows(), like.vg.w1.cols()), VectorXd::Zero(like.vg.b1.size()),
            MatrixXd::Zero(like.vg.w2.rows(), like.vg.w2.cols()), VectorXd::Zero(like.vg.b2.size())};
    g.prj = {MatrixXd::Zero(like.prj.w1.rows(), like.prj.w1.cols()), VectorXd::Zero(like.prj.b1.size()),
             MatrixXd::Zero(like.prj.w2.rows(), like.prj.w2.cols()), VectorXd::Zero(like.prj.b2.size())};
    g.head_weight = VectorXd::Zero(like.head_weight.size());
    g.head_bias = 0.0;
    return g;
}

VectorXd mlp_forward(const MlpParams& p, const VectorXd& x)
{
    check_mlp_shapes(p);
    if (x.size() != p.in_dim())
        throw InvalidArgument("mlp_forward: input length " + std::to_string(x.size()) + " != " +
                              std::to_string(p.in_dim()));
    const VectorXd hidden = (p.w1.transpose() * x + p.b1).cwiseMax(0.0);
    return p.w2.transpose() * hidden + p.b2;
}

MatrixXd mlp_forward_rows(const MlpParams& p, const MatrixXd& x)
{
    check_mlp_shapes(p);
    if (x.cols() != p.in_dim())
        throw InvalidArgument("mlp_forward: input width " + std::to_string(x.cols()) + " != " +
                              std::to_string(p.in_dim()));
    // Row by row, so a row's output never depends on where it sits in x.
    MatrixXd out(x.rows(), p.out_dim());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const VectorXd hidden = (p.w1.transpose() * x.row(i).transpose() + p.b1).cwiseMax(0.0);
        out.row(i) = (p.w2.transpose() * hidden + p.b2).transpose();
    }
    return out;
}

MatrixXd stack_final_layers(const TextEncoding& text, int k)
{
    const Eigen::Index layers = text.layer_count();
    if (k < 1 || k > layers)
        throw InvalidArgument("ground_embed: k = " + std::to_string(k) + " but encoder has " +
                              std::to_string(layers) + " layers");
    const Eigen::Index n = text.tokens(), d = text.width();
    MatrixXd stacked(n, k * d);
    for (int j = 0; j < k; ++j) {
        const MatrixXd& layer = text.layers[static_cast<std::size_t>(layers - k + j)];
        if (layer.rows() != n || layer.cols() != d)
            throw InvalidArgument("ground_embed: ragged encoder layers");
        stacked.middleCols(j * d, d) = layer;
    }
    return stacked;
}

MatrixXd ground_embed(const GroundingModel& model, const TextEncoding& text)
{
    return mlp_forward_rows(model.vg, stack_final_layers(text, model.dims.k));
}

MatrixXd visual_textual_embed(const MatrixXd& hidden_final, const MatrixXd& ground)
{
    if (hidden_final.rows() != ground.rows())
        throw InvalidArgument("visual_textual_embed: row counts differ (" + std::to_string(hidden_final.rows()) +
                              " vs " + std::to_string(ground.rows()) + ")");
    MatrixXd out(hidden_final.rows(), hidden_final.cols() + ground.cols());
    out << hidden_final, ground;
    return out;
}

ProjectedImage project_image(const GroundingModel& model, const VisionEncoding& vision)
{
    if (vision.patches.rows() < 1)
        throw InvalidArgument("project_image: no patches");
    if (vision.global.size() != vision.patches.cols())
        throw InvalidArgument("project_image: global and patch widths differ");
    MatrixXd stacked(vision.patches.rows() + 1, vision.patches.cols());
    stacked << vision.global.transpose(), vision.patches;
    const MatrixXd projected = mlp_forward_rows(model.prj, stacked);
    return {projected.row(0).transpose(), projected.bottomRows(vision.patches.rows())};
}

} // namespace otground
