#include "otground/encoders.hpp"

#include <cmath>
#include <string>

#include "otground/rng.hpp"

namespace otground {
namespace {

MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev)
{
    std::normal_distribution<double> dist(0.0, stddev);
    MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i, j) = dist(rng);
    return out;
}

VectorXd gaussian_vector(Rng& rng, Eigen::Index size, double stddev)
{
    return gaussian_matrix(rng, size, 1, stddev);
}

constexpr double kSelfWeight = 0.5;
constexpr double kLeftWeight = 0.3;
constexpr double kRightWeight = 0.2;
constexpr double kLayerGain = 1.5;

} // namespace

StubTextEncoder::StubTextEncoder(int layers, int width, std::uint64_t seed)
    : width_(width), seed_(seed)
{
    if (layers < 1 || width < 1)
        throw InvalidArgument("StubTextEncoder: layers and width must be >= 1");
    Rng rng = make_rng(seed, 0x7e47);
    const double stddev = kLayerGain / std::sqrt(static_cast<double>(width));
    for (int l = 0; l < layers; ++l) {
        maps_.push_back(gaussian_matrix(rng, width, width, stddev));
        offsets_.push_back(gaussian_vector(rng, width, 0.1));
    }
}

VectorXd StubTextEncoder::base_vector(int token_id) const
{
    Rng rng = make_rng(mix_seed(seed_, 0xba5e), static_cast<std::uint64_t>(token_id));
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    VectorXd v(width_);
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = dist(rng);
    return v;
}

TextEncoding StubTextEncoder::encode(std::span<const int> token_ids) const
{
    if (token_ids.empty())
        throw InvalidArgument("StubTextEncoder: empty token sequence");
    const auto n = static_cast<Eigen::Index>(token_ids.size());
    MatrixXd state(n, width_);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int id = token_ids[static_cast<std::size_t>(i)];
        if (id < 0)
            throw InvalidArgument("StubTextEncoder: negative token id at position " + std::to_string(i));
        state.row(i) = base_vector(id).transpose();
    }

    TextEncoding out;
    out.layers.reserve(maps_.size());
    for (std::size_t l = 0; l < maps_.size(); ++l) {
        MatrixXd mixed = kSelfWeight * state;
        if (n > 1) {
            mixed.bottomRows(n - 1) += kLeftWeight * state.topRows(n - 1);
            mixed.topRows(n - 1) += kRightWeight * state.bottomRows(n - 1);
        }
        state = ((mixed * maps_[l]).rowwise() + offsets_[l].transpose()).array().tanh().matrix();
        out.layers.push_back(state);
    }
    return out;
}

StubVisualEncoder::StubVisualEncoder(int latent_dim, int width, std::uint64_t seed)
{
    if (latent_dim < 1 || width < 1)
        throw InvalidArgument("StubVisualEncoder: latent_dim and width must be >= 1");
    Rng rng = make_rng(seed, 0x715a);
    patch_map_ = gaussian_matrix(rng, latent_dim, width, 1.0 / std::sqrt(static_cast<double>(latent_dim)));
    patch_offset_ = gaussian_vector(rng, width, 0.1);
    global_map_ = gaussian_matrix(rng, width, width, 1.0 / std::sqrt(static_cast<double>(width)));
    global_offset_ = gaussian_vector(rng, width, 0.1);
}

VisionEncoding StubVisualEncoder::encode(const MatrixXd& patch_latents) const
{
    if (patch_latents.rows() < 1)
        throw InvalidArgument("StubVisualEncoder: at least one patch is required");
    if (patch_latents.cols() != patch_map_.rows())
        throw InvalidArgument("StubVisualEncoder: patch latent dim " + std::to_string(patch_latents.cols()) +
                              " != " + std::to_string(patch_map_.rows()));
    VisionEncoding out;
    out.patches = (patch_latents * patch_map_).rowwise() + patch_offset_.transpose();
    const VectorXd mean = out.patches.colwise().mean().transpose();
    out.global = global_map_.transpose() * mean + global_offset_;
    return out;
}

} // namespace otground
