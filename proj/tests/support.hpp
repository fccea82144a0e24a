#pragma once

#include <random>

#include "otground/ot.hpp"
#include "otground/rng.hpp"

namespace otground::testing {

struct Instance {
    MatrixXd C;
    VectorXd a;
    VectorXd b;
};

// Cosine costs between Gaussian point clouds in R^3 with uniform marginals.
// Sizes are drawn from [min_size, max_size] unless fixed.
inline Instance random_instance(std::uint64_t seed, std::uint64_t index, int min_size = 1, int max_size = 4,
                                int fixed_m = 0, int fixed_n = 0)
{
    Rng rng = make_rng(seed, index);
    std::uniform_int_distribution<int> size(min_size, max_size);
    const int m = fixed_m > 0 ? fixed_m : size(rng);
    const int n = fixed_n > 0 ? fixed_n : size(rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd source(m, 3), target(n, 3);
    for (Eigen::Index i = 0; i < source.size(); ++i)
        source.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < target.size(); ++i)
        target.data()[i] = normal(rng);
    return {cosine_cost_matrix(source, target), uniform_weights(m), uniform_weights(n)};
}

inline MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i, j) = dist(rng);
    return out;
}

template <typename A, typename B>
bool bitwise_equal(const A& x, const B& y)
{
    return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
}

} // namespace otground::testing
