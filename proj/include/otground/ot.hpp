#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "otground/errors.hpp"

namespace otground {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

// Solver knobs shared by the balanced and partial solvers.
//   beta: entropic temperature, iters: number of outer sweeps,
//   mass: total mass moved by the partial solver (ignored by solve_ot).
struct SolverConfig {
    double beta = 0.05;
    int iters = 200;
    double mass = 1.0;

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

template <typename Scalar>
struct TransportResult {
    Matrix<Scalar> plan;
    Scalar distance{};

    Scalar transported_mass() const { return plan.sum(); }
};

namespace detail {

// Slack allowed when comparing marginal totals.
inline constexpr double kBalanceTolerance = 1e-9;

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, const char* what)
{
    if (!x.allFinite())
        throw InvalidArgument(std::string(what) + " contains non-finite entries");
}

template <typename Derived>
void require_distribution(const Eigen::MatrixBase<Derived>& w, const char* what)
{
    require_finite(w, what);
    if (w.size() == 0)
        throw InvalidArgument(std::string(what) + " is empty");
    if ((w.array() < 0).any())
        throw InvalidArgument(std::string(what) + " has negative weights");
    if (!(w.array() > 0).any())
        throw InvalidArgument(std::string(what) + " has no positive weight");
}

inline void require_config(const SolverConfig& cfg)
{
    if (!(cfg.beta > 0) || !std::isfinite(cfg.beta))
        throw InvalidArgument("solver beta must be a positive finite number");
    if (cfg.iters < 1)
        throw InvalidArgument("solver iters must be >= 1");
}

template <typename DC, typename DA, typename DB>
void require_shapes(const Eigen::MatrixBase<DC>& C, const Eigen::MatrixBase<DA>& a,
                    const Eigen::MatrixBase<DB>& b)
{
    if (C.rows() != a.size() || C.cols() != b.size())
        throw InvalidArgument("cost matrix is " + std::to_string(C.rows()) + "x" +
                              std::to_string(C.cols()) + " but marginals have sizes " +
                              std::to_string(a.size()) + " and " + std::to_string(b.size()));
    require_finite(C, "cost matrix");
    require_distribution(a, "source weights");
    require_distribution(b, "target weights");
}

// log(sum(exp(x))) with the usual max shift; an all -inf input gives -inf.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::DenseBase<Derived>& x)
{
    using Scalar = typename Derived::Scalar;
    const Scalar top = x.maxCoeff();
    if (!std::isfinite(top))
        return top;
    return top + std::log((x.derived().array() - top).exp().sum());
}

// log(w) - log(z), treating zero weights as an exact -inf. A positive weight
// facing an empty row/column (z = -inf) or a non-finite z cannot be scaled.
template <typename Scalar>
Scalar log_ratio(Scalar log_w, Scalar log_z, const char* solver, int iteration)
{
    if (log_w == -std::numeric_limits<Scalar>::infinity())
        return log_w;
    if (!std::isfinite(log_z))
        throw NumericFailure(std::string(solver) + ": kernel mass underflow or overflow at iteration " +
                             std::to_string(iteration) + " (beta too small for the cost scale)");
    return log_w - log_z;
}

// Elementwise std::exp, so that -inf maps to an exact zero (the vectorized
// exp clamps its argument and returns a subnormal instead).
template <typename Scalar>
Matrix<Scalar> exp_plan(const Matrix<Scalar>& log_plan)
{
    return log_plan.unaryExpr([](Scalar x) { return std::exp(x); });
}

template <typename Scalar>
void require_finite_iterate(const Matrix<Scalar>& log_plan, const char* solver, int iteration)
{
    if ((log_plan.array().isNaN() || log_plan.array() == std::numeric_limits<Scalar>::infinity()).any())
        throw NumericFailure(std::string(solver) + ": non-finite plan at iteration " +
                             std::to_string(iteration));
}

} // namespace detail

// Uniform probability vector of length n.
template <typename Scalar = double>
Vector<Scalar> uniform_weights(Eigen::Index n)
{
    if (n < 1)
        throw InvalidArgument("uniform_weights requires n >= 1");
    return Vector<Scalar>::Constant(n, Scalar(1) / static_cast<Scalar>(n));
}

// C(i, j) = 1 - cos(source_i, target_j), clamped to [0, 2].
template <typename DS, typename DT>
Matrix<typename DS::Scalar> cosine_cost_matrix(const Eigen::MatrixBase<DS>& source,
                                               const Eigen::MatrixBase<DT>& target)
{
    using Scalar = typename DS::Scalar;
    if (source.cols() != target.cols())
        throw InvalidArgument("cosine_cost_matrix: dimension mismatch (" +
                              std::to_string(source.cols()) + " vs " +
                              std::to_string(target.cols()) + ")");
    if (source.rows() < 1 || target.rows() < 1 || source.cols() < 1)
        throw InvalidArgument("cosine_cost_matrix: empty embedding matrix");
    detail::require_finite(source, "source embeddings");
    detail::require_finite(target, "target embeddings");

    auto normalized = [](const auto& X, const char* which) {
        Matrix<Scalar> out = X;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const Scalar norm = out.row(i).norm();
            if (!(norm > Scalar(1e-12)))
                throw DegenerateInput(std::string("cosine_cost_matrix: ") + which + " row " +
                                      std::to_string(i) + " has zero norm");
            out.row(i) /= norm;
        }
        return out;
    };
    const Matrix<Scalar> S = normalized(source, "source");
    const Matrix<Scalar> T = normalized(target, "target");
    Matrix<Scalar> C = (Scalar(1) - (S * T.transpose()).array()).matrix();
    return C.cwiseMax(Scalar(0)).cwiseMin(Scalar(2));
}

// Balanced transport by inexact proximal-point iteration.
//
// Each outer sweep multiplies the Gibbs kernel A = exp(-C / beta) into the current
// plan and performs one pair of marginal scalings, so the plan tends to the
// unregularized optimum as iters grows. Requires sum(a) == sum(b).
// Iterates are stored as logarithms so that cells which are tiny early on
// (exp(-t C / beta) after t sweeps) are not flushed to zero.
template <typename DC, typename DA, typename DB>
TransportResult<typename DC::Scalar> solve_ot(const Eigen::MatrixBase<DC>& C,
                                              const Eigen::MatrixBase<DA>& a,
                                              const Eigen::MatrixBase<DB>& b,
                                              const SolverConfig& cfg)
{
    using Scalar = typename DC::Scalar;
    detail::require_config(cfg);
    detail::require_shapes(C, a, b);
    const Scalar mass_a = a.sum(), mass_b = b.sum();
    if (std::abs(mass_a - mass_b) > Scalar(detail::kBalanceTolerance))
        throw InvalidArgument("solve_ot: unbalanced marginals (" + std::to_string(mass_a) +
                              " vs " + std::to_string(mass_b) + ")");

    const Eigen::Index m = C.rows(), n = C.cols();
    const Scalar beta = static_cast<Scalar>(cfg.beta);
    const Vector<Scalar> log_a = a.array().log().matrix(), log_b = b.array().log().matrix();
    const Matrix<Scalar> log_A = -C / beta;

    // All quantities are carried as logarithms; exp(log_T) is the plan.
    Vector<Scalar> log_sigma = Vector<Scalar>::Constant(n, -std::log(static_cast<Scalar>(n)));
    Vector<Scalar> log_delta(m);
    Matrix<Scalar> log_T = Matrix<Scalar>::Zero(m, n);
    Matrix<Scalar> log_Q(m, n);

    for (int it = 1; it <= cfg.iters; ++it) {
        log_Q = log_A + log_T;
        for (Eigen::Index i = 0; i < m; ++i)
            log_delta[i] = detail::log_ratio(
                log_a[i], detail::log_sum_exp(log_Q.row(i).transpose() + log_sigma), "solve_ot", it);
        for (Eigen::Index j = 0; j < n; ++j)
            log_sigma[j] = detail::log_ratio(
                log_b[j], detail::log_sum_exp(log_Q.col(j) + log_delta), "solve_ot", it);
        log_T = (log_Q.colwise() + log_delta).rowwise() + log_sigma.transpose();
        detail::require_finite_iterate(log_T, "solve_ot", it);
    }

    TransportResult<Scalar> result;
    result.plan = detail::exp_plan(log_T);
    result.distance = C.cwiseProduct(result.plan).sum();
    return result;
}

// Partial transport of a fixed total mass cfg.mass with inequality marginals
// T 1 <= a and T^T 1 <= b. Row and column scalings are capped at 1, and every
// sweep ends by renormalizing the plan to the requested mass.
template <typename DC, typename DA, typename DB>
TransportResult<typename DC::Scalar> solve_pot(const Eigen::MatrixBase<DC>& C,
                                               const Eigen::MatrixBase<DA>& a,
                                               const Eigen::MatrixBase<DB>& b,
                                               const SolverConfig& cfg)
{
    using Scalar = typename DC::Scalar;
    detail::require_config(cfg);
    detail::require_shapes(C, a, b);
    const Scalar s = static_cast<Scalar>(cfg.mass);
    const Scalar cap = std::min<Scalar>(a.sum(), b.sum());
    if (!(s > 0) || s > cap * (Scalar(1) + Scalar(1e-12)))
        throw InvalidArgument("solve_pot: mass " + std::to_string(cfg.mass) +
                              " outside (0, " + std::to_string(cap) + "]");

    const Eigen::Index m = C.rows(), n = C.cols();
    const Scalar beta = static_cast<Scalar>(cfg.beta);
    const Scalar log_s = std::log(s);
    const Vector<Scalar> log_a = a.array().log().matrix(), log_b = b.array().log().matrix();

    auto rescale = [&](Matrix<Scalar>& log_P, int it) {
        const Scalar log_total = detail::log_sum_exp(log_P.reshaped());
        if (!std::isfinite(log_total))
            throw NumericFailure("solve_pot: plan lost all mass at iteration " +
                                 std::to_string(it) + " (beta too small for the cost scale)");
        log_P.array() += log_s - log_total;
    };

    Matrix<Scalar> log_T = -C / beta;
    rescale(log_T, 0);

    Vector<Scalar> log_kappa_a(m), log_kappa_b(n);
    for (int it = 1; it <= cfg.iters; ++it) {
        for (Eigen::Index i = 0; i < m; ++i)
            log_kappa_a[i] = std::min<Scalar>(
                detail::log_ratio(log_a[i], detail::log_sum_exp(log_T.row(i)), "solve_pot", it), 0);
        log_T.colwise() += log_kappa_a;
        for (Eigen::Index j = 0; j < n; ++j)
            log_kappa_b[j] = std::min<Scalar>(
                detail::log_ratio(log_b[j], detail::log_sum_exp(log_T.col(j)), "solve_pot", it), 0);
        log_T.rowwise() += log_kappa_b.transpose();
        rescale(log_T, it);
        detail::require_finite_iterate(log_T, "solve_pot", it);
    }

    TransportResult<Scalar> result;
    result.plan = detail::exp_plan(log_T);
    // Leaving the log domain perturbs the total by a few ulps; restore it.
    result.plan *= s / result.plan.sum();
    result.distance = C.cwiseProduct(result.plan).sum();
    return result;
}

enum class TransportMode { Balanced, Partial };

template <typename DC, typename DA, typename DB>
TransportResult<typename DC::Scalar> solve_transport(TransportMode mode,
                                                     const Eigen::MatrixBase<DC>& C,
                                                     const Eigen::MatrixBase<DA>& a,
                                                     const Eigen::MatrixBase<DB>& b,
                                                     const SolverConfig& cfg)
{
    return mode == TransportMode::Balanced ? solve_ot(C, a, b, cfg) : solve_pot(C, a, b, cfg);
}

} // namespace otground
