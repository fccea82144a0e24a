#include "otground/lp_oracle.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace otground {
namespace {

constexpr double kPivotTolerance = 1e-12;
constexpr double kFeasibilityTolerance = 1e-9;

// Dense tableau for  min c^T x  s.t.  A x = rhs, x >= 0, rhs >= 0.
// Column layout: [structural vars | one artificial per row | rhs].
class Tableau {
public:
    Tableau(const MatrixXd& A, const VectorXd& rhs)
        : rows_(A.rows()), structural_(A.cols()),
          table_(MatrixXd::Zero(A.rows() + 1, A.cols() + A.rows() + 1)),
          basis_(static_cast<std::size_t>(A.rows())), active_(static_cast<std::size_t>(A.rows()), true)
    {
        for (Eigen::Index i = 0; i < rows_; ++i) {
            table_.row(i).head(structural_) = A.row(i);
            table_(i, structural_ + i) = 1.0;
            table_(i, rhs_col()) = rhs[i];
            basis_[static_cast<std::size_t>(i)] = structural_ + i;
        }
    }

    double phase_one()
    {
        VectorXd cost = VectorXd::Zero(table_.cols() - 1);
        cost.segment(structural_, rows_).setOnes();
        price(cost);
        iterate(table_.cols() - 1);
        return -table_(rows_, rhs_col());
    }

    // Pivot remaining zero-level artificials out of the basis; rows where that is
    // impossible are linearly dependent and get dropped.
    void purge_artificials()
    {
        for (Eigen::Index i = 0; i < rows_; ++i) {
            const auto r = static_cast<std::size_t>(i);
            if (!active_[r] || basis_[r] < structural_)
                continue;
            Eigen::Index col = -1;
            for (Eigen::Index j = 0; j < structural_; ++j)
                if (std::abs(table_(i, j)) > kPivotTolerance) {
                    col = j;
                    break;
                }
            if (col >= 0)
                pivot(i, col);
            else
                active_[r] = false;
        }
    }

    double phase_two(const VectorXd& structural_cost)
    {
        VectorXd cost = VectorXd::Zero(table_.cols() - 1);
        cost.head(structural_) = structural_cost;
        price(cost);
        iterate(structural_);
        return -table_(rows_, rhs_col());
    }

private:
    Eigen::Index rhs_col() const { return table_.cols() - 1; }

    // Objective row = reduced costs; its rhs entry holds -objective.
    void price(const VectorXd& cost)
    {
        table_.row(rows_).head(cost.size()) = cost.transpose();
        table_(rows_, rhs_col()) = 0.0;
        for (Eigen::Index i = 0; i < rows_; ++i) {
            const auto r = static_cast<std::size_t>(i);
            if (active_[r])
                table_.row(rows_) -= cost[basis_[r]] * table_.row(i);
        }
    }

    // Bland's rule over columns [0, allowed).
    void iterate(Eigen::Index allowed)
    {
        for (;;) {
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < allowed; ++j)
                if (table_(rows_, j) < -kPivotTolerance) {
                    enter = j;
                    break;
                }
            if (enter < 0)
                return;

            Eigen::Index leave = -1;
            double best = 0.0;
            for (Eigen::Index i = 0; i < rows_; ++i) {
                const auto r = static_cast<std::size_t>(i);
                if (!active_[r] || table_(i, enter) <= kPivotTolerance)
                    continue;
                const double ratio = table_(i, rhs_col()) / table_(i, enter);
                if (leave < 0 || ratio < best - kPivotTolerance ||
                    (std::abs(ratio - best) <= kPivotTolerance &&
                     basis_[r] < basis_[static_cast<std::size_t>(leave)])) {
                    leave = i;
                    best = ratio;
                }
            }
            if (leave < 0)
                throw NumericFailure("exact_lp_oracle: unbounded linear program");
            pivot(leave, enter);
        }
    }

    void pivot(Eigen::Index row, Eigen::Index col)
    {
        table_.row(row) /= table_(row, col);
        for (Eigen::Index i = 0; i <= rows_; ++i)
            if (i != row && table_(i, col) != 0.0)
                table_.row(i) -= table_(i, col) * table_.row(row);
        basis_[static_cast<std::size_t>(row)] = col;
    }

    Eigen::Index rows_;
    Eigen::Index structural_;
    MatrixXd table_;
    std::vector<Eigen::Index> basis_;
    std::vector<bool> active_;
};

} // namespace

double exact_lp_oracle(const MatrixXd& C, const VectorXd& a, const VectorXd& b,
                       std::optional<double> mass)
{
    const Eigen::Index m = C.rows(), n = C.cols();
    if (m * n > kOracleMaxCells)
        throw UnsupportedSize("exact_lp_oracle: " + std::to_string(m) + "x" + std::to_string(n) +
                              " instance exceeds " + std::to_string(kOracleMaxCells) + " cells");
    detail::require_shapes(C, a, b);

    // Variable T(i, j) lives at column i * n + j; POT appends m + n slacks.
    const Eigen::Index cells = m * n;
    const bool partial = mass.has_value();
    const Eigen::Index vars = partial ? cells + m + n : cells;
    const Eigen::Index rows = partial ? m + n + 1 : m + n;

    if (partial) {
        const double cap = std::min(a.sum(), b.sum());
        if (!(*mass > 0) || *mass > cap * (1.0 + 1e-12))
            throw InvalidArgument("exact_lp_oracle: mass outside (0, " + std::to_string(cap) + "]");
    } else if (std::abs(a.sum() - b.sum()) > detail::kBalanceTolerance) {
        throw InvalidArgument("exact_lp_oracle: unbalanced marginals");
    }

    MatrixXd A = MatrixXd::Zero(rows, vars);
    VectorXd rhs(rows);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            A(i, i * n + j) = 1.0;
        if (partial)
            A(i, cells + i) = 1.0;
        rhs[i] = a[i];
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i)
            A(m + j, i * n + j) = 1.0;
        if (partial)
            A(m + j, cells + m + j) = 1.0;
        rhs[m + j] = b[j];
    }
    if (partial) {
        A.row(m + n).head(cells).setOnes();
        rhs[m + n] = *mass;
    }

    VectorXd cost = VectorXd::Zero(vars);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            cost[i * n + j] = C(i, j);

    Tableau tableau(A, rhs);
    if (tableau.phase_one() > kFeasibilityTolerance)
        throw InvalidArgument("exact_lp_oracle: infeasible transport problem");
    tableau.purge_artificials();
    return tableau.phase_two(cost);
}

} // namespace otground
