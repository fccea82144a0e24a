#pragma once

#include <optional>

#include "otground/ot.hpp"

namespace otground {

// Largest m*n accepted by exact_lp_oracle.
inline constexpr Eigen::Index kOracleMaxCells = 25;

// Exact optimum of the transport linear program on a tiny instance.
//
// With no mass the problem is balanced (T 1 = a, T^T 1 = b, T >= 0). With a mass s
// the marginals become inequalities and the total is pinned: T 1 <= a,
// T^T 1 <= b, 1^T T 1 = s. Solved by a dense two-phase simplex with Bland's rule,
// so the result is deterministic. Throws UnsupportedSize when m*n > 25.
double exact_lp_oracle(const MatrixXd& C, const VectorXd& a, const VectorXd& b,
                       std::optional<double> mass = std::nullopt);

} // namespace otground
