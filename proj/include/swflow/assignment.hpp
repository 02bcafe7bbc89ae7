#pragma once

#include <Eigen/Core>
#include <limits>
#include <stdexcept>
#include <vector>

namespace swflow {

struct AssignmentResult {
    std::vector<Eigen::Index> row_to_col;
    double cost = 0.0;
};

/// Minimum-cost assignment on a square cost matrix by shortest augmenting
/// paths with dual potentials, O(n^3).
inline AssignmentResult solve_assignment(const Eigen::MatrixXd& cost) {
    const Eigen::Index n = cost.rows();
    if (n == 0 || cost.cols() != n)
        throw std::invalid_argument("solve_assignment: need a nonempty square matrix");
    if (!cost.allFinite())
        throw std::invalid_argument("solve_assignment: costs must be finite");

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; p[j] is the row matched to column j, column 0 is virtual.
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<Eigen::Index> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<Eigen::Index> way(static_cast<std::size_t>(n) + 1, 0);

    for (Eigen::Index i = 1; i <= n; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            Eigen::Index j1 = 0;
            for (Eigen::Index j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (Eigen::Index j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    AssignmentResult out;
    out.row_to_col.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index j = 1; j <= n; ++j)
        out.row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
    for (Eigen::Index i = 0; i < n; ++i)
        out.cost += cost(i, out.row_to_col[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace swflow
