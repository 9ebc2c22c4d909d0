#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace pathineq {

struct Assignment {
    std::vector<int> col_of_row;  // row i is matched to column col_of_row[i]
    double cost = 0.0;            // sum of matched costs, accumulated in row order
};

// Square min-cost assignment by shortest augmenting paths with row/column
// potentials (Hungarian / Jonker-Volgenant family), O(n^3). Among equal reduced
// costs the lowest column index is taken, which makes the result deterministic.
inline Assignment solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix must be square");
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if (j1 == 0) throw std::runtime_error("solve_assignment: non-finite costs");
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Assignment a;
    a.col_of_row.assign(n, -1);
    for (int j = 1; j <= n; ++j) a.col_of_row[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i) a.cost += cost(i, a.col_of_row[i]);
    return a;
}

}  // namespace pathineq
