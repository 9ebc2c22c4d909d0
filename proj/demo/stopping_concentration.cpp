// Snell envelope of a discounted put on Brownian paths: value against a
// binomial tree, then Gaussian concentration of S at t = 1/2.
#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pathineq/inequalities.hpp"
#include "pathineq/stopping.hpp"

using namespace pathineq;

int main() {
    auto grid = make_grid(1.0, 50);
    auto ob = put_obstacle(0.5, 1.0);
    SnellConfig cfg;
    cfg.basis = BasisConfig{BasisKind::LocalAverage, 3, 32, 1e-10, true};
    auto sol = snell_envelope_lsmc(ob, grid, sample_brownian(grid, 1, 10000, 5), cfg);
    TreeConfig tc;
    tc.steps = 5000;
    tc.exercise_every = 100;
    double tree = snell_envelope_tree([](double t, double x) { return std::exp(-t) * std::max(0.5 - x, 0.0); }, tc);
    std::printf("S0 (least squares) = %.4f +- %.4f, tree = %.4f, C_s = %.1f\n", sol.value0, sol.se0, tree,
                stopping_constants(ob.L_Gamma));

    std::vector<double> mid;
    for (const auto& p : sol.S.paths) mid.push_back(p(25, 0));
    auto tail = gaussian_concentration_probe(mid, linear_grid(0.0, 0.4, 17));
    std::printf("P(|S_1/2 - E S_1/2| > x) ~ exp(b - c x^2): c = %.2f, R^2 = %.3f (%zu points), %s\n", tail.c, tail.r2,
                tail.points_used, to_string(tail.verdict));
    for (std::size_t i = 0; i < tail.x.size(); i += 4) std::printf("  x = %.3f  tail = %.4f\n", tail.x[i], tail.tail[i]);
}
