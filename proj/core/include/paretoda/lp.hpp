#pragma once

#include <vector>

#include "paretoda/net.hpp"

namespace paretoda {

/// Linear program over the probability simplex:
///   maximize c^T w   s.t.   sum_j w_j = 1,  w >= 0,  A w >= b.
struct SimplexLp {
    Vec c;
    Mat A;  // r x m inequality rows (may be empty)
    Vec b;  // r
};

struct LpSolution {
    bool feasible = false;
    double objective = 0.0;
    Vec w;
};

/// Dense two-phase primal simplex with Bland's anti-cycling rule.
LpSolution solve_simplex_lp(const SimplexLp& lp);

/// All vertices of the feasible polytope, found by enumerating active sets;
/// exact for the small m this project deals in.
std::vector<Vec> enumerate_vertices(const SimplexLp& lp, double feas_tol = 1e-9);

/// Minimize 0.5 x^T H x + g^T x over the probability simplex with
/// away-step Frank-Wolfe and exact line search. Stops when the
/// Frank-Wolfe duality gap drops below gap_tol.
Vec simplex_quadratic_min(const Mat& H, const Vec& g, const Vec& x0, double gap_tol = 1e-12,
                          int max_iters = 10000);

}  // namespace paretoda
