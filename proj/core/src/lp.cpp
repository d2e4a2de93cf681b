#include "paretoda/lp.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace paretoda {

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kReducedCostTol = 1e-11;

// Tableau simplex, maximization. T is rows x (ncols+1) with the rhs in the
// last column; basis[i] is the variable basic in row i. allowed marks the
// columns permitted to enter. Bland's rule throughout.
bool run_simplex(Mat& T, std::vector<int>& basis, const Vec& cost,
                 const std::vector<bool>& allowed) {
    const int rows = static_cast<int>(T.rows());
    const int ncols = static_cast<int>(T.cols()) - 1;
    for (;;) {
        // reduced costs r_j = c_j - c_B^T T_j
        Vec cb(rows);
        for (int i = 0; i < rows; ++i) cb(i) = cost(basis[i]);
        int enter = -1;
        for (int j = 0; j < ncols; ++j) {
            if (!allowed[j]) continue;
            const double rc = cost(j) - cb.dot(T.col(j));
            if (rc > kReducedCostTol) {
                enter = j;  // Bland: first improving index
                break;
            }
        }
        if (enter < 0) return true;  // optimal

        int leave = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < rows; ++i) {
            const double a = T(i, enter);
            if (a <= kPivotTol) continue;
            const double ratio = T(i, ncols) / a;
            if (leave < 0 || ratio < best_ratio - 1e-15 ||
                (std::abs(ratio - best_ratio) <= 1e-15 && basis[i] < basis[leave])) {
                leave = i;
                best_ratio = ratio;
            }
        }
        if (leave < 0) return false;  // unbounded (cannot happen on the simplex domain)

        // pivot
        T.row(leave) /= T(leave, enter);
        for (int i = 0; i < rows; ++i) {
            if (i == leave) continue;
            const double f = T(i, enter);
            if (f != 0.0) T.row(i) -= f * T.row(leave);
        }
        basis[leave] = enter;
    }
}

}  // namespace

LpSolution solve_simplex_lp(const SimplexLp& lp) {
    const int m = static_cast<int>(lp.c.size());
    const int r = static_cast<int>(lp.A.rows());
    if (m < 1) throw std::invalid_argument("solve_simplex_lp: empty problem");
    if (r > 0 && (lp.A.cols() != m || lp.b.size() != r))
        throw std::invalid_argument("solve_simplex_lp: shape mismatch");

    // standard form: x = [w; s] >= 0 with A w - s = b and sum w = 1,
    // artificials appended for the phase-1 basis
    const int rows = r + 1;
    const int nstruct = m + r;
    const int ncols = nstruct + rows;

    Mat T = Mat::Zero(rows, ncols + 1);
    for (int i = 0; i < r; ++i) {
        T.block(i, 0, 1, m) = lp.A.row(i);
        T(i, m + i) = -1.0;
        T(i, ncols) = lp.b(i);
    }
    T.block(r, 0, 1, m).setOnes();
    T(r, ncols) = 1.0;
    for (int i = 0; i < rows; ++i) {
        if (T(i, ncols) < 0.0) T.row(i) = -T.row(i);
        T(i, nstruct + i) = 1.0;
    }

    std::vector<int> basis(rows);
    for (int i = 0; i < rows; ++i) basis[i] = nstruct + i;

    // phase 1: drive the artificials to zero
    Vec cost1 = Vec::Zero(ncols);
    for (int i = 0; i < rows; ++i) cost1(nstruct + i) = -1.0;
    std::vector<bool> allow_all(ncols, true);
    run_simplex(T, basis, cost1, allow_all);

    double phase1 = 0.0;
    for (int i = 0; i < rows; ++i)
        if (basis[i] >= nstruct) phase1 += T(i, ncols);
    LpSolution sol;
    if (phase1 > 1e-9) return sol;  // infeasible

    // phase 2 with artificials barred from entering
    Vec cost2 = Vec::Zero(ncols);
    cost2.head(m) = lp.c;
    std::vector<bool> allowed(ncols, true);
    for (int i = 0; i < rows; ++i) allowed[nstruct + i] = false;
    run_simplex(T, basis, cost2, allowed);

    Vec x = Vec::Zero(ncols);
    for (int i = 0; i < rows; ++i) x(basis[i]) = T(i, static_cast<int>(T.cols()) - 1);
    sol.feasible = true;
    sol.w = x.head(m);
    sol.objective = lp.c.dot(sol.w);
    return sol;
}

std::vector<Vec> enumerate_vertices(const SimplexLp& lp, double feas_tol) {
    const int m = static_cast<int>(lp.c.size());
    const int r = static_cast<int>(lp.A.rows());
    const int ncons = m + r;  // nonnegativity rows then inequality rows

    auto constraint_row = [&](int idx) -> Vec {
        if (idx < m) return Vec::Unit(m, idx);
        return lp.A.row(idx - m).transpose();
    };
    auto constraint_rhs = [&](int idx) -> double { return idx < m ? 0.0 : lp.b(idx - m); };

    auto feasible = [&](const Vec& w) {
        if ((w.array() < -feas_tol).any()) return false;
        if (r > 0 && ((lp.A * w - lp.b).array() < -feas_tol).any()) return false;
        return true;
    };

    std::vector<Vec> vertices;
    auto push_unique = [&](const Vec& w) {
        for (const auto& v : vertices)
            if ((v - w).lpNorm<Eigen::Infinity>() < 1e-9) return;
        vertices.push_back(w);
    };

    if (m == 1) {
        Vec w = Vec::Ones(1);
        if (feasible(w)) push_unique(w);
        return vertices;
    }

    // each vertex is the simplex equality plus m-1 active constraints
    std::vector<int> pick(m - 1);
    std::function<void(int, int)> recurse = [&](int start, int depth) {
        if (depth == m - 1) {
            Mat S(m, m);
            Vec rhs(m);
            S.row(0).setOnes();
            rhs(0) = 1.0;
            for (int i = 0; i < m - 1; ++i) {
                S.row(i + 1) = constraint_row(pick[i]).transpose();
                rhs(i + 1) = constraint_rhs(pick[i]);
            }
            Eigen::FullPivLU<Mat> lu(S);
            lu.setThreshold(1e-10);
            if (lu.rank() == m) {
                const Vec w = lu.solve(rhs);
                if (w.allFinite() && feasible(w)) push_unique(w);
            }
            return;
        }
        for (int i = start; i < ncons; ++i) {
            pick[depth] = i;
            recurse(i + 1, depth + 1);
        }
    };
    recurse(0, 0);
    return vertices;
}

Vec simplex_quadratic_min(const Mat& H, const Vec& g, const Vec& x0, double gap_tol,
                          int max_iters) {
    const int m = static_cast<int>(x0.size());
    Vec x = x0;
    for (int it = 0; it < max_iters; ++it) {
        const Vec grad = H * x + g;

        int s = 0;
        grad.minCoeff(&s);
        const double fw_gap = grad.dot(x) - grad(s);
        if (fw_gap <= gap_tol) break;

        int v = -1;
        double worst = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i)
            if (x(i) > 0.0 && grad(i) > worst) {
                worst = grad(i);
                v = i;
            }
        const double away_gap = v >= 0 ? grad(v) - grad.dot(x) : -1.0;

        Vec d;
        double gamma_max;
        if (fw_gap >= away_gap || v < 0 || x(v) >= 1.0 - 1e-15) {
            d = Vec::Unit(m, s) - x;
            gamma_max = 1.0;
        } else {
            d = x - Vec::Unit(m, v);
            gamma_max = x(v) / (1.0 - x(v));
        }

        const double curvature = d.dot(H * d);
        double gamma = gamma_max;
        if (curvature > 0.0) gamma = std::min(gamma_max, -grad.dot(d) / curvature);
        if (gamma <= 0.0) break;

        x += gamma * d;
        x = x.cwiseMax(0.0);
        x /= x.sum();
    }
    return x;
}

}  // namespace paretoda
