#include "paretoda/dirsolve.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace paretoda {

namespace {
constexpr double kZeroBundleTol = 1e-14;
constexpr double kOptFaceTol = 1e-9;
}

void GradientBundle::validate() const {
    if (G.cols() < 2) throw std::invalid_argument("GradientBundle: need at least two objectives");
    if (g_hat_v.size() != G.rows())
        throw std::invalid_argument("GradientBundle: guidance gradient length mismatch");
    if (!G.allFinite() || !g_hat_v.allFinite() || !std::isfinite(l_val_shifted))
        throw std::invalid_argument("GradientBundle: non-finite entries");
}

void SimplexWeights::validate() const {
    if ((w.array() < -1e-9).any()) throw std::invalid_argument("SimplexWeights: negative weight");
    if (std::abs(w.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("SimplexWeights: weights do not sum to 1");
}

const char* to_string(DescentMode mode) {
    return mode == DescentMode::PureDescent ? "pure_descent" : "guidance_descent";
}

const char* to_string(LpFallback fb) {
    switch (fb) {
        case LpFallback::None: return "none";
        case LpFallback::RelaxedRhs: return "relaxed_rhs";
        case LpFallback::MinNorm: return "min_norm";
    }
    return "none";
}

GramData compute_gram(const GradientBundle& bundle) {
    bundle.validate();
    GramData gram;
    gram.M = bundle.G.transpose() * bundle.G;
    gram.M = 0.5 * (gram.M + gram.M.transpose()).eval();  // enforce exact symmetry
    gram.a = bundle.G.transpose() * bundle.g_hat_v;
    if (!gram.M.allFinite() || !gram.a.allFinite())
        throw std::invalid_argument("compute_gram: non-finite result");
    return gram;
}

IndexSets index_sets(const Vec& a, double tie_tol) {
    if (!a.allFinite()) throw std::invalid_argument("index_sets: non-finite entries");
    IndexSets sets;
    const double amax = a.maxCoeff();
    for (int j = 0; j < a.size(); ++j) {
        if (a(j) > 0.0) sets.J.push_back(j);
        else sets.Jbar.push_back(j);
        if (a(j) >= amax - tie_tol) sets.Jstar.push_back(j);
    }
    return sets;
}

DescentMode select_mode(double l_val_shifted, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("select_mode: epsilon must be positive");
    if (l_val_shifted < -1e-9)
        throw std::invalid_argument("select_mode: negative shifted validation loss");
    return l_val_shifted <= epsilon ? DescentMode::PureDescent : DescentMode::GuidanceDescent;
}

SimplexLp build_direction_lp(const GramData& gram, DescentMode mode, IndexSets* sets_out,
                             bool descent_rows) {
    const int m = static_cast<int>(gram.M.rows());
    // the pure-descent case analysis has a vanishing guidance gradient, so
    // the LP is formed with a = 0 there: J empty, every row a descent row
    const Vec a_eff = (mode == DescentMode::PureDescent || descent_rows) ? Vec(Vec::Zero(m))
                                                                         : gram.a;
    const IndexSets sets = index_sets(a_eff);
    if (sets_out) *sets_out = sets;
    const bool j_nonempty = !sets.J.empty();

    SimplexLp lp;
    lp.c = mode == DescentMode::PureDescent ? Vec(gram.M * Vec::Constant(m, 1.0 / m)) : gram.a;

    std::vector<int> rows;
    std::vector<double> rhs;
    auto in_jstar = [&](int j) {
        return std::find(sets.Jstar.begin(), sets.Jstar.end(), j) != sets.Jstar.end();
    };
    for (int j : sets.Jbar) {
        if (in_jstar(j)) continue;
        rows.push_back(j);
        rhs.push_back(j_nonempty ? a_eff(j) : 0.0);
    }
    for (int j : sets.Jstar) {
        rows.push_back(j);
        rhs.push_back(0.0);
    }
    lp.A.resize(static_cast<int>(rows.size()), m);
    lp.b.resize(static_cast<int>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        lp.A.row(static_cast<int>(i)) = gram.M.row(rows[i]);
        lp.b(static_cast<int>(i)) = rhs[i];
    }
    return lp;
}

namespace {

// closest point of conv{vertices} to the uniform weights
Vec project_uniform_onto_face(const std::vector<Vec>& vertices) {
    const int m = static_cast<int>(vertices.front().size());
    const int r = static_cast<int>(vertices.size());
    if (r == 1) return vertices.front();
    Mat V(m, r);
    for (int i = 0; i < r; ++i) V.col(i) = vertices[i];
    const Vec u = Vec::Constant(m, 1.0 / m);
    const Mat H = 2.0 * V.transpose() * V;
    const Vec g = -2.0 * V.transpose() * u;
    const Vec lambda = simplex_quadratic_min(H, g, Vec::Constant(r, 1.0 / r));
    return V * lambda;
}

Vec clean_simplex_point(Vec w) {
    w = w.cwiseMax(0.0);
    const double s = w.sum();
    if (s > 0.0) w /= s;
    return w;
}

}  // namespace

DirectionOutcome solve_paretoda_lp(const GramData& gram, DescentMode mode) {
    const int m = static_cast<int>(gram.M.rows());
    DirectionOutcome out;
    out.mode = mode;

    if (gram.M.lpNorm<Eigen::Infinity>() < kZeroBundleTol &&
        gram.a.lpNorm<Eigen::Infinity>() < kZeroBundleTol) {
        // all gradients vanish: Pareto critical, the update halts
        out.weights.w = Vec::Constant(m, 1.0 / m);
        out.mode = DescentMode::PureDescent;
        out.slacks = Vec::Zero(m);
        out.sets = index_sets(Vec::Zero(m));
        out.converged_halt = true;
        return out;
    }

    auto attempt = [&](bool descent_rows) {
        SimplexLp lp = build_direction_lp(gram, mode, &out.sets, descent_rows);

        LpSolution sol = solve_simplex_lp(lp);
        if (!sol.feasible) {
            // should not happen (the min-norm point is a feasibility witness);
            // ladder: zero every right-hand side, then fall back to min-norm
            lp.b.setZero();
            sol = solve_simplex_lp(lp);
            if (sol.feasible) {
                out.fallback = LpFallback::RelaxedRhs;
            } else {
                out.fallback = LpFallback::MinNorm;
                out.weights = solve_min_norm(gram.M).weights;
                out.slacks = gram.M * out.weights.w;
                out.gamma_star = gram.a.dot(out.weights.w);
                out.objective = lp.c.dot(out.weights.w);
                return;
            }
        }

        // gather the optimal face for deterministic tie-breaking
        std::vector<Vec> vertices = enumerate_vertices(lp);
        double best = sol.objective;
        for (const auto& v : vertices) best = std::max(best, lp.c.dot(v));
        std::vector<Vec> optimal;
        for (const auto& v : vertices)
            if (lp.c.dot(v) >= best - kOptFaceTol) optimal.push_back(v);

        Vec w = optimal.empty() ? sol.w : project_uniform_onto_face(optimal);
        out.weights.w = clean_simplex_point(w);
        out.weights.validate();
        out.slacks = gram.M * out.weights.w;
        out.gamma_star = gram.a.dot(out.weights.w);
        out.objective = lp.c.dot(out.weights.w);
    };

    attempt(false);
    if (mode == DescentMode::GuidanceDescent && out.fallback == LpFallback::None &&
        out.gamma_star <= 0.0 && !out.sets.J.empty()) {
        // no gradient is consistent with the guidance: keep maximizing the
        // guidance alignment but require a full descent direction (with J
        // already empty the first solve was that system)
        out.descent_stage = true;
        attempt(true);
    }
    return out;
}

SimplexWeights brute_force_lp_oracle(const GramData& gram, DescentMode mode,
                                     double grid_resolution, double feasibility_tol) {
    if (!(grid_resolution > 0.0) || grid_resolution > 0.1)
        throw std::invalid_argument("brute_force_lp_oracle: resolution must be in (0, 0.1]");
    if (feasibility_tol < 0.0) feasibility_tol = grid_resolution;
    const int m = static_cast<int>(gram.M.rows());
    const int steps = static_cast<int>(std::lround(1.0 / grid_resolution));

    auto scan_lattice = [&](const SimplexLp& lp) {
        SimplexWeights best;
        double best_obj = -std::numeric_limits<double>::infinity();
        Vec w(m);
        // enumerate integer compositions of `steps` into m parts
        std::vector<int> counts(m, 0);
        std::function<void(int, int)> scan = [&](int idx, int remaining) {
            if (idx == m - 1) {
                counts[idx] = remaining;
                for (int j = 0; j < m; ++j) w(j) = counts[j] * grid_resolution;
                w(m - 1) = 1.0 - (w.head(m - 1).sum());  // kill accumulated rounding
                if (lp.A.rows() == 0 || ((lp.A * w - lp.b).array() >= -feasibility_tol).all()) {
                    const double obj = lp.c.dot(w);
                    if (obj > best_obj) {
                        best_obj = obj;
                        best.w = w;
                    }
                }
                return;
            }
            for (int c = 0; c <= remaining; ++c) {
                counts[idx] = c;
                scan(idx + 1, remaining - c);
            }
        };
        scan(0, steps);
        return std::pair{best, best_obj};
    };

    auto [best, best_obj] = scan_lattice(build_direction_lp(gram, mode));
    // mirror the solver's two-stage rule for a nonpositive guidance optimum
    if (mode == DescentMode::GuidanceDescent && best.w.size() > 0 && best_obj <= 0.0)
        best = scan_lattice(build_direction_lp(gram, mode, nullptr, /*descent_rows=*/true)).first;
    return best;
}

MinNormResult solve_min_norm(const Mat& M) {
    const int m = static_cast<int>(M.rows());
    MinNormResult out;
    out.weights.w = simplex_quadratic_min(2.0 * M, Vec::Zero(m), Vec::Constant(m, 1.0 / m),
                                          /*gap_tol=*/1e-10, /*max_iters=*/10000);
    out.dnorm2 = out.weights.w.dot(M * out.weights.w);
    return out;
}

Vec compose_direction(const GradientBundle& bundle, const DirectionOutcome& outcome) {
    if (bundle.G.cols() != outcome.weights.w.size())
        throw std::invalid_argument("compose_direction: weight/gradient count mismatch");
    const Vec d = bundle.G * outcome.weights.w;
    const Vec slacks_d = bundle.G.transpose() * d;
    const double scale = std::max(1.0, outcome.slacks.lpNorm<Eigen::Infinity>());
    if ((slacks_d - outcome.slacks).lpNorm<Eigen::Infinity>() > 1e-8 * scale)
        throw std::runtime_error("compose_direction: d-space slacks disagree with Gram slacks");
    return d;
}

Theorem1Report check_theorem1(const GradientBundle& bundle, const DirectionOutcome& outcome,
                              double rel_tol) {
    const Vec d = bundle.G * outcome.weights.w;
    const double dnorm = d.norm();
    Theorem1Report rep;
    rep.gamma_d = d.dot(bundle.g_hat_v);

    auto check_descent = [&]() {
        rep.pass = true;
        rep.worst_slack = 0.0;
        for (int j = 0; j < bundle.G.cols(); ++j) {
            const double slack = d.dot(bundle.G.col(j));
            const double scale = std::max(dnorm * bundle.G.col(j).norm(), 1e-300);
            const double normalized = slack / scale;
            if (normalized < rep.worst_slack) {
                rep.worst_slack = normalized;
                rep.worst_index = j;
            }
            if (slack < -rel_tol * scale) {
                rep.pass = false;
                rep.detail = "descent slack violated at objective " + std::to_string(j) +
                             " (slack " + std::to_string(slack) + ")";
            }
        }
    };

    if (outcome.mode == DescentMode::PureDescent) {
        rep.branch = "pure";
        check_descent();
        return rep;
    }
    if (outcome.gamma_star > 0.0) {
        rep.branch = "guidance_positive";
        rep.pass = rep.gamma_d > 0.0;
        if (!rep.pass) rep.detail = "gamma* > 0 but d^T g_hat_v <= 0";
        return rep;
    }
    rep.branch = "guidance_nonpositive";
    check_descent();
    return rep;
}

Vec linear_direction(const Mat& G, const Vec& weights) {
    if (G.cols() != weights.size()) throw std::invalid_argument("linear_direction: shape mismatch");
    if ((weights.array() < 0.0).any())
        throw std::invalid_argument("linear_direction: weights must be nonnegative");
    return G * weights;
}

Vec mean_direction(const Mat& G) {
    return G * Vec::Constant(G.cols(), 1.0 / static_cast<double>(G.cols()));
}

}  // namespace paretoda
