#pragma once

#include <string>
#include <vector>

#include "paretoda/lp.hpp"

namespace paretoda {

inline constexpr double kJstarTieTol = 1e-9;
inline constexpr double kDefaultEpsilon = 1e-3;

/// Per-step gradient data: columns of G are the objective gradients in the
/// fixed order (source CE, alignment, target TCM); g_hat_v is the held-out
/// guidance gradient.
struct GradientBundle {
    Mat G;
    Vec g_hat_v;
    double l_val_shifted = 0.0;

    void validate() const;
};

/// Gram compression of a bundle: M = G^T G, a = G^T g_hat_v. Everything the
/// direction LP needs, at O(m^2 d) once instead of O(d) per constraint.
struct GramData {
    Mat M;
    Vec a;
};

struct SimplexWeights {
    Vec w;
    void validate() const;
};

enum class DescentMode { PureDescent, GuidanceDescent };
enum class LpFallback { None, RelaxedRhs, MinNorm };

const char* to_string(DescentMode mode);
const char* to_string(LpFallback fb);

/// J = {j : a_j > 0}, Jbar = complement, Jstar = argmax set (with tie_tol).
struct IndexSets {
    std::vector<int> J, Jbar, Jstar;
};

struct DirectionOutcome {
    SimplexWeights weights;
    double gamma_star = 0.0;  // w^T a, the guidance inner product of d*
    DescentMode mode = DescentMode::GuidanceDescent;
    Vec slacks;               // M w, i.e. d*^T g_j in Gram arithmetic
    IndexSets sets;           // the sets the LP was formed with
    LpFallback fallback = LpFallback::None;
    bool converged_halt = false;   // all-zero bundle: update is meaningless
    bool descent_stage = false;    // gamma* <= 0: re-solved with full descent rows
    double objective = 0.0;        // LP objective attained
};

GramData compute_gram(const GradientBundle& bundle);

IndexSets index_sets(const Vec& a, double tie_tol = kJstarTieTol);

/// pure descent iff the shifted validation loss is within epsilon of zero.
DescentMode select_mode(double l_val_shifted, double epsilon = kDefaultEpsilon);

/// The direction LP over the simplex. Guidance mode maximizes w^T a; pure
/// mode maximizes alignment with the mean gradient and treats the guidance
/// vector as zero (the case analysis behind the mode assumes a vanishing
/// held-out gradient), which makes every constraint a descent constraint.
/// A guidance solve whose optimum has w^T a <= 0 is re-solved with the full
/// descent constraint set: no gradient is consistent with the guidance, so
/// the direction is only required to decrease the training losses while
/// approximating the guidance as far as feasible. Ties among optimal
/// vertices break toward the point of the optimal face closest to the
/// uniform weights.
DirectionOutcome solve_paretoda_lp(const GramData& gram, DescentMode mode);

/// The Eq-style LP data actually solved (exposed for tests and the oracle).
/// descent_rows forces every constraint row to rhs 0 (the J-empty system).
SimplexLp build_direction_lp(const GramData& gram, DescentMode mode, IndexSets* sets_out = nullptr,
                             bool descent_rows = false);

/// Exhaustive simplex-lattice scan at the given resolution; feasibility is
/// checked with slack tolerance equal to the resolution unless an explicit
/// tolerance is given (acceptance comparisons use an exact-feasibility scan,
/// since the relaxed one can overshoot the true optimum by up to the
/// resolution times the active dual weight). Returns empty weights when no
/// lattice point qualifies. Test oracle.
SimplexWeights brute_force_lp_oracle(const GramData& gram, DescentMode mode,
                                     double grid_resolution, double feasibility_tol = -1.0);

struct MinNormResult {
    SimplexWeights weights;
    double dnorm2 = 0.0;  // w^T M w at the solution
};

/// Frank-Wolfe min-norm point of the gradient hull (the MGDA direction and
/// the LP's feasibility witness).
MinNormResult solve_min_norm(const Mat& M);

/// d* = G w*, with the d-space slacks cross-checked against M w*.
Vec compose_direction(const GradientBundle& bundle, const DirectionOutcome& outcome);

struct Theorem1Report {
    bool pass = false;
    std::string branch;       // pure | guidance_positive | guidance_nonpositive
    double gamma_d = 0.0;     // d^T g_hat_v recomputed in d-space
    double worst_slack = 0.0; // most negative slack relative to |d||g_j|
    int worst_index = -1;
    std::string detail;
};

/// Checks the descent guarantees of the chosen direction: pure mode and the
/// nonpositive-gamma guidance branch demand d^T g_j >= -tol |d||g_j| for all
/// objectives; the positive-gamma branch demands d^T g_hat_v > 0.
Theorem1Report check_theorem1(const GradientBundle& bundle, const DirectionOutcome& outcome,
                              double rel_tol = 1e-8);

/// Fixed-weight combination d = G lambda (weights nonnegative, unnormalized).
Vec linear_direction(const Mat& G, const Vec& weights);
/// Mean gradient d = G 1/m.
Vec mean_direction(const Mat& G);

}  // namespace paretoda
