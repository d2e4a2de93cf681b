#pragma once

#include <string>
#include <vector>

#include "paretoda/dirsolve.hpp"
#include "paretoda/model.hpp"

namespace paretoda {

struct PropertyResult {
    std::string name;
    bool pass = true;
    int checked = 0;
    double worst = 0.0;  // worst-case margin observed (sign convention per property)
    std::string detail;
};

/// d x m standard-normal gradient columns plus a standard-normal guidance
/// vector; l_val_shifted defaults into guidance-mode territory.
GradientBundle random_bundle(int d, int m, std::uint64_t seed);

/// Same, but the guidance vector is redrawn until G^T g_hat_v <= 0
/// componentwise (the gamma* <= 0 branch construction).
GradientBundle random_bundle_nonpositive_a(int d, int m, std::uint64_t seed);

/// LP optimum vs the brute-force lattice oracle plus constraint feasibility.
PropertyResult verify_lp_against_oracle(int instances, std::uint64_t seed,
                                        double grid_resolution = 1e-3);

/// Descent guarantees on random bundles, one sub-suite per branch.
PropertyResult verify_theorem1_pure(int instances, std::uint64_t seed);
PropertyResult verify_theorem1_guidance_positive(int instances, std::uint64_t seed);
PropertyResult verify_theorem1_guidance_nonpositive(int instances, std::uint64_t seed);

/// Min-norm output satisfies d^T g_j >= |d|^2 - 1e-8 on random Grams.
PropertyResult verify_min_norm_descent(int instances, std::uint64_t seed);

/// The min-norm weights satisfy every constraint of the direction LP
/// (the feasibility witness behind the fallback ladder).
PropertyResult verify_feasibility_witness(int instances, std::uint64_t seed);

/// Every composed loss gradient against central finite differences
/// (h = 1e-5, relative error < 1e-4, `points` random parameter points each).
PropertyResult verify_gradient_exactness(std::uint64_t seed, int points = 20);

std::vector<PropertyResult> run_verification_suite(int instances, std::uint64_t seed);

}  // namespace paretoda
