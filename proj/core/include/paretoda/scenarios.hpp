#pragma once

#include <string>
#include <utility>
#include <vector>

#include "paretoda/losses.hpp"
#include "paretoda/pareto.hpp"

namespace paretoda {

struct ScenarioMeta {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> params;
};

/// A synthetic DA task. Oracle labels for the (unlabeled) target data live in
/// a separate evaluation-only channel: no Batch on the training path carries
/// them, so training code cannot read them by construction.
struct DaScenario {
    Batch source;
    Batch target_train;
    Batch target_heldout;
    std::vector<int> oracle_labels_train;
    std::vector<int> oracle_labels_heldout;
    int num_classes = 2;
    ScenarioMeta meta;

    int input_dim() const { return static_cast<int>(source.features.cols()); }
};

/// Two interleaving half-circles (K=2); the target domain is the same
/// generator rotated about the origin. Features are z-scored with source
/// statistics. The held-out split is sampled uniformly without replacement.
DaScenario make_two_moons_shift(int n_per_domain, double rotation_degrees, double noise_sd,
                                double heldout_fraction, std::uint64_t seed);

/// K Gaussian class clusters on a circle; target clusters are translated by
/// mean_shift per coordinate and their spread scaled by covariance_scale.
DaScenario make_gaussian_shift(int n_per_domain, int K, double mean_shift,
                               double covariance_scale, double heldout_fraction,
                               std::uint64_t seed, bool standardize = true);

/// Uniform split without replacement into (train, heldout) index sets of
/// sizes n - round(fraction n) and round(fraction n), both ascending.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double fraction,
                                                            std::uint64_t seed);

/// Batch-level wrapper around split_indices.
std::pair<Batch, Batch> split_heldout(const Batch& batch, double fraction, std::uint64_t seed);

/// Two-objective toy with a known non-convex front traced by theta = t * anchor.
struct ToyProblem {
    int dim = 1;
    Vec anchor;  // ones / sqrt(dim)

    double loss1(const Vec& theta) const;
    double loss2(const Vec& theta) const;
    Vec grad1(const Vec& theta) const;
    Vec grad2(const Vec& theta) const;
    Vec front_param(double t) const { return t * anchor; }
    LossPoint losses(const Vec& theta) const;
};

ToyProblem toy_nonconvex(int dim);

/// Evaluates the front trace at n_samples values of t in [-1, 1] and checks
/// mutual non-dominance; arcs carry the t values.
FrontSample toy_front_samples(const ToyProblem& problem, int n_samples);

std::string scenario_to_json(const DaScenario& scenario);
DaScenario scenario_from_json(const std::string& text);

}  // namespace paretoda
