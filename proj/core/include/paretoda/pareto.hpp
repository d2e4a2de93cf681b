#pragma once

#include <vector>

#include "paretoda/net.hpp"

namespace paretoda {

/// A point in loss space, one coordinate per objective.
using LossPoint = Vec;

struct FrontSample {
    std::vector<LossPoint> points;
    std::vector<Vec> params;   // optional matching parameter vectors
    std::vector<double> arcs;  // optional arc positions for traced fronts
};

/// a dominates b: a <= b componentwise with at least one strict improvement.
bool dominates(const LossPoint& a, const LossPoint& b);

/// Exact non-dominated subset via pairwise checks (the reference semantics).
/// Duplicate points are mutually non-dominating and both retained.
FrontSample pareto_front(const std::vector<LossPoint>& points);

struct DescentCheck {
    bool is_descent = false;
    Vec slacks;  // d^T g_j per objective
};

/// d is a descent direction iff d^T g_j >= -tol for every column g_j of G.
DescentCheck is_descent_direction(const Mat& G, const Vec& d, double tol);

/// Minimum Euclidean distance from p to the sampled front.
double nearest_front_distance(const LossPoint& p, const FrontSample& front);

}  // namespace paretoda
