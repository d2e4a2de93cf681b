#include "paretoda/pareto.hpp"

#include <limits>
#include <stdexcept>

namespace paretoda {

bool dominates(const LossPoint& a, const LossPoint& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dominates: dimension mismatch");
    bool strict = false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a(i) > b(i)) return false;
        if (a(i) < b(i)) strict = true;
    }
    return strict;
}

FrontSample pareto_front(const std::vector<LossPoint>& points) {
    if (points.empty()) throw std::invalid_argument("pareto_front: empty input");
    FrontSample front;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j)
            dominated = (j != i) && dominates(points[j], points[i]);
        if (!dominated) front.points.push_back(points[i]);
    }
    return front;
}

DescentCheck is_descent_direction(const Mat& G, const Vec& d, double tol) {
    if (G.rows() != d.size()) throw std::invalid_argument("is_descent_direction: shape mismatch");
    DescentCheck out;
    out.slacks = G.transpose() * d;
    out.is_descent = (out.slacks.array() >= -tol).all();
    return out;
}

double nearest_front_distance(const LossPoint& p, const FrontSample& front) {
    if (front.points.empty()) throw std::invalid_argument("nearest_front_distance: empty front");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : front.points) best = std::min(best, (p - q).norm());
    return best;
}

}  // namespace paretoda
