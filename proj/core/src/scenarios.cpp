#include "paretoda/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "paretoda/rng.hpp"

namespace paretoda {

namespace {

constexpr double kPi = 3.14159265358979323846;

// substream labels under a scenario seed
enum : std::uint64_t { kStreamSource = 1, kStreamTarget = 2, kStreamSplit = 3 };

void standardize_with_source_stats(Mat& source, Mat& target) {
    const Vec mean = source.colwise().mean().transpose();
    Vec sd(source.cols());
    for (Eigen::Index c = 0; c < source.cols(); ++c) {
        const double var = (source.col(c).array() - mean(c)).square().sum() /
                           static_cast<double>(source.rows());
        sd(c) = std::sqrt(std::max(var, 1e-12));
    }
    for (Eigen::Index c = 0; c < source.cols(); ++c) {
        source.col(c) = (source.col(c).array() - mean(c)) / sd(c);
        target.col(c) = (target.col(c).array() - mean(c)) / sd(c);
    }
}

// draws one two-moons sample set; labels 0 = outer arc, 1 = inner arc
void draw_two_moons(int n, double noise_sd, Rng& rng, Mat& X, std::vector<int>& y) {
    X.resize(n, 2);
    y.resize(n);
    const int n_outer = n / 2;
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, kPi);
        double px, py;
        if (i < n_outer) {
            px = std::cos(t);
            py = std::sin(t);
            y[i] = 0;
        } else {
            px = 1.0 - std::cos(t);
            py = 0.5 - std::sin(t);
            y[i] = 1;
        }
        X(i, 0) = px + noise_sd * rng.normal();
        X(i, 1) = py + noise_sd * rng.normal();
    }
}

DaScenario assemble(Mat source_X, std::vector<int> source_y, Mat target_X,
                    std::vector<int> target_y, int K, double heldout_fraction,
                    std::uint64_t seed, ScenarioMeta meta) {
    const auto [train_idx, held_idx] =
        split_indices(static_cast<int>(target_X.rows()), heldout_fraction,
                      seed_path(seed, kStreamSplit));

    DaScenario sc;
    sc.num_classes = K;
    sc.meta = std::move(meta);
    sc.source.features = std::move(source_X);
    sc.source.labels = std::move(source_y);
    sc.source.domain = Domain::Source;

    auto take = [&](const std::vector<int>& idx, Mat& feats, std::vector<int>& oracle) {
        feats.resize(static_cast<Eigen::Index>(idx.size()), target_X.cols());
        oracle.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            feats.row(static_cast<Eigen::Index>(i)) = target_X.row(idx[i]);
            oracle[i] = target_y[idx[i]];
        }
    };
    take(train_idx, sc.target_train.features, sc.oracle_labels_train);
    take(held_idx, sc.target_heldout.features, sc.oracle_labels_heldout);
    sc.target_train.domain = Domain::Target;
    sc.target_heldout.domain = Domain::Target;
    return sc;
}

}  // namespace

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double fraction,
                                                            std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("split_indices: need at least two samples");
    if (!(fraction > 0.0) || fraction > 0.5)
        throw std::invalid_argument("split_indices: fraction must be in (0, 0.5]");
    const int k = static_cast<int>(std::lround(fraction * n));
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < k; ++i)
        std::swap(idx[i], idx[i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)))]);
    std::vector<int> held(idx.begin(), idx.begin() + k);
    std::vector<int> train(idx.begin() + k, idx.end());
    std::sort(held.begin(), held.end());
    std::sort(train.begin(), train.end());
    return {train, held};
}

std::pair<Batch, Batch> split_heldout(const Batch& batch, double fraction, std::uint64_t seed) {
    const auto [train_idx, held_idx] = split_indices(batch.size(), fraction, seed);
    auto take = [&](const std::vector<int>& idx) {
        Batch part;
        part.domain = batch.domain;
        part.features.resize(static_cast<Eigen::Index>(idx.size()), batch.features.cols());
        if (batch.labels) part.labels.emplace(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            part.features.row(static_cast<Eigen::Index>(i)) = batch.features.row(idx[i]);
            if (batch.labels) (*part.labels)[i] = (*batch.labels)[idx[i]];
        }
        return part;
    };
    return {take(train_idx), take(held_idx)};
}

DaScenario make_two_moons_shift(int n_per_domain, double rotation_degrees, double noise_sd,
                                double heldout_fraction, std::uint64_t seed) {
    if (n_per_domain < 40) throw std::invalid_argument("make_two_moons_shift: need n >= 40");
    if (rotation_degrees < 0.0 || rotation_degrees > 90.0)
        throw std::invalid_argument("make_two_moons_shift: rotation must be in [0, 90] degrees");

    Mat Xs, Xt;
    std::vector<int> ys, yt;
    Rng rng_s(seed_path(seed, kStreamSource));
    Rng rng_t(seed_path(seed, kStreamTarget));
    draw_two_moons(n_per_domain, noise_sd, rng_s, Xs, ys);
    draw_two_moons(n_per_domain, noise_sd, rng_t, Xt, yt);

    const double phi = rotation_degrees * kPi / 180.0;
    Mat R(2, 2);
    R << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    Xt = Xt * R.transpose();

    standardize_with_source_stats(Xs, Xt);

    ScenarioMeta meta;
    meta.name = "two_moons";
    meta.seed = seed;
    meta.params = {{"n_per_domain", double(n_per_domain)},
                   {"rotation_degrees", rotation_degrees},
                   {"noise_sd", noise_sd},
                   {"heldout_fraction", heldout_fraction}};
    return assemble(std::move(Xs), std::move(ys), std::move(Xt), std::move(yt), 2,
                    heldout_fraction, seed, std::move(meta));
}

DaScenario make_gaussian_shift(int n_per_domain, int K, double mean_shift,
                               double covariance_scale, double heldout_fraction,
                               std::uint64_t seed, bool standardize) {
    if (K < 2) throw std::invalid_argument("make_gaussian_shift: need K >= 2");
    if (n_per_domain < 2 * K) throw std::invalid_argument("make_gaussian_shift: too few samples");
    if (!(covariance_scale > 0.0))
        throw std::invalid_argument("make_gaussian_shift: covariance_scale must be positive");

    const double radius = 3.0;
    auto cluster_mean = [&](int k) {
        Vec mu(2);
        mu << radius * std::cos(2.0 * kPi * k / K), radius * std::sin(2.0 * kPi * k / K);
        return mu;
    };

    auto draw = [&](Rng& rng, bool shifted, Mat& X, std::vector<int>& y) {
        X.resize(n_per_domain, 2);
        y.resize(n_per_domain);
        const double sd = shifted ? covariance_scale : 1.0;
        for (int i = 0; i < n_per_domain; ++i) {
            const int k = i % K;  // balanced classes
            Vec mu = cluster_mean(k);
            if (shifted) mu.array() += mean_shift;
            X(i, 0) = mu(0) + sd * rng.normal();
            X(i, 1) = mu(1) + sd * rng.normal();
            y[i] = k;
        }
    };

    Mat Xs, Xt;
    std::vector<int> ys, yt;
    Rng rng_s(seed_path(seed, kStreamSource));
    Rng rng_t(seed_path(seed, kStreamTarget));
    draw(rng_s, false, Xs, ys);
    draw(rng_t, true, Xt, yt);
    if (standardize) standardize_with_source_stats(Xs, Xt);

    ScenarioMeta meta;
    meta.name = "gaussian_shift";
    meta.seed = seed;
    meta.params = {{"n_per_domain", double(n_per_domain)},
                   {"num_classes", double(K)},
                   {"mean_shift", mean_shift},
                   {"covariance_scale", covariance_scale},
                   {"heldout_fraction", heldout_fraction}};
    return assemble(std::move(Xs), std::move(ys), std::move(Xt), std::move(yt), K,
                    heldout_fraction, seed, std::move(meta));
}

double ToyProblem::loss1(const Vec& theta) const {
    return 1.0 - std::exp(-(theta - anchor).squaredNorm());
}

double ToyProblem::loss2(const Vec& theta) const {
    return 1.0 - std::exp(-(theta + anchor).squaredNorm());
}

Vec ToyProblem::grad1(const Vec& theta) const {
    return 2.0 * std::exp(-(theta - anchor).squaredNorm()) * (theta - anchor);
}

Vec ToyProblem::grad2(const Vec& theta) const {
    return 2.0 * std::exp(-(theta + anchor).squaredNorm()) * (theta + anchor);
}

LossPoint ToyProblem::losses(const Vec& theta) const {
    LossPoint p(2);
    p << loss1(theta), loss2(theta);
    return p;
}

ToyProblem toy_nonconvex(int dim) {
    if (dim < 1) throw std::invalid_argument("toy_nonconvex: dim must be >= 1");
    ToyProblem p;
    p.dim = dim;
    p.anchor = Vec::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
    return p;
}

FrontSample toy_front_samples(const ToyProblem& problem, int n_samples) {
    if (n_samples < 100) throw std::invalid_argument("toy_front_samples: need >= 100 samples");
    std::vector<LossPoint> pts;
    FrontSample out;
    pts.reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const double t = -1.0 + 2.0 * i / (n_samples - 1);
        const Vec theta = problem.front_param(t);
        pts.push_back(problem.losses(theta));
        out.arcs.push_back(t);
        out.params.push_back(theta);
    }
    if (pareto_front(pts).points.size() != pts.size())
        throw std::runtime_error("toy_front_samples: trace contains dominated points");
    out.points = std::move(pts);
    return out;
}

std::string scenario_to_json(const DaScenario& sc) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = sc.meta.name;
    j["seed"] = sc.meta.seed;
    j["num_classes"] = sc.num_classes;
    nlohmann::ordered_json params;
    for (const auto& [k, v] : sc.meta.params) params[k] = v;
    j["params"] = params;

    auto rows = [](const Mat& X) {
        std::vector<std::vector<double>> out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            out[i].resize(X.cols());
            for (Eigen::Index c = 0; c < X.cols(); ++c) out[i][c] = X(i, c);
        }
        return out;
    };
    j["source"]["features"] = rows(sc.source.features);
    j["source"]["labels"] = *sc.source.labels;
    j["target_train"]["features"] = rows(sc.target_train.features);
    j["target_heldout"]["features"] = rows(sc.target_heldout.features);
    j["oracle_labels_train"] = sc.oracle_labels_train;
    j["oracle_labels_heldout"] = sc.oracle_labels_heldout;
    return j.dump();
}

DaScenario scenario_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema_version").get<int>() != 1)
        throw std::invalid_argument("scenario_from_json: unsupported schema_version");
    DaScenario sc;
    sc.meta.name = j.at("kind").get<std::string>();
    sc.meta.seed = j.at("seed").get<std::uint64_t>();
    sc.num_classes = j.at("num_classes").get<int>();
    for (const auto& [k, v] : j.at("params").items())
        sc.meta.params.emplace_back(k, v.get<double>());

    auto mat = [](const nlohmann::json& rows) {
        const auto n = rows.size();
        const auto p = n ? rows[0].size() : 0;
        Mat X(n, p);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < p; ++c) X(i, c) = rows[i][c].get<double>();
        return X;
    };
    sc.source.features = mat(j.at("source").at("features"));
    sc.source.labels = j.at("source").at("labels").get<std::vector<int>>();
    sc.source.domain = Domain::Source;
    sc.target_train.features = mat(j.at("target_train").at("features"));
    sc.target_train.domain = Domain::Target;
    sc.target_heldout.features = mat(j.at("target_heldout").at("features"));
    sc.target_heldout.domain = Domain::Target;
    sc.oracle_labels_train = j.at("oracle_labels_train").get<std::vector<int>>();
    sc.oracle_labels_heldout = j.at("oracle_labels_heldout").get<std::vector<int>>();
    return sc;
}

}  // namespace paretoda
