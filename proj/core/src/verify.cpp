#include "paretoda/verify.hpp"

#include <cmath>

#include "paretoda/rng.hpp"
#include "paretoda/scenarios.hpp"

namespace paretoda {

namespace {

constexpr int kBundleDim = 6;

Mat random_matrix(int rows, int cols, Rng& rng) {
    Mat M(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) M(r, c) = rng.normal();
    return M;
}

double grad_rel_error(const Vec& analytic, const Vec& fd) {
    const double scale = std::max({analytic.lpNorm<Eigen::Infinity>(),
                                   fd.lpNorm<Eigen::Infinity>(), 1e-6});
    return (analytic - fd).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace

GradientBundle random_bundle(int d, int m, std::uint64_t seed) {
    Rng rng(seed);
    GradientBundle b;
    b.G = random_matrix(d, m, rng);
    b.g_hat_v = random_matrix(d, 1, rng).col(0);
    b.l_val_shifted = 0.5;  // guidance territory under the default epsilon
    return b;
}

GradientBundle random_bundle_nonpositive_a(int d, int m, std::uint64_t seed) {
    Rng rng(seed);
    GradientBundle b;
    b.G = random_matrix(d, m, rng);
    b.l_val_shifted = 0.5;
    for (int attempt = 0; attempt < 100000; ++attempt) {
        b.g_hat_v = random_matrix(d, 1, rng).col(0);
        if (((b.G.transpose() * b.g_hat_v).array() <= 0.0).all()) return b;
    }
    throw std::runtime_error("random_bundle_nonpositive_a: rejection sampling failed");
}

PropertyResult verify_lp_against_oracle(int instances, std::uint64_t seed, double grid_resolution) {
    PropertyResult res;
    res.name = "lp_vs_grid_oracle";
    for (int i = 0; i < instances; ++i) {
        const GradientBundle bundle = random_bundle(kBundleDim, 3, seed_path(seed, 100, i));
        const GramData gram = compute_gram(bundle);
        const DescentMode mode = (i % 2 == 0) ? DescentMode::GuidanceDescent
                                              : DescentMode::PureDescent;
        const DirectionOutcome out = solve_paretoda_lp(gram, mode);
        // exact-feasibility scan: the relaxed default can overshoot the optimum
        const SimplexWeights oracle = brute_force_lp_oracle(gram, mode, grid_resolution, 1e-9);
        const SimplexLp lp = build_direction_lp(gram, mode);

        if (oracle.w.size() > 0) {
            const double oracle_obj = lp.c.dot(oracle.w);
            const double margin = out.objective - oracle_obj;
            res.worst = std::min(res.worst, margin);
            if (margin < -1e-4) {
                res.pass = false;
                res.detail = "LP objective below oracle at instance " + std::to_string(i);
            }
        }
        double feas = out.weights.w.minCoeff();
        feas = std::min(feas, 1.0 - std::abs(out.weights.w.sum() - 1.0));
        if (lp.A.rows() > 0) feas = std::min(feas, (lp.A * out.weights.w - lp.b).minCoeff());
        if (feas < -1e-9) {
            res.pass = false;
            res.detail = "constraint violated at instance " + std::to_string(i);
        }
        ++res.checked;
    }
    return res;
}

namespace {

PropertyResult theorem1_over(const std::string& name, int instances, std::uint64_t seed,
                             int variant) {
    PropertyResult res;
    res.name = name;
    for (int i = 0; i < instances; ++i) {
        GradientBundle bundle;
        DescentMode mode = DescentMode::GuidanceDescent;
        switch (variant) {
            case 0:  // pure: the held-out loss has (numerically) hit its optimum
                bundle = random_bundle(kBundleDim, 3, seed_path(seed, 101, i));
                bundle.g_hat_v.setZero();
                bundle.l_val_shifted = 0.0;
                mode = DescentMode::PureDescent;
                break;
            case 1:  // guidance, generic draw (gamma* > 0 in all but measure-zero cases)
                bundle = random_bundle(kBundleDim, 3, seed_path(seed, 102, i));
                break;
            case 2:  // guidance with a <= 0 forced, so gamma* <= 0
                bundle = random_bundle_nonpositive_a(kBundleDim, 3, seed_path(seed, 103, i));
                break;
        }
        const GramData gram = compute_gram(bundle);
        const DirectionOutcome out = solve_paretoda_lp(gram, mode);
        if (variant == 1 && out.gamma_star <= 0.0) continue;  // not this branch
        if (variant == 2 && out.gamma_star > 0.0) continue;
        const Theorem1Report rep = check_theorem1(bundle, out);
        res.worst = std::min(res.worst, rep.worst_slack);
        if (!rep.pass) {
            res.pass = false;
            res.detail = "instance " + std::to_string(i) + ": " + rep.detail;
        }
        ++res.checked;
    }
    return res;
}

}  // namespace

PropertyResult verify_theorem1_pure(int instances, std::uint64_t seed) {
    return theorem1_over("theorem1_pure_descent", instances, seed, 0);
}

PropertyResult verify_theorem1_guidance_positive(int instances, std::uint64_t seed) {
    return theorem1_over("theorem1_guidance_gamma_positive", instances, seed, 1);
}

PropertyResult verify_theorem1_guidance_nonpositive(int instances, std::uint64_t seed) {
    return theorem1_over("theorem1_guidance_gamma_nonpositive", instances, seed, 2);
}

PropertyResult verify_min_norm_descent(int instances, std::uint64_t seed) {
    PropertyResult res;
    res.name = "min_norm_descent_property";
    for (int i = 0; i < instances; ++i) {
        const GradientBundle bundle = random_bundle(kBundleDim, 3, seed_path(seed, 104, i));
        const Mat M = bundle.G.transpose() * bundle.G;
        const MinNormResult mn = solve_min_norm(M);
        const Vec slacks = M * mn.weights.w;
        const double margin = (slacks.array() - mn.dnorm2).minCoeff();
        res.worst = std::min(res.worst, margin);
        if (margin < -1e-8) {
            res.pass = false;
            res.detail = "descent property violated at instance " + std::to_string(i);
        }
        ++res.checked;
    }
    return res;
}

PropertyResult verify_feasibility_witness(int instances, std::uint64_t seed) {
    PropertyResult res;
    res.name = "min_norm_feasibility_witness";
    for (int i = 0; i < instances; ++i) {
        const GradientBundle bundle = random_bundle(kBundleDim, 3, seed_path(seed, 105, i));
        const GramData gram = compute_gram(bundle);
        const MinNormResult mn = solve_min_norm(gram.M);
        for (const DescentMode mode :
             {DescentMode::GuidanceDescent, DescentMode::PureDescent}) {
            const SimplexLp lp = build_direction_lp(gram, mode);
            if (lp.A.rows() == 0) continue;
            const double margin = (lp.A * mn.weights.w - lp.b).minCoeff();
            res.worst = std::min(res.worst, margin);
            if (margin < -1e-9) {
                res.pass = false;
                res.detail = "witness infeasible at instance " + std::to_string(i);
            }
        }
        ++res.checked;
    }
    return res;
}

PropertyResult verify_gradient_exactness(std::uint64_t seed, int points) {
    PropertyResult res;
    res.name = "loss_gradients_vs_finite_differences";
    const double h = 1e-5;
    const double tol = 1e-4;

    const DaScenario sc = make_gaussian_shift(60, 3, 1.0, 1.2, 0.2, seed_path(seed, 106));
    ModelArch arch;
    arch.feature_hidden = {6, 4};
    arch.disc_hidden = {4};
    const Mat Xs = sc.source.features.topRows(12);
    std::vector<int> ys(sc.source.labels->begin(), sc.source.labels->begin() + 12);
    const Mat Xt = sc.target_train.features.topRows(12);
    const Mat Xh = sc.target_heldout.features.topRows(8);

    Rng rng(seed_path(seed, 107));
    auto check = [&](const std::string& what, Vec& block,
                     const std::function<double()>& value,
                     const std::function<Vec()>& analytic) {
        const Vec base = block;
        const Vec an = analytic();
        const Vec fd = finite_diff_gradient(
            [&](const Vec& p) {
                block = p;
                const double v = value();
                block = base;
                return v;
            },
            base, h);
        block = base;
        const double err = grad_rel_error(an, fd);
        res.worst = std::max(res.worst, err);
        if (err >= tol) {
            res.pass = false;
            res.detail = what + " gradient off by " + std::to_string(err);
        }
        ++res.checked;
    };

    for (int p = 0; p < points; ++p) {
        DaModel model = make_model(sc.input_dim(), sc.num_classes, arch, seed_path(seed, 108, p));
        // scatter the parameters away from the init point
        for (Vec* block : {&model.feature.params, &model.classifier.params,
                           &model.domain_disc.params}) {
            for (Eigen::Index i = 0; i < block->size(); ++i) (*block)(i) += 0.3 * rng.normal();
        }
        for (auto& disc : model.class_discs)
            for (Eigen::Index i = 0; i < disc.params.size(); ++i)
                disc.params(i) += 0.3 * rng.normal();

        check("source_ce(theta)", model.feature.params,
              [&] { return source_loss(model, Xs, ys).value; },
              [&] { return source_loss(model, Xs, ys).grad_theta; });

        check("alignment_adversarial(theta)", model.feature.params,
              [&] { return alignment_adversarial(model, Xs, Xt).value; },
              [&] { return alignment_adversarial(model, Xs, Xt).grad_theta; });

        check("alignment_mmd(theta)", model.feature.params,
              [&] { return alignment_mmd(model, Xs, Xt, {0.5, 1.0}).value; },
              [&] { return alignment_mmd(model, Xs, Xt, {0.5, 1.0}).grad_theta; });

        // Eq-5 through the full Eq-3 chain, batch-mean marginal
        check("tcm_batch_marginal(theta)", model.feature.params,
              [&] { return tcm_model_loss(model, Xt, MarginalMode::BatchMean, nullptr, 0.0, true).raw; },
              [&] {
                  return tcm_model_loss(model, Xt, MarginalMode::BatchMean, nullptr, 0.0, true)
                      .grad_theta;
              });

        // same with a frozen EMA component blended in
        const Vec ema_prev = Vec::Constant(sc.num_classes, 1.0 / sc.num_classes);
        check("tcm_ema_marginal(theta)", model.feature.params,
              [&] { return tcm_model_loss(model, Xt, MarginalMode::Ema, &ema_prev, 0.9, true).raw; },
              [&] {
                  return tcm_model_loss(model, Xt, MarginalMode::Ema, &ema_prev, 0.9, true)
                      .grad_theta;
              });

        check("validation_guidance(theta)", model.feature.params,
              [&] { return validation_guidance(model, Xh, true).raw; },
              [&] { return validation_guidance(model, Xh, true).grad_theta; });

        // Eq-4 wrt one discriminator head, posterior weights frozen
        {
            Mat Xall(Xs.rows() + Xt.rows(), Xs.cols());
            Xall << Xs, Xt;
            std::vector<int> z(Xall.rows(), 0);
            std::fill(z.begin() + Xs.rows(), z.end(), 1);
            Mat s(Xall.rows(), sc.num_classes);
            Batch src{Xs, ys, Domain::Source};
            const RefinedPosterior rho_t = refined_posterior(model, Xt, Domain::Target);
            Batch tgt{Xt, std::nullopt, Domain::Target};
            s.topRows(Xs.rows()) = soft_label_weights(src, nullptr, sc.num_classes).s;
            s.bottomRows(Xt.rows()) = soft_label_weights(tgt, &rho_t, sc.num_classes).s;

            const int k = p % sc.num_classes;
            auto loss_value = [&] {
                const Mat Z = mlp_forward_batch(model.feature, Xall);
                Mat Q(Xall.rows(), sc.num_classes);
                for (int kk = 0; kk < sc.num_classes; ++kk)
                    Q.col(kk) = mlp_forward_batch(model.class_discs[kk], Z).col(0);
                return classwise_disc_loss(s, z, Q).loss;
            };
            auto loss_grad = [&] {
                const Mat Z = mlp_forward_batch(model.feature, Xall);
                Mat Q(Xall.rows(), sc.num_classes);
                std::vector<ForwardCache> caches(sc.num_classes);
                for (int kk = 0; kk < sc.num_classes; ++kk)
                    Q.col(kk) = mlp_forward_batch(model.class_discs[kk], Z, &caches[kk]).col(0);
                const ClasswiseGrad cg = classwise_disc_loss(s, z, Q);
                return mlp_backward(model.class_discs[k], caches[k], Mat(cg.ddisc.col(k)))
                    .param_grad;
            };
            check("classwise_disc(v_k)", model.class_discs[k].params, loss_value, loss_grad);
        }

        // domain discriminator player wrt phi_d
        check("domain_disc(phi_d)", model.domain_disc.params,
              [&] { return domain_disc_objective(model, Xs, Xt, nullptr); },
              [&] {
                  Vec g;
                  domain_disc_objective(model, Xs, Xt, &g);
                  return g;
              });
    }
    return res;
}

std::vector<PropertyResult> run_verification_suite(int instances, std::uint64_t seed) {
    std::vector<PropertyResult> results;
    results.push_back(verify_lp_against_oracle(instances, seed));
    results.push_back(verify_theorem1_pure(instances, seed));
    results.push_back(verify_theorem1_guidance_positive(instances, seed));
    results.push_back(verify_theorem1_guidance_nonpositive(instances, seed));
    results.push_back(verify_min_norm_descent(instances, seed));
    results.push_back(verify_feasibility_witness(instances, seed));
    results.push_back(verify_gradient_exactness(seed, /*points=*/5));
    return results;
}

}  // namespace paretoda
