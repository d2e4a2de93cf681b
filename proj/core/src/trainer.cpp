#include "paretoda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paretoda/rng.hpp"

namespace paretoda {

namespace {

enum : std::uint64_t {
    kStreamInit = 10,
    kStreamSourceBatch = 11,
    kStreamTargetBatch = 12,
    kStreamIdealBatch = 13,
    kStreamWarmupSource = 14,
    kStreamWarmupTarget = 15
};

std::vector<int> sample_batch(int n, int batch_size, std::uint64_t seed) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (batch_size >= n) return idx;
    Rng rng(seed);
    for (int i = 0; i < batch_size; ++i)
        std::swap(idx[i], idx[i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)))]);
    idx.resize(batch_size);
    std::sort(idx.begin(), idx.end());
    return idx;
}

Mat take_rows(const Mat& X, const std::vector<int>& idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
}

Mat heldout_window(const Mat& X, int batch_size, int step) {
    const int n = static_cast<int>(X.rows());
    const int bh = std::min(batch_size, n);
    Mat out(bh, X.cols());
    for (int i = 0; i < bh; ++i) out.row(i) = X.row((step * bh + i) % n);
    return out;
}

}  // namespace

const char* to_string(Method m) {
    switch (m) {
        case Method::Paretoda: return "paretoda";
        case Method::Linear: return "linear";
        case Method::Mean: return "mean";
        case Method::Mgda: return "mgda";
    }
    return "paretoda";
}

const char* to_string(Alignment a) { return a == Alignment::Adversarial ? "adversarial" : "mmd"; }

Method parse_method(const std::string& s) {
    if (s == "paretoda") return Method::Paretoda;
    if (s == "linear") return Method::Linear;
    if (s == "mean") return Method::Mean;
    if (s == "mgda") return Method::Mgda;
    throw std::invalid_argument("unknown method: " + s);
}

Alignment parse_alignment(const std::string& s) {
    if (s == "adversarial") return Alignment::Adversarial;
    if (s == "mmd") return Alignment::Mmd;
    throw std::invalid_argument("unknown alignment: " + s);
}

void TrainConfig::validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("TrainConfig: eta must be positive");
    if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be positive");
    if (!(lambda0 > 0.0) || !(lambda1 > 0.0))
        throw std::invalid_argument("TrainConfig: scale factors must be positive");
    if (beta_soft_label < 0.0)
        throw std::invalid_argument("TrainConfig: beta_soft_label must be nonnegative");
    if (ema_decay < 0.0 || ema_decay >= 1.0)
        throw std::invalid_argument("TrainConfig: ema_decay must be in [0, 1)");
    if (method == Method::Linear) {
        if (linear_weights.size() != 3 || (linear_weights.array() < 0.0).any())
            throw std::invalid_argument("TrainConfig: linear_weights must be 3 nonnegative reals");
    }
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be positive");
    if (warmup_steps < 0)
        throw std::invalid_argument("TrainConfig: warmup_steps must be nonnegative");
}

TrainResult train_da(const TrainConfig& config, const DaScenario& scenario,
                     const GuidanceFn& guidance) {
    config.validate();
    scenario.source.validate();
    const int K = scenario.num_classes;
    GuidanceFn guide = guidance;
    if (!guide)
        guide = [](const DaModel& m, const Mat& X, bool refine) {
            return validation_guidance(m, X, refine);
        };

    TrainResult result;
    result.model = make_model(scenario.input_dim(), K, config.arch,
                              seed_path(config.seed, kStreamInit));
    DaModel& model = result.model;
    result.trace.reserve(config.steps);

    const int n_s = scenario.source.size();
    const int n_t = scenario.target_train.size();

    for (int p = 0; p < config.warmup_steps; ++p) {
        Batch src;
        src.domain = Domain::Source;
        const auto idx = sample_batch(n_s, config.batch_size,
                                      seed_path(config.seed, kStreamWarmupSource, p));
        src.features = take_rows(scenario.source.features, idx);
        src.labels.emplace(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            (*src.labels)[i] = (*scenario.source.labels)[idx[i]];
        Batch tgt;
        tgt.domain = Domain::Target;
        tgt.features = take_rows(scenario.target_train.features,
                                 sample_batch(n_t, config.batch_size,
                                              seed_path(config.seed, kStreamWarmupTarget, p)));
        const ThetaGrad ce = source_loss(model, src.features, *src.labels);
        const ThetaGrad al =
            config.alignment == Alignment::Adversarial
                ? alignment_adversarial(model, src.features, tgt.features, config.literal_negation)
                : alignment_mmd(model, src.features, tgt.features, config.mmd_bandwidths);
        if (!std::isfinite(ce.value) || !std::isfinite(al.value)) throw TrainAbort(-1);
        model.feature.params -=
            config.eta * (config.lambda0 * ce.grad_theta + config.lambda1 * al.grad_theta);
        update_auxiliaries(model, src, tgt, config);
    }

    for (int step = 0; step < config.steps; ++step) {
        Batch src;
        src.domain = Domain::Source;
        const auto src_idx = sample_batch(n_s, config.batch_size,
                                          seed_path(config.seed, kStreamSourceBatch, step));
        src.features = take_rows(scenario.source.features, src_idx);
        src.labels.emplace(src_idx.size());
        for (std::size_t i = 0; i < src_idx.size(); ++i)
            (*src.labels)[i] = (*scenario.source.labels)[src_idx[i]];

        Batch tgt;
        tgt.domain = Domain::Target;
        tgt.features = take_rows(scenario.target_train.features,
                                 sample_batch(n_t, config.batch_size,
                                              seed_path(config.seed, kStreamTargetBatch, step)));

        const Mat held = heldout_window(scenario.target_heldout.features, config.batch_size, step);

        // objective values and shared-parameter gradients (Alg. lines 2 and 4)
        const ThetaGrad s_res = source_loss(model, src.features, *src.labels);
        const ThetaGrad d_res =
            config.alignment == Alignment::Adversarial
                ? alignment_adversarial(model, src.features, tgt.features, config.literal_negation)
                : alignment_mmd(model, src.features, tgt.features, config.mmd_bandwidths);
        const bool ema_ready = model.ema_marginal.size() == K;
        const TcmModelResult t_res =
            tcm_model_loss(model, tgt.features, config.marginal,
                           ema_ready ? &model.ema_marginal : nullptr, config.ema_decay,
                           config.bayes_refinement);
        model.ema_marginal = t_res.marginal_used;

        // guidance loss and gradient on the held-out batch (lines 3 and 5)
        const TcmModelResult v_res = guide(model, held, config.bayes_refinement);

        GradientBundle bundle;
        bundle.G.resize(model.theta_dim(), 3);
        bundle.G.col(0) = config.lambda0 * s_res.grad_theta;
        bundle.G.col(1) = config.lambda1 * d_res.grad_theta;
        bundle.G.col(2) = t_res.grad_theta;
        bundle.g_hat_v = v_res.grad_theta;
        bundle.l_val_shifted = v_res.shifted;

        StepTrace row;
        row.step = step;
        row.l_s = config.lambda0 * s_res.value;
        row.l_d = config.lambda1 * d_res.value;
        row.l_t = t_res.raw;
        row.l_val_shifted = v_res.shifted;
        if (!std::isfinite(row.l_s) || !std::isfinite(row.l_d) || !std::isfinite(row.l_t) ||
            !std::isfinite(row.l_val_shifted))
            throw TrainAbort(step);

        row.mode = select_mode(v_res.shifted, config.epsilon);

        Vec d;
        switch (config.method) {
            case Method::Paretoda: {
                const GramData gram = compute_gram(bundle);
                const DirectionOutcome out = solve_paretoda_lp(gram, row.mode);
                d = compose_direction(bundle, out);
                const Theorem1Report rep = check_theorem1(bundle, out);
                row.w_star = out.weights.w;
                row.gamma_star = out.gamma_star;
                row.slacks = out.slacks;
                row.fallback = out.fallback;
                row.theorem1_pass = rep.pass;
                if (!rep.pass) ++result.theorem1_violations;
                break;
            }
            case Method::Linear: {
                d = linear_direction(bundle.G, config.linear_weights);
                const double total = config.linear_weights.sum();
                row.w_star = total > 0.0 ? Vec(config.linear_weights / total)
                                         : Vec(Vec::Constant(3, 1.0 / 3.0));
                row.gamma_star = d.dot(bundle.g_hat_v);
                row.slacks = bundle.G.transpose() * d;
                break;
            }
            case Method::Mean: {
                d = mean_direction(bundle.G);
                row.w_star = Vec::Constant(3, 1.0 / 3.0);
                row.gamma_star = d.dot(bundle.g_hat_v);
                row.slacks = bundle.G.transpose() * d;
                break;
            }
            case Method::Mgda: {
                const GramData gram = compute_gram(bundle);
                const MinNormResult mn = solve_min_norm(gram.M);
                row.w_star = mn.weights.w;
                d = bundle.G * mn.weights.w;
                row.gamma_star = d.dot(bundle.g_hat_v);
                row.slacks = gram.M * mn.weights.w;
                // the min-norm direction must not damage any objective
                row.theorem1_pass = (row.slacks.array() >= mn.dnorm2 - 1e-8).all();
                if (!row.theorem1_pass) ++result.theorem1_violations;
                break;
            }
        }
        if (!d.allFinite()) throw TrainAbort(step);
        row.d_norm = d.norm();

        model.feature.params -= config.eta * d;  // line 8, theta only

        update_auxiliaries(model, src, tgt, config);

        if (step % config.eval_every == 0 || step == config.steps - 1) {
            row.acc_raw = evaluate_target_accuracy(model, scenario, AccuracyKind::RawClassifier);
            row.acc_refined = evaluate_target_accuracy(model, scenario, AccuracyKind::BayesRefined);
        } else if (!result.trace.empty()) {
            row.acc_raw = result.trace.back().acc_raw;
            row.acc_refined = result.trace.back().acc_refined;
        }
        result.trace.push_back(std::move(row));
    }
    return result;
}

void update_auxiliaries(DaModel& model, const Batch& source_batch, const Batch& target_batch,
                        const TrainConfig& config) {
    source_batch.validate();
    target_batch.validate();
    const int K = model.num_classes();
    const int n_s = source_batch.size();
    const int n_t = target_batch.size();

    // E-step: posterior weights from the current parameters, then frozen
    RefinedPosterior rho_t;
    if (config.bayes_refinement) {
        rho_t = refined_posterior(model, target_batch.features, Domain::Target);
    } else {
        rho_t.rho = classifier_probs(model, target_batch.features);
        rho_t.conditioning = Domain::Target;
    }

    // all gradients are taken at the same parameter snapshot, then applied
    Vec grad_phi_d;
    if (config.alignment == Alignment::Adversarial)
        domain_disc_objective(model, source_batch.features, target_batch.features, &grad_phi_d);

    std::vector<Vec> grad_vk;
    if (config.bayes_refinement) {
        Mat Xall(n_s + n_t, source_batch.features.cols());
        Xall << source_batch.features, target_batch.features;
        std::vector<int> z(n_s + n_t, 0);
        std::fill(z.begin() + n_s, z.end(), 1);

        Mat s(n_s + n_t, K);
        s.topRows(n_s) = soft_label_weights(source_batch, nullptr, K).s;
        s.bottomRows(n_t) = soft_label_weights(target_batch, &rho_t, K).s;

        const Mat Z = mlp_forward_batch(model.feature, Xall);
        Mat Q(n_s + n_t, K);
        std::vector<ForwardCache> caches(K);
        for (int k = 0; k < K; ++k)
            Q.col(k) = mlp_forward_batch(model.class_discs[k], Z, &caches[k]).col(0);
        const ClasswiseGrad cg = classwise_disc_loss(s, z, Q);
        grad_vk.reserve(K);
        for (int k = 0; k < K; ++k)
            grad_vk.push_back(
                mlp_backward(model.class_discs[k], caches[k], Mat(cg.ddisc.col(k))).param_grad);
    }

    Vec grad_phi_c;
    source_loss(model, source_batch.features, *source_batch.labels, &grad_phi_c);
    if (config.beta_soft_label > 0.0) {
        Vec grad_soft;
        soft_label_ce_objective(model, target_batch.features, rho_t.rho, &grad_soft);
        grad_phi_c += config.beta_soft_label * grad_soft;
    }

    if (grad_phi_d.size()) model.domain_disc.params -= config.eta * grad_phi_d;
    for (std::size_t k = 0; k < grad_vk.size(); ++k)
        model.class_discs[k].params -= config.eta * grad_vk[k];
    model.classifier.params -= config.eta * grad_phi_c;
}

double evaluate_target_accuracy(const DaModel& model, const DaScenario& scenario,
                                AccuracyKind kind) {
    const Mat probs = kind == AccuracyKind::RawClassifier
                          ? classifier_probs(model, scenario.target_train.features)
                          : refined_posterior(model, scenario.target_train.features,
                                              Domain::Target).rho;
    int hits = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index arg;
        probs.row(i).maxCoeff(&arg);
        hits += (static_cast<int>(arg) == scenario.oracle_labels_train[i]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

ToyRunResult train_toy(const ToyProblem& problem, const Vec& init_theta, const ToyRunConfig& cfg) {
    Vec theta = init_theta;
    ToyRunResult out;
    out.path.push_back(problem.losses(theta));
    for (int step = 0; step < cfg.steps; ++step) {
        Mat G(problem.dim, 2);
        G.col(0) = problem.grad1(theta);
        G.col(1) = problem.grad2(theta);

        Vec d;
        switch (cfg.method) {
            case Method::Linear:
                d = linear_direction(G, cfg.linear_weights);
                break;
            case Method::Mean:
                d = mean_direction(G);
                break;
            case Method::Mgda:
                d = G * solve_min_norm(G.transpose() * G).weights.w;
                break;
            case Method::Paretoda: {
                if (cfg.guidance != ToyGuidance::ObjectiveIndex)
                    throw std::invalid_argument("train_toy: the LP scheme needs a guidance objective");
                GradientBundle bundle;
                bundle.G = G;
                bundle.g_hat_v = cfg.guidance_index == 0 ? G.col(0) : G.col(1);
                const double guide_loss = cfg.guidance_index == 0 ? problem.loss1(theta)
                                                                  : problem.loss2(theta);
                bundle.l_val_shifted = guide_loss;
                const DescentMode mode = select_mode(guide_loss, cfg.epsilon);
                const DirectionOutcome lp = solve_paretoda_lp(compute_gram(bundle), mode);
                d = compose_direction(bundle, lp);
                break;
            }
        }
        theta -= cfg.eta * d;
        const LossPoint losses = problem.losses(theta);
        out.path.push_back(losses);
        if (losses.maxCoeff() > 10.0)
            throw std::runtime_error("train_toy: divergence at step " + std::to_string(step));
    }
    out.final_theta = theta;
    return out;
}

TrainResult ideal_supervised_run(const TrainConfig& config, const DaScenario& scenario) {
    config.validate();
    TrainResult result;
    result.model = make_model(scenario.input_dim(), scenario.num_classes, config.arch,
                              seed_path(config.seed, kStreamInit));
    DaModel& model = result.model;
    const int n_t = scenario.target_train.size();

    for (int step = 0; step < config.steps; ++step) {
        const auto idx = sample_batch(n_t, config.batch_size,
                                      seed_path(config.seed, kStreamIdealBatch, step));
        const Mat X = take_rows(scenario.target_train.features, idx);
        std::vector<int> y(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) y[i] = scenario.oracle_labels_train[idx[i]];

        Vec grad_phi_c;
        const ThetaGrad ce = source_loss(model, X, y, &grad_phi_c);
        if (!std::isfinite(ce.value)) throw TrainAbort(step);

        StepTrace row;
        row.step = step;
        row.l_s = ce.value;
        row.w_star = Vec::Constant(3, 1.0 / 3.0);
        row.slacks = Vec::Zero(3);
        row.mode = DescentMode::PureDescent;
        row.d_norm = ce.grad_theta.norm();

        model.feature.params -= config.eta * ce.grad_theta;
        model.classifier.params -= config.eta * grad_phi_c;

        if (step % config.eval_every == 0 || step == config.steps - 1) {
            row.acc_raw = evaluate_target_accuracy(model, scenario, AccuracyKind::RawClassifier);
            row.acc_refined = row.acc_raw;
        } else if (!result.trace.empty()) {
            row.acc_raw = result.trace.back().acc_raw;
            row.acc_refined = result.trace.back().acc_refined;
        }
        result.trace.push_back(std::move(row));
    }
    return result;
}

}  // namespace paretoda
