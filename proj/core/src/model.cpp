#include "paretoda/model.hpp"

#include <stdexcept>

#include "paretoda/rng.hpp"

namespace paretoda {

namespace {

std::vector<int> with_ends(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> sizes;
    sizes.push_back(in);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

}  // namespace

DaModel make_model(int input_dim, int num_classes, const ModelArch& arch, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("make_model: need at least two classes");
    if (arch.feature_hidden.empty())
        throw std::invalid_argument("make_model: feature extractor needs at least one layer");
    DaModel m;
    // feature_hidden's last width is the embedding dimension
    std::vector<int> feat_sizes{input_dim};
    feat_sizes.insert(feat_sizes.end(), arch.feature_hidden.begin(), arch.feature_hidden.end());
    m.feature = mlp_init(feat_sizes, arch.activation, OutputHead::Linear, seed_path(seed, 1));
    const int feat_dim = m.feature.out_dim();
    m.classifier = mlp_init(with_ends(feat_dim, arch.classifier_hidden, num_classes),
                            arch.activation, OutputHead::Softmax, seed_path(seed, 2));
    m.domain_disc = mlp_init(with_ends(feat_dim, arch.disc_hidden, 1), arch.activation,
                             OutputHead::Sigmoid, seed_path(seed, 3));
    m.class_discs.reserve(num_classes);
    for (int k = 0; k < num_classes; ++k)
        m.class_discs.push_back(mlp_init(with_ends(feat_dim, arch.disc_hidden, 1), arch.activation,
                                         OutputHead::Sigmoid, seed_path(seed, 4, k)));
    return m;
}

ThetaGrad source_loss(const DaModel& model, const Mat& X, const std::vector<int>& labels,
                      Vec* grad_phi_c) {
    ForwardCache cF, cC;
    const Mat Z = mlp_forward_batch(model.feature, X, &cF);
    const Mat P = mlp_forward_batch(model.classifier, Z, &cC);
    const CeGrad ce = source_ce_loss(P, labels);
    const GradResult back_c = mlp_backward_logits(model.classifier, cC, ce.dlogits);
    if (grad_phi_c) *grad_phi_c = back_c.param_grad;
    const GradResult back_f = mlp_backward(model.feature, cF, back_c.input_grad);
    return {ce.loss, back_f.param_grad};
}

ThetaGrad alignment_adversarial(const DaModel& model, const Mat& Xs, const Mat& Xt,
                                bool literal_negation) {
    ForwardCache cFs, cFt, cDs, cDt;
    const Mat Zs = mlp_forward_batch(model.feature, Xs, &cFs);
    const Mat Zt = mlp_forward_batch(model.feature, Xt, &cFt);
    const Vec ps = mlp_forward_batch(model.domain_disc, Zs, &cDs).col(0);
    const Vec pt = mlp_forward_batch(model.domain_disc, Zt, &cDt).col(0);
    const DomainGrad g = feature_alignment_loss(ps, pt, literal_negation);
    const GradResult back_ds = mlp_backward(model.domain_disc, cDs, Mat(g.dsource));
    const GradResult back_dt = mlp_backward(model.domain_disc, cDt, Mat(g.dtarget));
    const GradResult back_fs = mlp_backward(model.feature, cFs, back_ds.input_grad);
    const GradResult back_ft = mlp_backward(model.feature, cFt, back_dt.input_grad);
    return {g.loss, back_fs.param_grad + back_ft.param_grad};
}

ThetaGrad alignment_mmd(const DaModel& model, const Mat& Xs, const Mat& Xt,
                        const std::vector<double>& bandwidths) {
    ForwardCache cFs, cFt;
    const Mat Zs = mlp_forward_batch(model.feature, Xs, &cFs);
    const Mat Zt = mlp_forward_batch(model.feature, Xt, &cFt);
    const MmdGrad g = mmd_loss(Zs, Zt, bandwidths);
    const GradResult back_fs = mlp_backward(model.feature, cFs, g.dsource);
    const GradResult back_ft = mlp_backward(model.feature, cFt, g.dtarget);
    return {g.loss, back_fs.param_grad + back_ft.param_grad};
}

double domain_disc_objective(const DaModel& model, const Mat& Xs, const Mat& Xt, Vec* grad_phi_d) {
    ForwardCache cDs, cDt;
    const Mat Zs = mlp_forward_batch(model.feature, Xs);
    const Mat Zt = mlp_forward_batch(model.feature, Xt);
    const Vec ps = mlp_forward_batch(model.domain_disc, Zs, &cDs).col(0);
    const Vec pt = mlp_forward_batch(model.domain_disc, Zt, &cDt).col(0);
    const DomainGrad g = domain_disc_loss(ps, pt);
    if (grad_phi_d) {
        const GradResult bs = mlp_backward(model.domain_disc, cDs, Mat(g.dsource));
        const GradResult bt = mlp_backward(model.domain_disc, cDt, Mat(g.dtarget));
        *grad_phi_d = bs.param_grad + bt.param_grad;
    }
    return g.loss;
}

double soft_label_ce_objective(const DaModel& model, const Mat& X, const Mat& s, Vec* grad_phi_c) {
    ForwardCache cC;
    const Mat Z = mlp_forward_batch(model.feature, X);
    const Mat P = mlp_forward_batch(model.classifier, Z, &cC);
    const Eigen::Index n = P.rows();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < P.cols(); ++k) loss -= s(i, k) * log_clamped(P(i, k));
    loss /= static_cast<double>(n);
    if (grad_phi_c) {
        // fused soft-target softmax/CE gradient at the logits
        Mat dlogits(n, P.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            dlogits.row(i) = (s.row(i).sum() * P.row(i) - s.row(i)) / static_cast<double>(n);
        *grad_phi_c = mlp_backward_logits(model.classifier, cC, dlogits).param_grad;
    }
    return loss;
}

namespace {

TcmModelResult tcm_common(const DaModel& model, const Vec& marginal_used, double coeff,
                          bool refine, const ForwardCache& cF, const ForwardCache& cC,
                          const Mat& P, const Mat& Q, const std::vector<ForwardCache>& cV,
                          const RefinedPosterior& refined) {
    const TcmGrad core = tcm_loss(refined.rho, marginal_used, coeff);

    Mat dP, dQ;
    if (refine) {
        bayes_refine_backward(P, Q, refined, core.drho, dP, dQ);
    } else {
        dP = core.drho;
    }
    const GradResult back_c = mlp_backward(model.classifier, cC, dP);
    Mat dZ = back_c.input_grad;
    if (refine) {
        for (int k = 0; k < model.num_classes(); ++k) {
            const GradResult back_v = mlp_backward(model.class_discs[k], cV[k], Mat(dQ.col(k)));
            dZ += back_v.input_grad;
        }
    }
    const GradResult back_f = mlp_backward(model.feature, cF, dZ);

    TcmModelResult out;
    out.raw = core.raw;
    out.shifted = core.shifted;
    out.grad_theta = back_f.param_grad;
    out.rho = refined.rho;
    out.batch_marginal = refined.rho.colwise().mean().transpose();
    out.marginal_used = marginal_used;
    out.fallback = refined.fallback_used;
    return out;
}

}  // namespace

TcmModelResult tcm_model_loss(const DaModel& model, const Mat& Xt, MarginalMode mode,
                              const Vec* ema_prev, double ema_decay, bool refine) {
    if (Xt.rows() == 0) throw std::invalid_argument("tcm_model_loss: empty batch");
    ForwardCache cF, cC;
    const Mat Z = mlp_forward_batch(model.feature, Xt, &cF);
    const Mat P = mlp_forward_batch(model.classifier, Z, &cC);
    Mat Q;
    std::vector<ForwardCache> cV;
    RefinedPosterior refined;
    if (refine) {
        const int K = model.num_classes();
        Q.resize(Xt.rows(), K);
        cV.resize(K);
        for (int k = 0; k < K; ++k) Q.col(k) = mlp_forward_batch(model.class_discs[k], Z, &cV[k]).col(0);
        refined = bayes_refine(P, Q, Domain::Target);
    } else {
        refined.rho = P;
        refined.conditioning = Domain::Target;
    }

    const Vec batch_marginal = refined.rho.colwise().mean().transpose();
    Vec used = batch_marginal;
    double coeff = 1.0 / static_cast<double>(Xt.rows());
    if (mode == MarginalMode::Ema && ema_prev && ema_prev->size() == batch_marginal.size()) {
        used = ema_decay * (*ema_prev) + (1.0 - ema_decay) * batch_marginal;
        coeff = (1.0 - ema_decay) / static_cast<double>(Xt.rows());
    }
    return tcm_common(model, used, coeff, refine, cF, cC, P, Q, cV, refined);
}

TcmModelResult validation_guidance(const DaModel& model, const Mat& X_heldout, bool refine) {
    if (X_heldout.rows() == 0) throw std::invalid_argument("validation_guidance: empty held-out set");
    return tcm_model_loss(model, X_heldout, MarginalMode::BatchMean, nullptr, 0.0, refine);
}

Mat classifier_probs(const DaModel& model, const Mat& X) {
    return mlp_forward_batch(model.classifier, mlp_forward_batch(model.feature, X));
}

Mat classwise_disc_probs(const DaModel& model, const Mat& X) {
    const Mat Z = mlp_forward_batch(model.feature, X);
    Mat Q(X.rows(), model.num_classes());
    for (int k = 0; k < model.num_classes(); ++k)
        Q.col(k) = mlp_forward_batch(model.class_discs[k], Z).col(0);
    return Q;
}

RefinedPosterior refined_posterior(const DaModel& model, const Mat& X, Domain conditioning) {
    return bayes_refine(classifier_probs(model, X), classwise_disc_probs(model, X), conditioning);
}

}  // namespace paretoda
