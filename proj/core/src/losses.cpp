#include "paretoda/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace paretoda {

void Batch::validate() const {
    if (features.rows() < 1) throw std::invalid_argument("Batch: empty batch");
    const bool labeled = labels.has_value();
    if (domain == Domain::Source && !labeled)
        throw std::invalid_argument("Batch: source batch must carry labels");
    if (domain == Domain::Target && labeled)
        throw std::invalid_argument("Batch: target batch must not carry labels");
    if (labeled && static_cast<Eigen::Index>(labels->size()) != features.rows())
        throw std::invalid_argument("Batch: label count does not match feature rows");
}

CeGrad source_ce_loss(const Mat& probs, const std::vector<int>& labels) {
    const Eigen::Index n = probs.rows(), K = probs.cols();
    if (n == 0) throw std::invalid_argument("source_ce_loss: empty batch");
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw std::invalid_argument("source_ce_loss: label count mismatch");
    CeGrad out;
    out.dlogits = probs / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= K) throw std::invalid_argument("source_ce_loss: label out of range");
        out.loss -= log_clamped(probs(i, y));
        out.dlogits(i, y) -= 1.0 / static_cast<double>(n);
    }
    out.loss /= static_cast<double>(n);
    return out;
}

namespace {

// mean of -log p(correct domain) over one batch; dprob gets the gradient
double bce_side(const Vec& probs, bool label_is_one, Vec& dprob) {
    const Eigen::Index n = probs.size();
    dprob.resize(n);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double d;
        if (label_is_one) {
            loss -= log_clamped(probs(i), &d);
            dprob(i) = -d / static_cast<double>(n);
        } else {
            loss -= log_clamped(1.0 - probs(i), &d);
            dprob(i) = d / static_cast<double>(n);
        }
    }
    return loss / static_cast<double>(n);
}

}  // namespace

DomainGrad domain_disc_loss(const Vec& probs_source, const Vec& probs_target) {
    if (probs_source.size() == 0 || probs_target.size() == 0)
        throw std::invalid_argument("domain_disc_loss: empty batch");
    DomainGrad out;
    const double ls = bce_side(probs_source, /*label_is_one=*/false, out.dsource);
    const double lt = bce_side(probs_target, /*label_is_one=*/true, out.dtarget);
    out.loss = 0.5 * (ls + lt);
    out.dsource *= 0.5;
    out.dtarget *= 0.5;
    return out;
}

DomainGrad feature_alignment_loss(const Vec& probs_source, const Vec& probs_target,
                                  bool literal_negation) {
    if (literal_negation) {
        DomainGrad out = domain_disc_loss(probs_source, probs_target);
        out.loss = -out.loss;
        out.dsource = -out.dsource;
        out.dtarget = -out.dtarget;
        return out;
    }
    if (probs_source.size() == 0 || probs_target.size() == 0)
        throw std::invalid_argument("feature_alignment_loss: empty batch");
    DomainGrad out;
    const double ls = bce_side(probs_source, /*label_is_one=*/true, out.dsource);
    const double lt = bce_side(probs_target, /*label_is_one=*/false, out.dtarget);
    out.loss = 0.5 * (ls + lt);
    out.dsource *= 0.5;
    out.dtarget *= 0.5;
    return out;
}

MmdGrad mmd_loss(const Mat& feats_source, const Mat& feats_target,
                 const std::vector<double>& bandwidths, bool biased) {
    const Eigen::Index m = feats_source.rows(), n = feats_target.rows();
    if (!biased && (m < 2 || n < 2))
        throw std::invalid_argument("mmd_loss: unbiased estimate needs >= 2 samples per side");
    if (biased && (m < 1 || n < 1)) throw std::invalid_argument("mmd_loss: empty sample set");
    if (feats_source.cols() != feats_target.cols())
        throw std::invalid_argument("mmd_loss: feature dimension mismatch");
    if (bandwidths.empty()) throw std::invalid_argument("mmd_loss: no bandwidths");
    for (double b : bandwidths)
        if (!(b > 0.0)) throw std::invalid_argument("mmd_loss: bandwidths must be positive");

    MmdGrad out;
    out.dsource = Mat::Zero(m, feats_source.cols());
    out.dtarget = Mat::Zero(n, feats_target.cols());

    const double wss = biased ? 1.0 / double(m * m) : 1.0 / double(m * (m - 1));
    const double wtt = biased ? 1.0 / double(n * n) : 1.0 / double(n * (n - 1));
    const double wst = -2.0 / double(m * n);

    // accumulates weight * k(x,y) and the matching gradient contribution
    auto accumulate = [&](const Mat& A, const Mat& B, Eigen::Index i, Eigen::Index j, double w,
                          Mat& dA, Mat& dB) {
        const Vec diff = A.row(i) - B.row(j);
        const double d2 = diff.squaredNorm();
        for (double sigma : bandwidths) {
            const double k = std::exp(-d2 / (2.0 * sigma * sigma));
            out.loss += w * k;
            const Vec g = (w * k / (sigma * sigma)) * diff;
            dA.row(i) -= g;
            dB.row(j) += g;
        }
    };

    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!biased && i == j) continue;
            accumulate(feats_source, feats_source, i, j, wss, out.dsource, out.dsource);
        }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!biased && i == j) continue;
            accumulate(feats_target, feats_target, i, j, wtt, out.dtarget, out.dtarget);
        }
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            accumulate(feats_source, feats_target, i, j, wst, out.dsource, out.dtarget);
    return out;
}

RefinedPosterior bayes_refine(const Mat& class_probs, const Mat& disc_probs, Domain conditioning) {
    const Eigen::Index n = class_probs.rows(), K = class_probs.cols();
    if (disc_probs.rows() != n || disc_probs.cols() != K)
        throw std::invalid_argument("bayes_refine: shape mismatch");
    RefinedPosterior out;
    out.conditioning = conditioning;
    out.rho.resize(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        double denom = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            const double q = conditioning == Domain::Target ? disc_probs(i, k) : 1.0 - disc_probs(i, k);
            out.rho(i, k) = q * class_probs(i, k);
            denom += out.rho(i, k);
        }
        if (denom <= 0.0) {
            out.rho.row(i) = class_probs.row(i);
            out.fallback_used = true;
        } else {
            out.rho.row(i) /= denom;
        }
    }
    return out;
}

void bayes_refine_backward(const Mat& class_probs, const Mat& disc_probs,
                           const RefinedPosterior& refined, const Mat& dl_drho,
                           Mat& dl_dclass, Mat& dl_ddisc) {
    const Eigen::Index n = class_probs.rows(), K = class_probs.cols();
    dl_dclass = Mat::Zero(n, K);
    dl_ddisc = Mat::Zero(n, K);
    const bool target_side = refined.conditioning == Domain::Target;
    for (Eigen::Index i = 0; i < n; ++i) {
        double denom = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            const double q = target_side ? disc_probs(i, k) : 1.0 - disc_probs(i, k);
            denom += q * class_probs(i, k);
        }
        if (denom <= 0.0) {
            // fallback row: rho was the classifier posterior verbatim
            dl_dclass.row(i) = dl_drho.row(i);
            continue;
        }
        // rho_k = N_k / D with N_k = q_k p_k, D = sum N;
        // dL/dN_k = (dL/drho_k - sum_k' dL/drho_k' rho_k') / D
        const double dot = dl_drho.row(i).dot(refined.rho.row(i));
        for (Eigen::Index k = 0; k < K; ++k) {
            const double q = target_side ? disc_probs(i, k) : 1.0 - disc_probs(i, k);
            const double dN = (dl_drho(i, k) - dot) / denom;
            dl_dclass(i, k) = dN * q;
            dl_ddisc(i, k) = dN * class_probs(i, k) * (target_side ? 1.0 : -1.0);
        }
    }
}

SoftLabelWeights soft_label_weights(const Batch& batch, const RefinedPosterior* refined,
                                    int num_classes) {
    batch.validate();
    SoftLabelWeights out;
    if (batch.domain == Domain::Source) {
        if (refined) throw std::invalid_argument("soft_label_weights: source batch with posterior");
        out.s = Mat::Zero(batch.size(), num_classes);
        for (int i = 0; i < batch.size(); ++i) {
            const int y = (*batch.labels)[i];
            if (y < 0 || y >= num_classes)
                throw std::invalid_argument("soft_label_weights: label out of range");
            out.s(i, y) = 1.0;
        }
    } else {
        if (!refined) throw std::invalid_argument("soft_label_weights: target batch needs posterior");
        if (refined->rho.rows() != batch.size() || refined->rho.cols() != num_classes)
            throw std::invalid_argument("soft_label_weights: posterior shape mismatch");
        out.s = refined->rho;
    }
    return out;
}

ClasswiseGrad classwise_disc_loss(const Mat& s, const std::vector<int>& domain_labels,
                                  const Mat& disc_probs) {
    const Eigen::Index n = s.rows(), K = s.cols();
    if (disc_probs.rows() != n || disc_probs.cols() != K ||
        static_cast<Eigen::Index>(domain_labels.size()) != n)
        throw std::invalid_argument("classwise_disc_loss: shape mismatch");
    ClasswiseGrad out;
    out.ddisc = Mat::Zero(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool is_target = domain_labels[i] == 1;
        for (Eigen::Index k = 0; k < K; ++k) {
            double d;
            const double p_correct = is_target ? disc_probs(i, k) : 1.0 - disc_probs(i, k);
            out.loss -= s(i, k) * log_clamped(p_correct, &d);
            out.ddisc(i, k) = -s(i, k) * d * (is_target ? 1.0 : -1.0) / static_cast<double>(n);
        }
    }
    out.loss /= static_cast<double>(n);
    return out;
}

TcmGrad tcm_loss(const Mat& rho, const Vec& marginal, double dmarginal_coeff) {
    const Eigen::Index n = rho.rows(), K = rho.cols();
    if (n == 0) throw std::invalid_argument("tcm_loss: empty batch");
    if (marginal.size() != K) throw std::invalid_argument("tcm_loss: marginal size mismatch");
    TcmGrad out;
    out.drho = Mat::Zero(n, K);

    Vec marg_deriv(K);
    double marginal_term = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) marginal_term += xlogx(marginal(k), &marg_deriv(k));

    double sample_term = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < K; ++k) {
            double d;
            sample_term += xlogx(rho(i, k), &d);
            out.drho(i, k) = dmarginal_coeff * marg_deriv(k) - d / static_cast<double>(n);
        }

    out.raw = marginal_term - sample_term / static_cast<double>(n);
    out.shifted = out.raw + std::log(static_cast<double>(K));
    return out;
}

}  // namespace paretoda
