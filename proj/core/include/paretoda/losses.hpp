#pragma once

#include <optional>
#include <vector>

#include "paretoda/net.hpp"

namespace paretoda {

enum class Domain { Source = 0, Target = 1 };

/// One minibatch. Labels are present iff the batch is source-domain;
/// target data is unlabeled by construction.
struct Batch {
    Mat features;  // n x p
    std::optional<std::vector<int>> labels;
    Domain domain = Domain::Source;

    int size() const { return static_cast<int>(features.rows()); }
    void validate() const;
};

/// Per-sample class posterior conditioned on a domain label (Eq-3-style
/// multiplicative ensemble of classifier and class-wise discriminators).
struct RefinedPosterior {
    Mat rho;  // n x K, rows on the simplex
    Domain conditioning = Domain::Target;
    bool fallback_used = false;  // a zero-mass row fell back to the classifier posterior
};

struct SoftLabelWeights {
    Mat s;  // n x K; one-hot rows for source, posterior rows for target
};

struct LossBundle {
    double l_s = 0.0;
    double l_d = 0.0;
    double l_t = 0.0;
    double l_val_shifted = 0.0;
};

inline constexpr double kProbClamp = 1e-12;

/// log with the probability clamp: constant (zero derivative) below the clamp.
inline double log_clamped(double x, double* deriv = nullptr) {
    if (x < kProbClamp) {
        if (deriv) *deriv = 0.0;
        return std::log(kProbClamp);
    }
    if (deriv) *deriv = 1.0 / x;
    return std::log(x);
}

/// x*log(x) with 0 log 0 := 0; derivative flattens to log(clamp) below the clamp.
inline double xlogx(double x, double* deriv = nullptr) {
    if (x == 0.0) {
        if (deriv) *deriv = std::log(kProbClamp);
        return 0.0;
    }
    if (x < kProbClamp) {
        if (deriv) *deriv = std::log(kProbClamp);
        return x * std::log(kProbClamp);
    }
    if (deriv) *deriv = std::log(x) + 1.0;
    return x * std::log(x);
}

struct CeGrad {
    double loss = 0.0;
    Mat dlogits;  // n x K, gradient at the classifier logits
};

/// Mean negative log-likelihood of softmax probabilities against hard labels.
CeGrad source_ce_loss(const Mat& probs, const std::vector<int>& labels);

struct DomainGrad {
    double loss = 0.0;
    Vec dsource, dtarget;  // gradients wrt the discriminator probabilities
};

/// Binary cross-entropy with true domain labels (source=0, target=1),
/// averaged per batch then across the two batches. The phi_d player.
DomainGrad domain_disc_loss(const Vec& probs_source, const Vec& probs_target);

/// Domain-confusion form: BCE against inverted labels (source=1, target=0).
/// Its feature gradient is the alignment column fed to the direction solver.
/// literal_negation swaps in -domain_disc_loss instead.
DomainGrad feature_alignment_loss(const Vec& probs_source, const Vec& probs_target,
                                  bool literal_negation = false);

struct MmdGrad {
    double loss = 0.0;
    Mat dsource, dtarget;  // gradients wrt the feature rows
};

/// Squared MMD with a sum of Gaussian kernels exp(-|x-y|^2 / (2 sigma^2)).
/// Unbiased by default (needs >= 2 samples per side); the biased variant is
/// exposed for single-sample checks.
MmdGrad mmd_loss(const Mat& feats_source, const Mat& feats_target,
                 const std::vector<double>& bandwidths, bool biased = false);

/// Eq-3 refinement: rho_{k|d} ∝ p(z=d|x,v_k) p(y=k|x). disc_probs holds
/// p(z=1|x,v_k); conditioning on the source domain uses the complement.
RefinedPosterior bayes_refine(const Mat& class_probs, const Mat& disc_probs, Domain conditioning);

/// Reverse-mode pass through bayes_refine: maps dL/drho to dL/dclass_probs
/// and dL/ddisc_probs. Fallback rows propagate identity onto the class probs.
void bayes_refine_backward(const Mat& class_probs, const Mat& disc_probs,
                           const RefinedPosterior& refined, const Mat& dl_drho,
                           Mat& dl_dclass, Mat& dl_ddisc);

/// Weighting matrix for the class-wise discriminator loss: hard one-hot rows
/// for a labeled source batch, refined posterior rows for a target batch.
SoftLabelWeights soft_label_weights(const Batch& batch, const RefinedPosterior* refined,
                                    int num_classes);

struct ClasswiseGrad {
    double loss = 0.0;
    Mat ddisc;  // n x K, gradient wrt p(z=1|x,v_k); s is a frozen weight
};

/// Weighted domain BCE over all class-wise discriminator heads:
/// -(1/n) sum_i sum_k s_ik log p(z=z_i | x_i, v_k).
ClasswiseGrad classwise_disc_loss(const Mat& s, const std::vector<int>& domain_labels,
                                  const Mat& disc_probs);

struct TcmGrad {
    double raw = 0.0;      // in [-log K, 0]
    double shifted = 0.0;  // raw + log K, in [0, log K]
    Mat drho;              // gradient of the raw value wrt rho
};

/// Information-maximization value of a posterior batch: marginal negative
/// entropy minus mean per-sample negative entropy. `marginal` is the rho-mean
/// estimate in use and `dmarginal_coeff` its per-entry sensitivity
/// d marginal_k / d rho_ik (1/n for a batch mean, (1-decay)/n under EMA,
/// 0 for a frozen estimate).
TcmGrad tcm_loss(const Mat& rho, const Vec& marginal, double dmarginal_coeff);

}  // namespace paretoda
