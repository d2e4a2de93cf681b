#pragma once

#include <vector>

#include "paretoda/losses.hpp"

namespace paretoda {

/// The DA model family: a shared feature extractor (its parameters are the
/// block the direction solver updates), a softmax classifier, one domain
/// discriminator for the alignment objective and K class-wise discriminators
/// for the prediction refinement.
struct DaModel {
    Mlp feature;
    Mlp classifier;
    Mlp domain_disc;
    std::vector<Mlp> class_discs;
    Vec ema_marginal;  // empty until the first target batch is seen

    int num_classes() const { return classifier.out_dim(); }
    int feature_dim() const { return feature.out_dim(); }
    int theta_dim() const { return static_cast<int>(feature.params.size()); }
};

struct ModelArch {
    std::vector<int> feature_hidden{16, 8};  // widths after the input layer
    std::vector<int> classifier_hidden{};    // empty = linear classifier
    std::vector<int> disc_hidden{8};
    Activation activation = Activation::Tanh;
};

DaModel make_model(int input_dim, int num_classes, const ModelArch& arch, std::uint64_t seed);

enum class MarginalMode { Ema, BatchMean };

struct ThetaGrad {
    double value = 0.0;
    Vec grad_theta;
};

/// Source cross-entropy; optionally also the classifier-parameter gradient.
ThetaGrad source_loss(const DaModel& model, const Mat& X, const std::vector<int>& labels,
                      Vec* grad_phi_c = nullptr);

/// Feature-side alignment objective (domain confusion through the frozen
/// discriminator); gradient wrt theta only.
ThetaGrad alignment_adversarial(const DaModel& model, const Mat& Xs, const Mat& Xt,
                                bool literal_negation = false);

/// Discrepancy alignment: multi-kernel MMD between feature embeddings.
ThetaGrad alignment_mmd(const DaModel& model, const Mat& Xs, const Mat& Xt,
                        const std::vector<double>& bandwidths);

/// Discriminator player: BCE with true domain labels, gradient wrt phi_d.
double domain_disc_objective(const DaModel& model, const Mat& Xs, const Mat& Xt, Vec* grad_phi_d);

/// Soft-label cross-entropy of the classifier against frozen weights s
/// (the classifier half of the M-step); gradient wrt phi_c.
double soft_label_ce_objective(const DaModel& model, const Mat& X, const Mat& s, Vec* grad_phi_c);

struct TcmModelResult {
    double raw = 0.0;
    double shifted = 0.0;
    Vec grad_theta;
    Mat rho;
    Vec batch_marginal;  // mean of rho rows before any EMA blending
    Vec marginal_used;
    bool fallback = false;
};

/// Eq-5 value on a target batch through the full refinement chain, with the
/// exact theta gradient (through the Bayes quotient, both heads and the
/// extractor). refine=false collapses rho to the classifier posterior.
TcmModelResult tcm_model_loss(const DaModel& model, const Mat& Xt, MarginalMode mode,
                              const Vec* ema_prev, double ema_decay, bool refine);

/// Guidance loss: the same value on a held-out batch with a within-batch
/// marginal. grad_theta is the guidance gradient of the direction solver.
TcmModelResult validation_guidance(const DaModel& model, const Mat& X_heldout, bool refine);

Mat classifier_probs(const DaModel& model, const Mat& X);
/// Column k holds p(z=1 | x, v_k).
Mat classwise_disc_probs(const DaModel& model, const Mat& X);
RefinedPosterior refined_posterior(const DaModel& model, const Mat& X, Domain conditioning);

}  // namespace paretoda
