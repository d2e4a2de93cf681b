#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "paretoda/dirsolve.hpp"
#include "paretoda/model.hpp"
#include "paretoda/scenarios.hpp"

namespace paretoda {

enum class Method { Paretoda, Linear, Mean, Mgda };
enum class Alignment { Adversarial, Mmd };

const char* to_string(Method m);
const char* to_string(Alignment a);
Method parse_method(const std::string& s);
Alignment parse_alignment(const std::string& s);

struct TrainConfig {
    Method method = Method::Paretoda;
    Vec linear_weights = Vec::Ones(3);  // linear method only; unnormalized
    double eta = 0.05;
    int steps = 2000;
    int batch_size = 64;
    double epsilon = kDefaultEpsilon;
    double lambda0 = 1.0;  // scale factor on the source objective
    double lambda1 = 1.0;  // scale factor on the alignment objective
    Alignment alignment = Alignment::Adversarial;
    bool literal_negation = false;
    std::vector<double> mmd_bandwidths{0.5, 1.0, 2.0};
    double beta_soft_label = 1.0;
    double ema_decay = 0.9;
    MarginalMode marginal = MarginalMode::Ema;
    bool bayes_refinement = true;
    std::uint64_t seed = 0;
    ModelArch arch;
    int eval_every = 1;  // accuracy cadence; the final step is always evaluated
    // base-method warm start before the guided loop: plain descent on the
    // source and alignment objectives plus the auxiliary-head updates, the
    // desk-scale stand-in for plugging into an already-training DA method.
    // Identical across direction methods for a given seed.
    int warmup_steps = 0;

    void validate() const;
};

struct StepTrace {
    int step = 0;
    double l_s = 0.0, l_d = 0.0, l_t = 0.0, l_val_shifted = 0.0;
    Vec w_star;
    double gamma_star = 0.0;
    DescentMode mode = DescentMode::GuidanceDescent;
    Vec slacks;
    double d_norm = 0.0;
    double acc_raw = 0.0, acc_refined = 0.0;
    LpFallback fallback = LpFallback::None;
    bool theorem1_pass = true;
};

struct TrainResult {
    DaModel model;
    std::vector<StepTrace> trace;
    int theorem1_violations = 0;  // direction-solver steps failing the descent guarantees
};

/// Thrown when a loss turns non-finite mid-run.
struct TrainAbort : std::runtime_error {
    int step;
    explicit TrainAbort(int step_index)
        : std::runtime_error("non-finite loss at step " + std::to_string(step_index)),
          step(step_index) {}
};

/// The guidance seam: the trainer hands held-out data to this callable and
/// nothing else. Tests substitute auditing doubles here.
using GuidanceFn = std::function<TcmModelResult(const DaModel&, const Mat& heldout_batch, bool refine)>;

/// One run of the full update loop. Per step: objective values and their
/// shared-parameter gradients, guidance loss and gradient on a held-out
/// batch, direction choice per `method`, the shared-parameter step, then the
/// auxiliary-parameter updates. Deterministic given the config seed.
TrainResult train_da(const TrainConfig& config, const DaScenario& scenario,
                     const GuidanceFn& guidance = {});

/// Descends phi_d on the domain BCE, each v_k on the weighted class-wise
/// BCE (with the posterior weights frozen), and phi_c on the source CE plus
/// beta * soft-label CE on the target batch. Plain gradient steps, same eta.
void update_auxiliaries(DaModel& model, const Batch& source_batch, const Batch& target_batch,
                        const TrainConfig& config);

enum class AccuracyKind { RawClassifier, BayesRefined };

/// Fraction of target training samples whose argmax prediction matches the
/// oracle label (evaluation only).
double evaluate_target_accuracy(const DaModel& model, const DaScenario& scenario,
                                AccuracyKind kind);

enum class ToyGuidance { None, ObjectiveIndex };

struct ToyRunConfig {
    Method method = Method::Mgda;
    double eta = 0.05;
    int steps = 2000;
    Vec linear_weights = Vec::Constant(2, 0.5);
    ToyGuidance guidance = ToyGuidance::None;  // ObjectiveIndex enables the LP scheme
    int guidance_index = 0;
    double epsilon = kDefaultEpsilon;
};

struct ToyRunResult {
    std::vector<LossPoint> path;  // losses at init and after every step
    Vec final_theta;
};

ToyRunResult train_toy(const ToyProblem& problem, const Vec& init_theta, const ToyRunConfig& cfg);

/// Upper-bound reference: trains on oracle-labeled target data. Oracle
/// output only, never a contender in method comparisons.
TrainResult ideal_supervised_run(const TrainConfig& config, const DaScenario& scenario);

}  // namespace paretoda
