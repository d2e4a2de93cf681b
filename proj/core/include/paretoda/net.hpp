#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace paretoda {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation { Relu, Tanh };
enum class OutputHead { Linear, Softmax, Sigmoid };

/// Numerically stable (max-shifted) softmax.
Vec softmax(const Vec& logits);
/// Row-wise softmax over a matrix of logits.
Mat softmax_rows(const Mat& logits);

inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Dense feedforward network with a flat parameter vector.
///
/// Per-layer layout inside `params`: the out*in weight block (column-major)
/// followed by the bias. Hidden layers use `activation`; the last layer is
/// followed by `head`.
struct Mlp {
    std::vector<int> layer_sizes;
    Activation activation = Activation::Tanh;
    OutputHead head = OutputHead::Linear;
    Vec params;

    int in_dim() const { return layer_sizes.front(); }
    int out_dim() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

    static int param_count(const std::vector<int>& sizes);

    int layer_offset(int layer) const;
    Eigen::Map<const Mat> weight(int layer) const;
    Eigen::Map<Mat> weight(int layer);
    Eigen::Map<const Vec> bias(int layer) const;
    Eigen::Map<Vec> bias(int layer);
};

/// Deterministic init: weights fan-in-scaled uniform, biases zero.
Mlp mlp_init(const std::vector<int>& layer_sizes, Activation activation, OutputHead head,
             std::uint64_t seed);

/// Activation record from a batched forward pass; rows are samples.
struct ForwardCache {
    std::vector<Mat> acts;  // acts[0] = input, acts[l] = post-activation of layer l
    std::vector<Mat> pre;   // pre[l-1] = pre-activation of layer l
    Mat output;             // post-head
    Vec params_snapshot;    // forward-time params, for staleness detection
};

struct GradResult {
    double value = 0.0;
    Vec param_grad;
    Mat input_grad;  // n x in_dim
};

/// Batched forward; X is n x in_dim. Returns the post-head outputs (n x out_dim).
Mat mlp_forward_batch(const Mlp& net, const Mat& X, ForwardCache* cache = nullptr);

/// Single-sample convenience wrapper around the batched pass.
Vec mlp_forward(const Mlp& net, const Vec& x, ForwardCache* cache = nullptr);

/// Exact reverse-mode gradient of sum_i <output_i, output_grad_i>.
GradResult mlp_backward(const Mlp& net, const ForwardCache& cache, const Mat& output_grad);
GradResult mlp_backward(const Mlp& net, const ForwardCache& cache, const Vec& output_grad);

/// Reverse-mode pass that injects the gradient at the pre-head logits,
/// bypassing the head Jacobian (the usual route for fused softmax/CE grads).
GradResult mlp_backward_logits(const Mlp& net, const ForwardCache& cache, const Mat& logit_grad);

/// Central finite differences (f(p+h e_i) - f(p-h e_i)) / 2h, the test oracle.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& p, double h);

/// Concatenate parameter vectors of several networks / scatter them back.
Vec flatten_params(const std::vector<Mlp>& nets);
void unflatten_params(const Vec& flat, std::vector<Mlp>& nets);

}  // namespace paretoda
