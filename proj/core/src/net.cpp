#include "paretoda/net.hpp"

#include <cmath>
#include <stdexcept>

#include "paretoda/rng.hpp"

namespace paretoda {

Vec softmax(const Vec& logits) {
    if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite logits");
    const double shift = logits.maxCoeff();
    Vec e = (logits.array() - shift).exp();
    return e / e.sum();
}

Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) out.row(i) = softmax(logits.row(i).transpose()).transpose();
    return out;
}

int Mlp::param_count(const std::vector<int>& sizes) {
    int total = 0;
    for (std::size_t l = 1; l < sizes.size(); ++l) total += (sizes[l - 1] + 1) * sizes[l];
    return total;
}

int Mlp::layer_offset(int layer) const {
    int off = 0;
    for (int l = 0; l < layer; ++l) off += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return off;
}

Eigen::Map<const Mat> Mlp::weight(int layer) const {
    const int rows = layer_sizes[layer + 1], cols = layer_sizes[layer];
    return {params.data() + layer_offset(layer), rows, cols};
}

Eigen::Map<Mat> Mlp::weight(int layer) {
    const int rows = layer_sizes[layer + 1], cols = layer_sizes[layer];
    return {params.data() + layer_offset(layer), rows, cols};
}

Eigen::Map<const Vec> Mlp::bias(int layer) const {
    const int rows = layer_sizes[layer + 1], cols = layer_sizes[layer];
    return {params.data() + layer_offset(layer) + rows * cols, rows};
}

Eigen::Map<Vec> Mlp::bias(int layer) {
    const int rows = layer_sizes[layer + 1], cols = layer_sizes[layer];
    return {params.data() + layer_offset(layer) + rows * cols, rows};
}

Mlp mlp_init(const std::vector<int>& layer_sizes, Activation activation, OutputHead head,
             std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("mlp_init: need at least two layer sizes");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("mlp_init: layer sizes must be positive");

    Mlp net;
    net.layer_sizes = layer_sizes;
    net.activation = activation;
    net.head = head;
    net.params = Vec::Zero(Mlp::param_count(layer_sizes));

    Rng rng(seed);
    for (int l = 0; l < net.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer_sizes[l]));
        auto w = net.weight(l);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return net;
}

namespace {

Mat apply_activation(const Mat& pre, Activation act) {
    if (act == Activation::Relu) return pre.cwiseMax(0.0);
    return pre.array().tanh().matrix();
}

Mat activation_deriv(const Mat& pre, const Mat& post, Activation act) {
    if (act == Activation::Relu) return (pre.array() > 0.0).cast<double>().matrix();
    return (1.0 - post.array().square()).matrix();
}

Mat apply_head(const Mat& logits, OutputHead head) {
    switch (head) {
        case OutputHead::Linear: return logits;
        case OutputHead::Softmax: return softmax_rows(logits);
        case OutputHead::Sigmoid: {
            Mat out(logits.rows(), logits.cols());
            for (Eigen::Index i = 0; i < logits.size(); ++i) out(i) = sigmoid(logits(i));
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

// dL/dlogits from dL/doutput for each head
Mat head_backward(const Mat& output, const Mat& output_grad, OutputHead head) {
    switch (head) {
        case OutputHead::Linear: return output_grad;
        case OutputHead::Softmax: {
            Mat d(output.rows(), output.cols());
            for (Eigen::Index i = 0; i < output.rows(); ++i) {
                const double dot = output.row(i).dot(output_grad.row(i));
                d.row(i) = output.row(i).array() * (output_grad.row(i).array() - dot);
            }
            return d;
        }
        case OutputHead::Sigmoid:
            return (output_grad.array() * output.array() * (1.0 - output.array())).matrix();
    }
    throw std::logic_error("unreachable");
}

void check_cache(const Mlp& net, const ForwardCache& cache) {
    if (cache.acts.empty() || cache.pre.size() != static_cast<std::size_t>(net.num_layers()))
        throw std::invalid_argument("mlp_backward: cache does not match network depth");
    if (cache.params_snapshot.size() != net.params.size() ||
        (cache.params_snapshot.array() != net.params.array()).any())
        throw std::runtime_error("mlp_backward: stale forward cache (parameters changed)");
}

GradResult backward_from_pre_head(const Mlp& net, const ForwardCache& cache, Mat dpre) {
    const int L = net.num_layers();
    GradResult res;
    res.param_grad = Vec::Zero(net.params.size());
    for (int l = L - 1; l >= 0; --l) {
        const Mat& below = cache.acts[l];  // n x in_l
        const int rows = net.layer_sizes[l + 1], cols = net.layer_sizes[l];
        const int off = net.layer_offset(l);
        Eigen::Map<Mat> dW(res.param_grad.data() + off, rows, cols);
        Eigen::Map<Vec> db(res.param_grad.data() + off + rows * cols, rows);
        dW = dpre.transpose() * below;
        db = dpre.colwise().sum().transpose();
        Mat dbelow = dpre * net.weight(l);
        if (l > 0) dpre = dbelow.cwiseProduct(activation_deriv(cache.pre[l - 1], cache.acts[l], net.activation));
        else res.input_grad = std::move(dbelow);
    }
    return res;
}

}  // namespace

Mat mlp_forward_batch(const Mlp& net, const Mat& X, ForwardCache* cache) {
    if (X.cols() != net.in_dim())
        throw std::invalid_argument("mlp_forward: input has " + std::to_string(X.cols()) +
                                    " columns, network expects " + std::to_string(net.in_dim()));
    const int L = net.num_layers();
    std::vector<Mat> acts, pre;
    acts.reserve(L + 1);
    pre.reserve(L);
    acts.push_back(X);
    for (int l = 0; l < L; ++l) {
        Mat z = acts.back() * net.weight(l).transpose();
        z.rowwise() += net.bias(l).transpose();
        pre.push_back(z);
        if (l + 1 < L) acts.push_back(apply_activation(z, net.activation));
    }
    Mat out = apply_head(pre.back(), net.head);
    if (cache) {
        cache->acts = std::move(acts);
        cache->pre = std::move(pre);
        cache->output = out;
        cache->params_snapshot = net.params;
    }
    return out;
}

Vec mlp_forward(const Mlp& net, const Vec& x, ForwardCache* cache) {
    return mlp_forward_batch(net, x.transpose(), cache).row(0).transpose();
}

GradResult mlp_backward(const Mlp& net, const ForwardCache& cache, const Mat& output_grad) {
    check_cache(net, cache);
    if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
        throw std::invalid_argument("mlp_backward: output gradient shape mismatch");
    GradResult res = backward_from_pre_head(net, cache, head_backward(cache.output, output_grad, net.head));
    res.value = cache.output.cwiseProduct(output_grad).sum();
    return res;
}

GradResult mlp_backward(const Mlp& net, const ForwardCache& cache, const Vec& output_grad) {
    return mlp_backward(net, cache, Mat(output_grad.transpose()));
}

GradResult mlp_backward_logits(const Mlp& net, const ForwardCache& cache, const Mat& logit_grad) {
    check_cache(net, cache);
    if (logit_grad.rows() != cache.output.rows() || logit_grad.cols() != cache.output.cols())
        throw std::invalid_argument("mlp_backward_logits: gradient shape mismatch");
    return backward_from_pre_head(net, cache, logit_grad);
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& p, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
    Vec grad(p.size());
    Vec q = p;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        q(i) = p(i) + h;
        const double fp = f(q);
        q(i) = p(i) - h;
        const double fm = f(q);
        q(i) = p(i);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_gradient: non-finite function value");
        grad(i) = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Vec flatten_params(const std::vector<Mlp>& nets) {
    Eigen::Index total = 0;
    for (const auto& n : nets) total += n.params.size();
    Vec flat(total);
    Eigen::Index off = 0;
    for (const auto& n : nets) {
        flat.segment(off, n.params.size()) = n.params;
        off += n.params.size();
    }
    return flat;
}

void unflatten_params(const Vec& flat, std::vector<Mlp>& nets) {
    Eigen::Index total = 0;
    for (const auto& n : nets) total += n.params.size();
    if (flat.size() != total)
        throw std::invalid_argument("unflatten_params: length mismatch");
    Eigen::Index off = 0;
    for (auto& n : nets) {
        n.params = flat.segment(off, n.params.size());
        off += n.params.size();
    }
}

}  // namespace paretoda
