#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tempseg/tensor.hpp"

namespace tempseg {

// Receptive field of layer l for kernel size 3 with doubling dilations.
inline long long receptive_field(int layer) {
    if (layer < 1) throw DimensionError("receptive_field: layer index must be >= 1");
    return (1LL << (layer + 1)) - 1;
}

// Fan-in-scaled uniform init, bound = 1/sqrt(fan_in), for weights and biases.
template <typename T>
void init_conv(ConvParams<T>& p, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.kernel) * p.in_channels);
    for (auto& w : p.weights) w = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& b : p.bias) b = static_cast<T>(rng.uniform(-bound, bound));
}

// Convolution with its gradient buffers and cached input.
template <typename T>
struct Conv {
    ConvParams<T> params;
    std::vector<T> grad_weights;
    std::vector<T> grad_bias;
    Tensor<T> cached_input;

    Conv() = default;
    Conv(int k, int in_c, int out_c, int dil)
        : params(k, in_c, out_c, dil),
          grad_weights(params.weights.size(), T(0)),
          grad_bias(params.bias.size(), T(0)) {}

    Tensor<T> forward(const Tensor<T>& x) {
        cached_input = x;
        return conv1d_forward(x, params);
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        ConvGrads<T> g = conv1d_backward(cached_input, params, grad_out);
        for (size_t i = 0; i < grad_weights.size(); ++i) grad_weights[i] += g.weights[i];
        for (size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += g.bias[i];
        return std::move(g.input);
    }

    void zero_grad() {
        std::fill(grad_weights.begin(), grad_weights.end(), T(0));
        std::fill(grad_bias.begin(), grad_bias.end(), T(0));
    }
};

// H_l = H_{l-1} + Dropout(W * ReLU(W_d * H_{l-1} + b_d) + b)
template <typename T>
struct DilatedResidualLayer {
    Conv<T> dilated;    // kernel 3
    Conv<T> pointwise;  // kernel 1
    double dropout_rate = 0.5;

    DilatedResidualLayer() = default;
    DilatedResidualLayer(int filters, int dilation, double dropout)
        : dilated(3, filters, filters, dilation),
          pointwise(1, filters, filters, 1),
          dropout_rate(dropout) {}

    Tensor<T> forward(const Tensor<T>& x, bool training, Rng& rng) {
        pre_relu_ = dilated.forward(x);
        Tensor<T> act = relu(pre_relu_);
        Tensor<T> pw = pointwise.forward(act);
        Tensor<T> dropped = dropout(pw, dropout_rate, training, rng, &mask_);
        Tensor<T> out(x.channels, x.time);
        for (size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] + dropped.data[i];
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        Tensor<T> g = dropout_backward(grad_out, mask_);
        g = pointwise.backward(g);
        g = relu_backward(pre_relu_, g);
        g = dilated.backward(g);
        for (size_t i = 0; i < g.size(); ++i) g.data[i] += grad_out.data[i];  // skip path
        return g;
    }

    void zero_grad() {
        dilated.zero_grad();
        pointwise.zero_grad();
    }

private:
    Tensor<T> pre_relu_;
    std::vector<T> mask_;
};

// Two parallel dilated convolutions with complementary dilations, concatenated
// (branch1 first), ReLU, fused by a 1x1 conv over 2D channels, dropout,
// residual add.
template <typename T>
struct DualDilatedLayer {
    Conv<T> branch1;  // dilation 2^{l-1}
    Conv<T> branch2;  // dilation 2^{L-l}
    Conv<T> fuse;     // kernel 1, 2D -> D
    double dropout_rate = 0.5;

    DualDilatedLayer() = default;
    DualDilatedLayer(int filters, int dilation1, int dilation2, double dropout)
        : branch1(3, filters, filters, dilation1),
          branch2(3, filters, filters, dilation2),
          fuse(1, 2 * filters, filters, 1),
          dropout_rate(dropout) {}

    Tensor<T> forward(const Tensor<T>& x, bool training, Rng& rng) {
        const int d = x.channels;
        Tensor<T> b1 = branch1.forward(x);
        Tensor<T> b2 = branch2.forward(x);
        concat_ = Tensor<T>(2 * d, x.time);
        std::copy(b1.data.begin(), b1.data.end(), concat_.data.begin());
        std::copy(b2.data.begin(), b2.data.end(), concat_.data.begin() + b1.size());
        Tensor<T> act = relu(concat_);
        Tensor<T> fused = fuse.forward(act);
        Tensor<T> dropped = dropout(fused, dropout_rate, training, rng, &mask_);
        Tensor<T> out(d, x.time);
        for (size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i] + dropped.data[i];
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) {
        const int d = grad_out.channels;
        Tensor<T> g = dropout_backward(grad_out, mask_);
        g = fuse.backward(g);
        g = relu_backward(concat_, g);
        Tensor<T> g1(d, grad_out.time), g2(d, grad_out.time);
        std::copy(g.data.begin(), g.data.begin() + g1.size(), g1.data.begin());
        std::copy(g.data.begin() + g1.size(), g.data.end(), g2.data.begin());
        Tensor<T> gx1 = branch1.backward(g1);
        Tensor<T> gx2 = branch2.backward(g2);
        for (size_t i = 0; i < gx1.size(); ++i)
            gx1.data[i] += gx2.data[i] + grad_out.data[i];
        return gx1;
    }

    void zero_grad() {
        branch1.zero_grad();
        branch2.zero_grad();
        fuse.zero_grad();
    }

private:
    Tensor<T> concat_;
    std::vector<T> mask_;
};

// 1x1 projection D -> C followed by channel softmax.
template <typename T>
struct ClassificationHead {
    Conv<T> proj;

    ClassificationHead() = default;
    ClassificationHead(int filters, int num_classes) : proj(1, filters, num_classes, 1) {}

    // Returns (logits, probs); each probability column sums to 1.
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& h) {
        Tensor<T> logits = proj.forward(h);
        Tensor<T> probs = channel_softmax(logits);
        return {std::move(logits), std::move(probs)};
    }

    // grad_logits -> grad on the head input.
    Tensor<T> backward(const Tensor<T>& grad_logits) { return proj.backward(grad_logits); }

    void zero_grad() { proj.zero_grad(); }
};

}  // namespace tempseg
