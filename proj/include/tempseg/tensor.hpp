#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <cblas.h>

#include "tempseg/common.hpp"

namespace tempseg {

// Dense 2-D array, channel-major: row = channel, contiguous along time.
template <typename T>
struct Tensor {
    int channels = 0;
    int time = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int c, int t) : channels(c), time(t), data(static_cast<size_t>(c) * t, T(0)) {
        if (c <= 0 || t <= 0) throw DimensionError("tensor dims must be positive");
    }

    T& at(int c, int t) { return data[static_cast<size_t>(c) * time + t]; }
    const T& at(int c, int t) const { return data[static_cast<size_t>(c) * time + t]; }

    size_t size() const { return data.size(); }

    bool same_shape(const Tensor& o) const {
        return channels == o.channels && time == o.time;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(channels, time);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// 1-D convolution parameters. Weights are stored kernel-major:
// w[(k * in_channels + ci) * out_channels + co], so each kernel tap is an
// (in_channels x out_channels) row-major matrix.
template <typename T>
struct ConvParams {
    int kernel = 1;
    int in_channels = 0;
    int out_channels = 0;
    int dilation = 1;
    std::vector<T> weights;
    std::vector<T> bias;

    ConvParams() = default;
    ConvParams(int k, int in_c, int out_c, int dil)
        : kernel(k),
          in_channels(in_c),
          out_channels(out_c),
          dilation(dil),
          weights(static_cast<size_t>(k) * in_c * out_c, T(0)),
          bias(out_c, T(0)) {
        if (k != 1 && k != 3) throw DimensionError("kernel must be 1 or 3");
        if (dil < 1) throw DimensionError("dilation must be >= 1");
    }

    T& w(int k, int ci, int co) {
        return weights[(static_cast<size_t>(k) * in_channels + ci) * out_channels + co];
    }
    const T& w(int k, int ci, int co) const {
        return weights[(static_cast<size_t>(k) * in_channels + ci) * out_channels + co];
    }

    size_t param_count() const { return weights.size() + bias.size(); }
};

namespace detail {

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 float alpha, const float* a, int lda, const float* b, int ldb,
                 float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

inline void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k,
                 double alpha, const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace detail

// Same-length dilated 1-D convolution (zero padding, symmetric).
// out[co, t] = bias[co] + sum_{k,ci} w[k,ci,co] * in[ci, t + (k-1)*dilation],
// out-of-range taps read as zero.
template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const ConvParams<T>& p) {
    if (input.channels != p.in_channels)
        throw DimensionError("conv1d: input has " + std::to_string(input.channels) +
                             " channels, expected " + std::to_string(p.in_channels));
    const int time = input.time;
    Tensor<T> out(p.out_channels, time);
    for (int co = 0; co < p.out_channels; ++co)
        std::fill_n(&out.at(co, 0), time, p.bias[co]);

    const int mid = (p.kernel - 1) / 2;
    for (int k = 0; k < p.kernel; ++k) {
        const int offset = (k - mid) * p.dilation;
        const int t0 = std::max(0, -offset);
        const int t1 = std::min(time, time - offset);  // exclusive
        if (t0 >= t1) continue;
        const int n = t1 - t0;
        // out[:, t0:t1] += W_k^T (out x in) * in[:, t0+offset : t1+offset]
        const T* wk = p.weights.data() + static_cast<size_t>(k) * p.in_channels * p.out_channels;
        detail::gemm(CblasTrans, CblasNoTrans, p.out_channels, n, p.in_channels, T(1),
                     wk, p.out_channels, &input.at(0, t0 + offset), time, T(1),
                     out.data.data() + t0, time);
    }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> input;           // d loss / d input
    std::vector<T> weights;    // d loss / d weights, same layout as ConvParams
    std::vector<T> bias;
};

// Exact partials of sum(grad_out ⊙ conv1d_forward(input, p)).
template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                             const Tensor<T>& grad_out) {
    if (input.channels != p.in_channels || grad_out.channels != p.out_channels ||
        grad_out.time != input.time)
        throw DimensionError("conv1d_backward: shape mismatch");
    const int time = input.time;
    ConvGrads<T> g;
    g.input = Tensor<T>(p.in_channels, time);
    g.weights.assign(p.weights.size(), T(0));
    g.bias.assign(p.bias.size(), T(0));

    for (int co = 0; co < p.out_channels; ++co) {
        T s = 0;
        for (int t = 0; t < time; ++t) s += grad_out.at(co, t);
        g.bias[co] = s;
    }

    const int mid = (p.kernel - 1) / 2;
    for (int k = 0; k < p.kernel; ++k) {
        const int offset = (k - mid) * p.dilation;
        const int t0 = std::max(0, -offset);
        const int t1 = std::min(time, time - offset);
        if (t0 >= t1) continue;
        const int n = t1 - t0;
        const T* wk = p.weights.data() + static_cast<size_t>(k) * p.in_channels * p.out_channels;
        T* gwk = g.weights.data() + static_cast<size_t>(k) * p.in_channels * p.out_channels;
        // gW_k (in x out) += in[:, t0+offset:t1+offset] * grad_out[:, t0:t1]^T
        detail::gemm(CblasNoTrans, CblasTrans, p.in_channels, p.out_channels, n, T(1),
                     &input.at(0, t0 + offset), time, grad_out.data.data() + t0, time,
                     T(1), gwk, p.out_channels);
        // g_in[:, t0+offset:t1+offset] += W_k (in x out) * grad_out[:, t0:t1]
        detail::gemm(CblasNoTrans, CblasNoTrans, p.in_channels, n, p.out_channels, T(1),
                     wk, p.out_channels, grad_out.data.data() + t0, time, T(1),
                     &g.input.at(0, t0 + offset), time);
    }
    return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.channels, input.time);
    for (size_t i = 0; i < input.size(); ++i) out.data[i] = std::max(T(0), input.data[i]);
    return out;
}

// Passes gradient where the pre-activation was positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    if (!input.same_shape(grad_out)) throw DimensionError("relu_backward: shape mismatch");
    Tensor<T> g(input.channels, input.time);
    for (size_t i = 0; i < input.size(); ++i)
        g.data[i] = input.data[i] > T(0) ? grad_out.data[i] : T(0);
    return g;
}

// Column-wise softmax over channels, stabilized by the per-column max.
template <typename T>
Tensor<T> channel_softmax(const Tensor<T>& logits) {
    Tensor<T> out(logits.channels, logits.time);
    for (int t = 0; t < logits.time; ++t) {
        T mx = logits.at(0, t);
        for (int c = 1; c < logits.channels; ++c) mx = std::max(mx, logits.at(c, t));
        T sum = 0;
        for (int c = 0; c < logits.channels; ++c) {
            const T e = std::exp(logits.at(c, t) - mx);
            out.at(c, t) = e;
            sum += e;
        }
        for (int c = 0; c < logits.channels; ++c) out.at(c, t) /= sum;
    }
    return out;
}

// log(softmax) with the shared probability floor.
template <typename T>
Tensor<T> channel_log_softmax(const Tensor<T>& logits) {
    Tensor<T> probs = channel_softmax(logits);
    Tensor<T> out(logits.channels, logits.time);
    for (size_t i = 0; i < probs.size(); ++i)
        out.data[i] = std::log(std::max(probs.data[i], static_cast<T>(kProbFloor)));
    return out;
}

// Given probs = softmax(logits) and dL/dprobs, returns dL/dlogits.
template <typename T>
Tensor<T> channel_softmax_backward(const Tensor<T>& probs, const Tensor<T>& grad_probs) {
    if (!probs.same_shape(grad_probs)) throw DimensionError("softmax_backward: shape mismatch");
    Tensor<T> g(probs.channels, probs.time);
    for (int t = 0; t < probs.time; ++t) {
        T dot = 0;
        for (int c = 0; c < probs.channels; ++c) dot += grad_probs.at(c, t) * probs.at(c, t);
        for (int c = 0; c < probs.channels; ++c)
            g.at(c, t) = probs.at(c, t) * (grad_probs.at(c, t) - dot);
    }
    return g;
}

// Inverted dropout. The returned mask holds 0 or 1/(1-rate) per element and is
// reused by the backward pass; evaluation mode is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double rate, bool training, Rng& rng,
                  std::vector<T>* mask_out = nullptr) {
    if (rate < 0.0 || rate >= 1.0) throw DimensionError("dropout rate must be in [0,1)");
    Tensor<T> out(input.channels, input.time);
    if (!training || rate == 0.0) {
        out.data = input.data;
        if (mask_out) mask_out->assign(input.size(), T(1));
        return out;
    }
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    if (mask_out) mask_out->resize(input.size());
    for (size_t i = 0; i < input.size(); ++i) {
        const T m = rng.uniform() < rate ? T(0) : scale;
        if (mask_out) (*mask_out)[i] = m;
        out.data[i] = input.data[i] * m;
    }
    return out;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const std::vector<T>& mask) {
    if (grad_out.size() != mask.size()) throw DimensionError("dropout_backward: mask mismatch");
    Tensor<T> g(grad_out.channels, grad_out.time);
    for (size_t i = 0; i < mask.size(); ++i) g.data[i] = grad_out.data[i] * mask[i];
    return g;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (const T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace tempseg
