#pragma once

#include <vector>

#include "tempseg/model.hpp"
#include "tempseg/tensor.hpp"

namespace tempseg {

enum class Smoothing { TMSE, KL, NONE };

inline std::string smoothing_name(Smoothing s) {
    switch (s) {
        case Smoothing::TMSE: return "tmse";
        case Smoothing::KL: return "kl";
        case Smoothing::NONE: return "none";
    }
    return "?";
}

inline Smoothing parse_smoothing(const std::string& s) {
    if (s == "tmse") return Smoothing::TMSE;
    if (s == "kl") return Smoothing::KL;
    if (s == "none") return Smoothing::NONE;
    throw FormatError("unknown smoothing: " + s);
}

struct LossConfig {
    double lambda = 0.15;
    double tau = 4.0;
    Smoothing smoothing = Smoothing::TMSE;
};

struct StageLoss {
    double cls = 0.0;
    double smooth = 0.0;
};

struct LossValue {
    double total = 0.0;
    std::vector<StageLoss> per_stage;
};

template <typename T>
inline T clamped(T p) {
    return std::max(p, static_cast<T>(kProbFloor));
}

// (1/T) * sum_t -log y_{t, label_t}
template <typename T>
double cross_entropy(const Tensor<T>& probs, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != probs.time)
        throw DimensionError("cross_entropy: label length mismatch");
    double sum = 0.0;
    for (int t = 0; t < probs.time; ++t) {
        const int c = labels[t];
        if (c < 0 || c >= probs.channels)
            throw DimensionError("cross_entropy: label out of range");
        sum -= std::log(static_cast<double>(clamped(probs.at(c, t))));
    }
    return sum / probs.time;
}

// Truncated MSE over consecutive frame-wise log-probabilities;
// (1/(T*C)) * sum_{t>=2,c} min(|log y_t - log y_{t-1}|, tau)^2.
template <typename T>
double t_mse(const Tensor<T>& probs, double tau, bool* short_warning = nullptr) {
    if (short_warning) *short_warning = false;
    if (probs.time < 2) {
        if (short_warning) *short_warning = true;
        return 0.0;
    }
    double sum = 0.0;
    for (int t = 1; t < probs.time; ++t)
        for (int c = 0; c < probs.channels; ++c) {
            const double d = std::abs(std::log(static_cast<double>(clamped(probs.at(c, t)))) -
                                      std::log(static_cast<double>(clamped(probs.at(c, t - 1)))));
            const double dt = std::min(d, tau);
            sum += dt * dt;
        }
    return sum / (static_cast<double>(probs.time) * probs.channels);
}

// (1/T) * sum_{t>=2,c} y_{t-1,c} (log y_{t-1,c} - log y_{t,c})
template <typename T>
double kl_smoothing(const Tensor<T>& probs, bool* short_warning = nullptr) {
    if (short_warning) *short_warning = false;
    if (probs.time < 2) {
        if (short_warning) *short_warning = true;
        return 0.0;
    }
    double sum = 0.0;
    for (int t = 1; t < probs.time; ++t)
        for (int c = 0; c < probs.channels; ++c) {
            const double prev = clamped(probs.at(c, t - 1));
            const double cur = clamped(probs.at(c, t));
            sum += prev * (std::log(prev) - std::log(cur));
        }
    return sum / probs.time;
}

template <typename T>
double smoothing_loss(const Tensor<T>& probs, const LossConfig& cfg) {
    switch (cfg.smoothing) {
        case Smoothing::TMSE: return t_mse(probs, cfg.tau);
        case Smoothing::KL: return kl_smoothing(probs);
        case Smoothing::NONE: return 0.0;
    }
    return 0.0;
}

// L = sum_s (L_cls + lambda * L_smooth)
template <typename T>
LossValue total_loss(const StageOutputs<T>& outputs, const std::vector<int>& labels,
                     const LossConfig& cfg) {
    LossValue v;
    for (const auto& probs : outputs.probs) {
        StageLoss s;
        s.cls = cross_entropy(probs, labels);
        s.smooth = smoothing_loss(probs, cfg);
        v.per_stage.push_back(s);
        v.total += s.cls + cfg.lambda * s.smooth;
    }
    return v;
}

// --- gradients w.r.t. the probability tensor -------------------------------
// The smoothing terms follow the stop-gradient rule: gradients flow only
// through the later frame of each consecutive pair, and the clamp zeroes the
// gradient wherever the probability sits below the floor.

template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, const std::vector<int>& labels) {
    Tensor<T> g(probs.channels, probs.time);
    for (int t = 0; t < probs.time; ++t) {
        const int c = labels[t];
        const T p = probs.at(c, t);
        if (p > static_cast<T>(kProbFloor))
            g.at(c, t) = static_cast<T>(-1.0 / (static_cast<double>(p) * probs.time));
    }
    return g;
}

template <typename T>
Tensor<T> t_mse_grad(const Tensor<T>& probs, double tau) {
    Tensor<T> g(probs.channels, probs.time);
    if (probs.time < 2) return g;
    const double norm = static_cast<double>(probs.time) * probs.channels;
    for (int t = 1; t < probs.time; ++t)
        for (int c = 0; c < probs.channels; ++c) {
            const T p = probs.at(c, t);
            if (p <= static_cast<T>(kProbFloor)) continue;
            const double d = std::log(static_cast<double>(p)) -
                             std::log(static_cast<double>(clamped(probs.at(c, t - 1))));
            if (std::abs(d) > tau) continue;  // truncated region
            g.at(c, t) += static_cast<T>(2.0 * d / (norm * static_cast<double>(p)));
        }
    return g;
}

template <typename T>
Tensor<T> kl_smoothing_grad(const Tensor<T>& probs) {
    Tensor<T> g(probs.channels, probs.time);
    if (probs.time < 2) return g;
    for (int t = 1; t < probs.time; ++t)
        for (int c = 0; c < probs.channels; ++c) {
            const T p = probs.at(c, t);
            if (p <= static_cast<T>(kProbFloor)) continue;
            const double prev = clamped(probs.at(c, t - 1));
            g.at(c, t) += static_cast<T>(-prev / (static_cast<double>(p) * probs.time));
        }
    return g;
}

// dL/dY^s for every stage, for use with Model::backward.
template <typename T>
std::vector<Tensor<T>> total_loss_grad(const StageOutputs<T>& outputs,
                                       const std::vector<int>& labels,
                                       const LossConfig& cfg) {
    std::vector<Tensor<T>> grads;
    for (const auto& probs : outputs.probs) {
        Tensor<T> g = cross_entropy_grad(probs, labels);
        if (cfg.smoothing != Smoothing::NONE && cfg.lambda != 0.0) {
            Tensor<T> gs = cfg.smoothing == Smoothing::TMSE ? t_mse_grad(probs, cfg.tau)
                                                            : kl_smoothing_grad(probs);
            for (size_t i = 0; i < g.size(); ++i)
                g.data[i] += static_cast<T>(cfg.lambda) * gs.data[i];
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

}  // namespace tempseg
