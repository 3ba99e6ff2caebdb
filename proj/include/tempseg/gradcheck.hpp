#pragma once

#include <functional>
#include <map>
#include <string>

#include "tempseg/loss.hpp"
#include "tempseg/model.hpp"

namespace tempseg {

// Finite-difference verification harness. Everything here runs in double
// precision with dropout disabled; the checks are independent of the
// backward-pass code paths they validate only through the forward functions.

namespace gradcheck_detail {

inline double rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

inline Tensor<double> random_tensor(int c, int t, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
    Tensor<double> x(c, t);
    for (auto& v : x.data) v = rng.uniform(lo, hi);
    return x;
}

// central difference of a scalar function of one array element
template <typename F>
double central_diff(std::vector<double>& storage, size_t idx, double eps, F&& f) {
    const double saved = storage[idx];
    storage[idx] = saved + eps;
    const double up = f();
    storage[idx] = saved - eps;
    const double dn = f();
    storage[idx] = saved;
    return (up - dn) / (2.0 * eps);
}

// T-MSE with the previous-frame term frozen to a reference tensor; the
// gradient of this function w.r.t. `probs` at probs == ref is exactly the
// stop-gradient-convention gradient the training loss uses.
inline double t_mse_frozen(const Tensor<double>& probs, const Tensor<double>& ref,
                           double tau) {
    double sum = 0.0;
    for (int t = 1; t < probs.time; ++t)
        for (int c = 0; c < probs.channels; ++c) {
            const double d = std::abs(std::log(clamped(probs.at(c, t))) -
                                      std::log(clamped(ref.at(c, t - 1))));
            const double dt = std::min(d, tau);
            sum += dt * dt;
        }
    return sum / (static_cast<double>(probs.time) * probs.channels);
}

inline double kl_frozen(const Tensor<double>& probs, const Tensor<double>& ref) {
    double sum = 0.0;
    for (int t = 1; t < probs.time; ++t)
        for (int c = 0; c < probs.channels; ++c) {
            const double prev = clamped(ref.at(c, t - 1));
            sum += prev * (std::log(prev) - std::log(clamped(probs.at(c, t))));
        }
    return sum / probs.time;
}

}  // namespace gradcheck_detail

inline double check_conv1d(std::uint64_t seed, double eps) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    const int in_c = 4, out_c = 5, t = 16;
    Tensor<double> x = random_tensor(in_c, t, rng);
    ConvParams<double> p(3, in_c, out_c, 1 + static_cast<int>(rng.uniform_index(4)));
    for (auto& w : p.weights) w = rng.uniform(-1.0, 1.0);
    for (auto& b : p.bias) b = rng.uniform(-1.0, 1.0);
    Tensor<double> gout = random_tensor(out_c, t, rng);

    const auto loss = [&] {
        const Tensor<double> out = conv1d_forward(x, p);
        double s = 0.0;
        for (size_t i = 0; i < out.size(); ++i) s += out.data[i] * gout.data[i];
        return s;
    };
    const ConvGrads<double> g = conv1d_backward(x, p, gout);

    double worst = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i)
        worst = std::max(worst, rel_error(g.input.data[i],
                                          central_diff(x.data, i, eps, loss)));
    for (size_t i = 0; i < p.weights.size(); ++i)
        worst = std::max(worst, rel_error(g.weights[i],
                                          central_diff(p.weights, i, eps, loss)));
    for (size_t i = 0; i < p.bias.size(); ++i)
        worst = std::max(worst, rel_error(g.bias[i], central_diff(p.bias, i, eps, loss)));
    return worst;
}

inline double check_relu(std::uint64_t seed, double eps) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    Tensor<double> x(3, 10);
    for (auto& v : x.data) {
        // bounded away from the kink at 0
        const double mag = rng.uniform(0.2, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    Tensor<double> gout = random_tensor(3, 10, rng);
    const auto loss = [&] {
        const Tensor<double> out = relu(x);
        double s = 0.0;
        for (size_t i = 0; i < out.size(); ++i) s += out.data[i] * gout.data[i];
        return s;
    };
    const Tensor<double> g = relu_backward(x, gout);
    double worst = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i)
        worst = std::max(worst, rel_error(g.data[i], central_diff(x.data, i, eps, loss)));
    return worst;
}

inline double check_softmax_xent(std::uint64_t seed, double eps) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    const int c = 5, t = 12;
    Tensor<double> logits = random_tensor(c, t, rng, -2.0, 2.0);
    std::vector<int> labels(t);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(c));

    const auto loss = [&] { return cross_entropy(channel_softmax(logits), labels); };
    const Tensor<double> probs = channel_softmax(logits);
    const Tensor<double> g = channel_softmax_backward(probs, cross_entropy_grad(probs, labels));

    double worst = 0.0;
    for (size_t i = 0; i < logits.data.size(); ++i)
        worst = std::max(worst,
                         rel_error(g.data[i], central_diff(logits.data, i, eps, loss)));
    return worst;
}

// Smoothing losses through the softmax, against frozen-previous-frame oracles.
inline double check_smoothing(std::uint64_t seed, double eps, Smoothing kind) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    const int c = 4, t = 10;
    const double tau = 4.0;
    Tensor<double> logits = random_tensor(c, t, rng, -2.0, 2.0);
    const Tensor<double> ref = channel_softmax(logits);

    const auto loss = [&] {
        const Tensor<double> probs = channel_softmax(logits);
        return kind == Smoothing::TMSE ? t_mse_frozen(probs, ref, tau)
                                       : kl_frozen(probs, ref);
    };
    const Tensor<double> gp = kind == Smoothing::TMSE ? t_mse_grad(ref, tau)
                                                      : kl_smoothing_grad(ref);
    const Tensor<double> g = channel_softmax_backward(ref, gp);

    double worst = 0.0;
    for (size_t i = 0; i < logits.data.size(); ++i)
        worst = std::max(worst,
                         rel_error(g.data[i], central_diff(logits.data, i, eps, loss)));
    return worst;
}

template <typename Layer>
inline double check_layer(std::uint64_t seed, double eps) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    const int d = 3, t = 8;
    Layer layer = [&] {
        if constexpr (std::is_same_v<Layer, DualDilatedLayer<double>>)
            return Layer(d, 2, 4, 0.0);
        else
            return Layer(d, 2, 0.0);
    }();
    Tensor<double> x = random_tensor(d, t, rng);
    Tensor<double> gout = random_tensor(d, t, rng);

    std::vector<std::vector<double>*> params;
    std::vector<std::vector<double>*> grads;
    const auto collect = [&](Conv<double>& c) {
        params.push_back(&c.params.weights);
        grads.push_back(&c.grad_weights);
        params.push_back(&c.params.bias);
        grads.push_back(&c.grad_bias);
        for (auto& w : c.params.weights) w = rng.uniform(-0.5, 0.5);
        for (auto& b : c.params.bias) b = rng.uniform(-0.5, 0.5);
    };
    if constexpr (std::is_same_v<Layer, DualDilatedLayer<double>>) {
        collect(layer.branch1);
        collect(layer.branch2);
        collect(layer.fuse);
    } else {
        collect(layer.dilated);
        collect(layer.pointwise);
    }

    Rng dummy(0);
    const auto loss = [&] {
        Layer probe = layer;  // fresh caches per evaluation
        const Tensor<double> out = probe.forward(x, false, dummy);
        double s = 0.0;
        for (size_t i = 0; i < out.size(); ++i) s += out.data[i] * gout.data[i];
        return s;
    };

    layer.zero_grad();
    layer.forward(x, false, dummy);
    const Tensor<double> gx = layer.backward(gout);

    double worst = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i)
        worst = std::max(worst, rel_error(gx.data[i], central_diff(x.data, i, eps, loss)));
    for (size_t k = 0; k < params.size(); ++k)
        for (size_t i = 0; i < params[k]->size(); ++i)
            worst = std::max(worst, rel_error((*grads[k])[i],
                                              central_diff(*params[k], i, eps, loss)));
    return worst;
}

// End-to-end total-loss gradient on a small multi-stage model, on a sampled
// subset of parameters. The finite-difference oracle freezes the smoothing
// loss's previous-frame term per stage, matching the stop-gradient rule.
inline double check_model(std::uint64_t seed, double eps, int samples_per_array = 2) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    ModelConfig cfg;
    cfg.variant = Variant::MSTCN;
    cfg.input_dim = 8;
    cfg.num_classes = 4;
    cfg.filters = 8;
    cfg.num_stages = 4;
    cfg.layers_per_stage = 3;
    cfg.dropout = 0.0;
    Model<double> model = Model<double>::build(cfg, rng);

    const int t = 64;
    Tensor<double> feats = random_tensor(cfg.input_dim, t, rng);
    std::vector<int> labels(t);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(cfg.num_classes));
    LossConfig lcfg;  // tmse, lambda 0.15, tau 4

    Rng dummy(0);
    StageOutputs<double> base = model.forward(feats, false, dummy);
    std::vector<Tensor<double>> frozen = base.probs;

    const auto loss = [&] {
        StageOutputs<double> out = model.forward(feats, false, dummy);
        double total = 0.0;
        for (size_t s = 0; s < out.probs.size(); ++s)
            total += cross_entropy(out.probs[s], labels) +
                     lcfg.lambda * t_mse_frozen(out.probs[s], frozen[s], lcfg.tau);
        return total;
    };

    model.zero_grad();
    model.forward(feats, false, dummy);
    model.backward(total_loss_grad(base, labels, lcfg));

    double worst = 0.0;
    model.for_each_param([&](const std::string&, Conv<double>& c) {
        for (int k = 0; k < samples_per_array; ++k) {
            const size_t i = rng.uniform_index(c.params.weights.size());
            worst = std::max(worst, rel_error(c.grad_weights[i],
                                              central_diff(c.params.weights, i, eps, loss)));
        }
        const size_t bi = rng.uniform_index(c.params.bias.size());
        worst = std::max(worst,
                         rel_error(c.grad_bias[bi], central_diff(c.params.bias, bi, eps, loss)));
    });
    return worst;
}

// Registered forward/backward pairs for the gradient-check suite.
inline const std::map<std::string, std::function<double(std::uint64_t, double)>>&
gradcheck_registry() {
    static const std::map<std::string, std::function<double(std::uint64_t, double)>> reg = {
        {"conv1d", check_conv1d},
        {"relu", check_relu},
        {"softmax_xent", check_softmax_xent},
        {"tmse",
         [](std::uint64_t s, double e) { return check_smoothing(s, e, Smoothing::TMSE); }},
        {"kl",
         [](std::uint64_t s, double e) { return check_smoothing(s, e, Smoothing::KL); }},
        {"dilated_residual",
         [](std::uint64_t s, double e) {
             return check_layer<DilatedResidualLayer<double>>(s, e);
         }},
        {"dual_dilated",
         [](std::uint64_t s, double e) {
             return check_layer<DualDilatedLayer<double>>(s, e);
         }},
        {"model",
         [](std::uint64_t s, double e) { return check_model(s, e); }},
    };
    return reg;
}

inline double finite_difference_check(const std::string& primitive, std::uint64_t seed,
                                      double eps = 1e-5) {
    const auto& reg = gradcheck_registry();
    const auto it = reg.find(primitive);
    if (it == reg.end()) throw FormatError("unknown gradcheck primitive: " + primitive);
    return it->second(seed, eps);
}

}  // namespace tempseg
