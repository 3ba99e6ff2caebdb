#pragma once

#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tempseg/layers.hpp"

namespace tempseg {

enum class Variant { SSTCN, MSTCN, MSTCNPP, MSTCNPP_SHARED };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::SSTCN: return "sstcn";
        case Variant::MSTCN: return "mstcn";
        case Variant::MSTCNPP: return "mstcn++";
        case Variant::MSTCNPP_SHARED: return "mstcn++sh";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "sstcn") return Variant::SSTCN;
    if (s == "mstcn") return Variant::MSTCN;
    if (s == "mstcn++" || s == "mstcnpp") return Variant::MSTCNPP;
    if (s == "mstcn++sh" || s == "mstcnpp_shared") return Variant::MSTCNPP_SHARED;
    throw FormatError("unknown architecture: " + s);
}

struct ModelConfig {
    Variant variant = Variant::MSTCN;
    int input_dim = 0;
    int num_classes = 0;
    int filters = 64;
    int num_stages = 4;        // MSTCN
    int num_refinements = 3;   // MSTCN++ variants
    int layers_per_stage = 10;
    int layers_generation = 11;
    int layers_refinement = 10;
    double dropout = 0.5;

    int total_stages() const {
        switch (variant) {
            case Variant::SSTCN: return 1;
            case Variant::MSTCN: return num_stages;
            default: return 1 + num_refinements;
        }
    }

    void validate() const {
        if (input_dim < 1) throw DimensionError("input_dim must be >= 1");
        if (num_classes < 2) throw DimensionError("num_classes must be >= 2");
        if (filters < 1) throw DimensionError("filters must be >= 1");
        if (num_stages < 1 || num_refinements < 1 || layers_per_stage < 1 ||
            layers_generation < 1 || layers_refinement < 1)
            throw DimensionError("stage/layer counts must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw DimensionError("dropout must be in [0,1)");
    }
};

// Dilation of residual layer at 0-based index i; the exponent cycles after
// 512 so deep single-stage configs (48 layers) remain expressible.
inline int residual_dilation(int i) { return 1 << (i % 10); }

// Per-stage probability tensors Y^1..Y^S plus the final stage's logits.
template <typename T>
struct StageOutputs {
    std::vector<Tensor<T>> probs;
    Tensor<T> final_logits;
};

template <typename T>
struct Stage {
    Conv<T> input_conv;  // 1x1, stage input dim -> filters
    bool dual = false;
    std::vector<DilatedResidualLayer<T>> res_layers;
    std::vector<DualDilatedLayer<T>> dual_layers;
    ClassificationHead<T> head;

    static Stage residual_stage(int in_dim, int filters, int classes, int layers,
                                double dropout) {
        Stage s;
        s.input_conv = Conv<T>(1, in_dim, filters, 1);
        for (int i = 0; i < layers; ++i)
            s.res_layers.emplace_back(filters, residual_dilation(i), dropout);
        s.head = ClassificationHead<T>(filters, classes);
        return s;
    }

    static Stage dual_stage(int in_dim, int filters, int classes, int layers,
                            double dropout) {
        Stage s;
        s.dual = true;
        s.input_conv = Conv<T>(1, in_dim, filters, 1);
        for (int i = 0; i < layers; ++i)
            s.dual_layers.emplace_back(filters, 1 << i, 1 << (layers - 1 - i), dropout);
        s.head = ClassificationHead<T>(filters, classes);
        return s;
    }

    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x, bool training, Rng& rng) {
        Tensor<T> h = input_conv.forward(x);
        if (dual)
            for (auto& l : dual_layers) h = l.forward(h, training, rng);
        else
            for (auto& l : res_layers) h = l.forward(h, training, rng);
        auto [logits, probs] = head.forward(h);
        cached_probs_ = probs;
        return {std::move(logits), std::move(probs)};
    }

    // grad w.r.t. this stage's probability output -> grad w.r.t. stage input.
    Tensor<T> backward(const Tensor<T>& grad_probs) {
        Tensor<T> g = channel_softmax_backward(cached_probs_, grad_probs);
        g = head.backward(g);
        if (dual)
            for (auto it = dual_layers.rbegin(); it != dual_layers.rend(); ++it)
                g = it->backward(g);
        else
            for (auto it = res_layers.rbegin(); it != res_layers.rend(); ++it)
                g = it->backward(g);
        return input_conv.backward(g);
    }

    void zero_grad() {
        input_conv.zero_grad();
        for (auto& l : res_layers) l.zero_grad();
        for (auto& l : dual_layers) l.zero_grad();
        head.zero_grad();
    }

    void init(Rng& rng) {
        init_conv(input_conv.params, rng);
        for (auto& l : res_layers) {
            init_conv(l.dilated.params, rng);
            init_conv(l.pointwise.params, rng);
        }
        for (auto& l : dual_layers) {
            init_conv(l.branch1.params, rng);
            init_conv(l.branch2.params, rng);
            init_conv(l.fuse.params, rng);
        }
        init_conv(head.proj.params, rng);
    }

    template <typename Fn>
    void for_each_conv(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".input_conv", input_conv);
        for (size_t i = 0; i < res_layers.size(); ++i) {
            const std::string lp = prefix + ".layer" + std::to_string(i + 1);
            fn(lp + ".dilated", res_layers[i].dilated);
            fn(lp + ".pointwise", res_layers[i].pointwise);
        }
        for (size_t i = 0; i < dual_layers.size(); ++i) {
            const std::string lp = prefix + ".layer" + std::to_string(i + 1);
            fn(lp + ".branch1", dual_layers[i].branch1);
            fn(lp + ".branch2", dual_layers[i].branch2);
            fn(lp + ".fuse", dual_layers[i].fuse);
        }
        fn(prefix + ".head", head.proj);
    }

    void copy_params_from(const Stage& o) {
        const auto cp = [](Conv<T>& dst, const Conv<T>& src) {
            dst.params.weights = src.params.weights;
            dst.params.bias = src.params.bias;
        };
        cp(input_conv, o.input_conv);
        for (size_t i = 0; i < res_layers.size(); ++i) {
            cp(res_layers[i].dilated, o.res_layers[i].dilated);
            cp(res_layers[i].pointwise, o.res_layers[i].pointwise);
        }
        for (size_t i = 0; i < dual_layers.size(); ++i) {
            cp(dual_layers[i].branch1, o.dual_layers[i].branch1);
            cp(dual_layers[i].branch2, o.dual_layers[i].branch2);
            cp(dual_layers[i].fuse, o.dual_layers[i].fuse);
        }
        cp(head.proj, o.head.proj);
    }

    void add_grads_from(const Stage& o) {
        const auto add = [](Conv<T>& dst, const Conv<T>& src) {
            for (size_t i = 0; i < dst.grad_weights.size(); ++i)
                dst.grad_weights[i] += src.grad_weights[i];
            for (size_t i = 0; i < dst.grad_bias.size(); ++i)
                dst.grad_bias[i] += src.grad_bias[i];
        };
        add(input_conv, o.input_conv);
        for (size_t i = 0; i < res_layers.size(); ++i) {
            add(res_layers[i].dilated, o.res_layers[i].dilated);
            add(res_layers[i].pointwise, o.res_layers[i].pointwise);
        }
        for (size_t i = 0; i < dual_layers.size(); ++i) {
            add(dual_layers[i].branch1, o.dual_layers[i].branch1);
            add(dual_layers[i].branch2, o.dual_layers[i].branch2);
            add(dual_layers[i].fuse, o.dual_layers[i].fuse);
        }
        add(head.proj, o.head.proj);
    }

private:
    Tensor<T> cached_probs_;
};

// Full multi-stage model. For MSTCNPP_SHARED the canonical refinement
// parameter set is stage index 1; later refinement passes hold synchronized
// working copies (gradients are reduced into the canonical set after backward
// and parameters are broadcast back after each optimizer step).
template <typename T>
struct Model {
    ModelConfig config;
    std::vector<Stage<T>> stages;

    static Model build(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        Model m;
        m.config = cfg;
        const int total = cfg.total_stages();
        for (int s = 0; s < total; ++s) {
            const int in_dim = s == 0 ? cfg.input_dim : cfg.num_classes;
            switch (cfg.variant) {
                case Variant::SSTCN:
                case Variant::MSTCN:
                    m.stages.push_back(Stage<T>::residual_stage(
                        in_dim, cfg.filters, cfg.num_classes, cfg.layers_per_stage,
                        cfg.dropout));
                    break;
                case Variant::MSTCNPP:
                case Variant::MSTCNPP_SHARED:
                    if (s == 0)
                        m.stages.push_back(Stage<T>::dual_stage(
                            in_dim, cfg.filters, cfg.num_classes, cfg.layers_generation,
                            cfg.dropout));
                    else
                        m.stages.push_back(Stage<T>::residual_stage(
                            in_dim, cfg.filters, cfg.num_classes, cfg.layers_refinement,
                            cfg.dropout));
                    break;
            }
        }
        // canonical parameter sets are drawn from the rng in stage order;
        // shared refinement passes are copies of the first refinement stage
        const int canonical = m.canonical_stage_count();
        for (int s = 0; s < canonical; ++s) m.stages[s].init(rng);
        m.sync_shared_parameters();
        return m;
    }

    bool shared() const { return config.variant == Variant::MSTCNPP_SHARED; }

    // Number of distinct parameter sets (stages counted once when shared).
    int canonical_stage_count() const {
        return shared() ? std::min<int>(2, static_cast<int>(stages.size()))
                        : static_cast<int>(stages.size());
    }

    void sync_shared_parameters() {
        if (!shared()) return;
        for (size_t s = 2; s < stages.size(); ++s) stages[s].copy_params_from(stages[1]);
    }

    void reduce_shared_gradients() {
        if (!shared()) return;
        for (size_t s = 2; s < stages.size(); ++s) stages[1].add_grads_from(stages[s]);
    }

    StageOutputs<T> forward(const Tensor<T>& features, bool training, Rng& rng) {
        if (features.channels != config.input_dim)
            throw DimensionError("forward: features have " +
                                 std::to_string(features.channels) +
                                 " channels, model expects " +
                                 std::to_string(config.input_dim));
        StageOutputs<T> out;
        const Tensor<T>* x = &features;
        for (size_t s = 0; s < stages.size(); ++s) {
            auto [logits, probs] = stages[s].forward(*x, training, rng);
            out.probs.push_back(std::move(probs));
            x = &out.probs.back();
            if (s + 1 == stages.size()) out.final_logits = std::move(logits);
        }
        return out;
    }

    // grad_probs[s] = dL/dY^s. Accumulates parameter gradients; gradients of
    // shared refinement copies are reduced into the canonical set.
    void backward(const std::vector<Tensor<T>>& grad_probs) {
        if (grad_probs.size() != stages.size())
            throw DimensionError("backward: need one gradient per stage");
        Tensor<T> from_next;  // grad flowing into the previous stage's probs
        for (int s = static_cast<int>(stages.size()) - 1; s >= 0; --s) {
            Tensor<T> g = grad_probs[s];
            if (from_next.size() > 0)
                for (size_t i = 0; i < g.size(); ++i) g.data[i] += from_next.data[i];
            from_next = stages[s].backward(g);
        }
        reduce_shared_gradients();
    }

    void zero_grad() {
        for (auto& s : stages) s.zero_grad();
    }

    // Visits every canonical parameter group in a fixed order.
    template <typename Fn>
    void for_each_param(Fn&& fn) {
        const int canonical = canonical_stage_count();
        for (int s = 0; s < canonical; ++s) {
            std::string prefix = "stage" + std::to_string(s + 1);
            if (shared() && s == 1) prefix = "refinement_shared";
            stages[s].for_each_conv(prefix, [&](const std::string& name, Conv<T>& c) {
                fn(name, c);
            });
        }
    }

    long long parameter_count() {
        long long n = 0;
        for_each_param([&](const std::string&, Conv<T>& c) {
            n += static_cast<long long>(c.params.param_count());
        });
        return n;
    }
};

template <typename T>
std::vector<int> predict_labels(Model<T>& model, const Tensor<T>& features) {
    Rng rng(0);  // unused: evaluation mode has no stochastic ops
    StageOutputs<T> out = model.forward(features, false, rng);
    const Tensor<T>& probs = out.probs.back();
    std::vector<int> labels(probs.time);
    for (int t = 0; t < probs.time; ++t) {
        int best = 0;
        for (int c = 1; c < probs.channels; ++c)
            if (probs.at(c, t) > probs.at(best, t)) best = c;  // ties -> lowest index
        labels[t] = best;
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Architecture report (computed from the config alone)

struct ArchRow {
    int stage = 0;
    int layer = 0;             // 0 for input conv / head rows
    std::string kind;
    int dilation1 = 0;
    int dilation2 = 0;         // 0 when single-dilation
    long long receptive = 0;   // 0 for non-dilated rows
    long long params = 0;
    long long cumulative = 0;
};

struct ArchReport {
    ModelConfig config;
    std::vector<ArchRow> rows;
    long long total_params = 0;
};

inline long long conv_param_count(int kernel, int in_c, int out_c) {
    return static_cast<long long>(kernel) * in_c * out_c + out_c;
}

inline ArchReport architecture_report(const ModelConfig& cfg) {
    cfg.validate();
    ArchReport rep;
    rep.config = cfg;
    long long cum = 0;
    const int canonical = cfg.variant == Variant::MSTCNPP_SHARED
                              ? std::min(2, cfg.total_stages())
                              : cfg.total_stages();
    for (int s = 0; s < canonical; ++s) {
        const int in_dim = s == 0 ? cfg.input_dim : cfg.num_classes;
        const bool dual =
            (cfg.variant == Variant::MSTCNPP || cfg.variant == Variant::MSTCNPP_SHARED) &&
            s == 0;
        int layers = cfg.layers_per_stage;
        if (cfg.variant == Variant::MSTCNPP || cfg.variant == Variant::MSTCNPP_SHARED)
            layers = s == 0 ? cfg.layers_generation : cfg.layers_refinement;

        const auto push = [&](int layer, const std::string& kind, int d1, int d2,
                              long long rf, long long n) {
            cum += n;
            rep.rows.push_back({s + 1, layer, kind, d1, d2, rf, n, cum});
        };
        push(0, "input_conv", 0, 0, 0, conv_param_count(1, in_dim, cfg.filters));
        for (int i = 0; i < layers; ++i) {
            if (dual) {
                const long long n = 2 * conv_param_count(3, cfg.filters, cfg.filters) +
                                    conv_param_count(1, 2 * cfg.filters, cfg.filters);
                push(i + 1, "dual_dilated", 1 << i, 1 << (layers - 1 - i),
                     receptive_field(i + 1), n);
            } else {
                const long long n = conv_param_count(3, cfg.filters, cfg.filters) +
                                    conv_param_count(1, cfg.filters, cfg.filters);
                push(i + 1, "dilated_residual", residual_dilation(i), 0,
                     receptive_field(i + 1), n);
            }
        }
        push(0, "head", 0, 0, 0, conv_param_count(1, cfg.filters, cfg.num_classes));
    }
    rep.total_params = cum;
    return rep;
}

inline std::string render_report_table(const ArchReport& rep) {
    std::ostringstream os;
    os << "arch=" << variant_name(rep.config.variant)
       << " input_dim=" << rep.config.input_dim
       << " classes=" << rep.config.num_classes << " filters=" << rep.config.filters
       << "\n";
    os << "stage layer type              dilation      rfield  params  cumulative\n";
    for (const auto& r : rep.rows) {
        char dil[32];
        if (r.dilation2 > 0)
            std::snprintf(dil, sizeof dil, "%d/%d", r.dilation1, r.dilation2);
        else if (r.dilation1 > 0)
            std::snprintf(dil, sizeof dil, "%d", r.dilation1);
        else
            std::snprintf(dil, sizeof dil, "-");
        char line[160];
        std::snprintf(line, sizeof line, "%5d %5d %-17s %-13s %6lld %7lld %11lld\n",
                      r.stage, r.layer, r.kind.c_str(), dil, r.receptive, r.params,
                      r.cumulative);
        os << line;
    }
    os << "total_params " << rep.total_params << "\n";
    return os.str();
}

inline std::string render_report_kv(const ArchReport& rep) {
    std::ostringstream os;
    os << "arch " << variant_name(rep.config.variant) << "\n"
       << "input_dim " << rep.config.input_dim << "\n"
       << "classes " << rep.config.num_classes << "\n"
       << "filters " << rep.config.filters << "\n"
       << "total_params " << rep.total_params << "\n";
    for (const auto& r : rep.rows) {
        const std::string key = "stage" + std::to_string(r.stage) +
                                (r.layer > 0 ? ".layer" + std::to_string(r.layer)
                                             : "." + r.kind);
        os << key << ".type " << r.kind << "\n";
        if (r.dilation1 > 0) os << key << ".dilation1 " << r.dilation1 << "\n";
        if (r.dilation2 > 0) os << key << ".dilation2 " << r.dilation2 << "\n";
        if (r.receptive > 0) os << key << ".receptive_field " << r.receptive << "\n";
        os << key << ".params " << r.params << "\n";
    }
    return os.str();
}

}  // namespace tempseg
