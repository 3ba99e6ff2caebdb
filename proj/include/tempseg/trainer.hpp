#pragma once

#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "tempseg/data.hpp"
#include "tempseg/loss.hpp"
#include "tempseg/metrics.hpp"
#include "tempseg/model.hpp"

namespace tempseg {

// One bias-corrected Adam update on a flat parameter array.
// `step` is the 1-based step counter after incrementing.
template <typename T>
void adam_update(std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m,
                 std::vector<T>& v, long long step, double lr, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8) {
    if (w.size() != g.size() || w.size() != m.size() || w.size() != v.size())
        throw DimensionError("adam_update: shape mismatch");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
        const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
}

// Bias-corrected Adam over a model. State arrays are laid out in the model's
// canonical parameter visiting order (one m/v pair per weight and bias array).
template <typename T>
struct AdamOptimizer {
    double lr = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long long step_count = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    void step(Model<T>& model) {
        ++step_count;
        size_t slot = 0;
        model.for_each_param([&](const std::string&, Conv<T>& c) {
            update_array(c.params.weights, c.grad_weights, slot++);
            update_array(c.params.bias, c.grad_bias, slot++);
        });
        model.sync_shared_parameters();
    }

private:
    void update_array(std::vector<T>& w, const std::vector<T>& g, size_t slot) {
        if (m.size() <= slot) {
            m.resize(slot + 1);
            v.resize(slot + 1);
        }
        if (m[slot].size() != w.size()) {
            if (!m[slot].empty()) throw DimensionError("adam: parameter shape changed");
            m[slot].assign(w.size(), T(0));
            v[slot].assign(w.size(), T(0));
        }
        adam_update(w, g, m[slot], v[slot], step_count, lr, beta1, beta2, eps);
    }
};

struct TrainConfig {
    int epochs = 50;
    double learning_rate = 0.0005;
    LossConfig loss;
    std::uint64_t seed = 1;
    bool shuffle = true;
};

struct TrainHistory {
    std::vector<double> epoch_loss;  // mean total loss per epoch
};

// One optimization step per video at full temporal resolution.
template <typename T>
TrainHistory fit(Model<T>& model, const DatasetBundle& bundle, const std::string& split,
                 const TrainConfig& cfg, AdamOptimizer<T>* opt_in = nullptr) {
    const auto videos = bundle.split_videos(split);
    if (videos.empty()) throw DimensionError("fit: empty split '" + split + "'");

    AdamOptimizer<T> local;
    AdamOptimizer<T>& opt = opt_in ? *opt_in : local;
    opt.lr = cfg.learning_rate;

    Rng rng(cfg.seed);
    TrainHistory history;
    std::vector<size_t> order(videos.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle)
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_index(i)]);
        double loss_sum = 0.0;
        for (const size_t idx : order) {
            const VideoSample& video = *videos[idx];
            model.zero_grad();
            Tensor<T> feats = video.features.template cast<T>();
            StageOutputs<T> out = model.forward(feats, true, rng);
            const LossValue lv = total_loss(out, video.labels, cfg.loss);
            if (!std::isfinite(lv.total))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch + 1) + ", video " + video.id);
            loss_sum += lv.total;
            model.backward(total_loss_grad(out, video.labels, cfg.loss));
            opt.step(model);
        }
        history.epoch_loss.push_back(loss_sum / videos.size());
    }
    return history;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const DatasetBundle& bundle, const std::string& split,
                    const std::set<int>& background = {}) {
    const auto videos = bundle.split_videos(split);
    if (videos.empty()) throw DimensionError("evaluate: empty split '" + split + "'");
    std::vector<std::pair<std::vector<int>, std::vector<int>>> pairs;
    for (const auto* v : videos)
        pairs.emplace_back(predict_labels(model, v->features.template cast<T>()), v->labels);
    return evaluate_set(pairs, background);
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "MSCK", u32 version=1, length-prefixed config document,
// u32 blob count, per blob (length-prefixed name, u32 rank, u64 dims...,
// float32 payload), u8 optimizer-presence flag and optional optimizer section.

namespace detail {

constexpr char kCheckpointMagic[4] = {'M', 'S', 'C', 'K'};

template <typename T>
void write_pod(std::ostream& os, const T& x) {
    os.write(reinterpret_cast<const char*>(&x), sizeof x);
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T x;
    is.read(reinterpret_cast<char*>(&x), sizeof x);
    if (!is) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    return x;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
    const auto n = read_pod<std::uint32_t>(is, what);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw FormatError(std::string("checkpoint truncated while reading ") + what);
    return s;
}

inline void write_blob(std::ostream& os, const std::string& name,
                       const std::vector<std::uint64_t>& dims,
                       const std::vector<float>& payload) {
    write_string(os, name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
    std::uint64_t n = 1;
    for (const auto d : dims) {
        write_pod<std::uint64_t>(os, d);
        n *= d;
    }
    if (n != payload.size()) throw DimensionError("blob dims/payload mismatch: " + name);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
}

struct Blob {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<float> payload;
};

inline Blob read_blob(std::istream& is) {
    Blob b;
    b.name = read_string(is, "blob name");
    const auto rank = read_pod<std::uint32_t>(is, "blob rank");
    std::uint64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        b.dims.push_back(read_pod<std::uint64_t>(is, "blob dim"));
        n *= b.dims.back();
    }
    b.payload.resize(n);
    is.read(reinterpret_cast<char*>(b.payload.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!is) throw FormatError("checkpoint truncated in blob payload: " + b.name);
    return b;
}

}  // namespace detail

inline std::string serialize_config(const ModelConfig& c, std::uint64_t seed, int epoch) {
    std::ostringstream os;
    os << "variant " << variant_name(c.variant) << "\n"
       << "input_dim " << c.input_dim << "\n"
       << "num_classes " << c.num_classes << "\n"
       << "filters " << c.filters << "\n"
       << "num_stages " << c.num_stages << "\n"
       << "num_refinements " << c.num_refinements << "\n"
       << "layers_per_stage " << c.layers_per_stage << "\n"
       << "layers_generation " << c.layers_generation << "\n"
       << "layers_refinement " << c.layers_refinement << "\n"
       << "dropout " << c.dropout << "\n"
       << "seed " << seed << "\n"
       << "epoch " << epoch << "\n";
    return os.str();
}

inline ModelConfig parse_config(const std::string& doc, std::uint64_t* seed = nullptr,
                                int* epoch = nullptr) {
    ModelConfig c;
    std::istringstream is(doc);
    std::string key, value;
    while (is >> key >> value) {
        if (key == "variant") c.variant = parse_variant(value);
        else if (key == "input_dim") c.input_dim = std::stoi(value);
        else if (key == "num_classes") c.num_classes = std::stoi(value);
        else if (key == "filters") c.filters = std::stoi(value);
        else if (key == "num_stages") c.num_stages = std::stoi(value);
        else if (key == "num_refinements") c.num_refinements = std::stoi(value);
        else if (key == "layers_per_stage") c.layers_per_stage = std::stoi(value);
        else if (key == "layers_generation") c.layers_generation = std::stoi(value);
        else if (key == "layers_refinement") c.layers_refinement = std::stoi(value);
        else if (key == "dropout") c.dropout = std::stod(value);
        else if (key == "seed" && seed) *seed = std::stoull(value);
        else if (key == "epoch" && epoch) *epoch = std::stoi(value);
    }
    return c;
}

inline void save_checkpoint(const std::string& path, Model<float>& model,
                            const AdamOptimizer<float>* opt = nullptr,
                            std::uint64_t seed = 0, int epoch = 0) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open checkpoint for writing: " + path);
    os.write(detail::kCheckpointMagic, 4);
    detail::write_pod<std::uint32_t>(os, 1);
    detail::write_string(os, serialize_config(model.config, seed, epoch));

    std::uint32_t count = 0;
    model.for_each_param([&](const std::string&, Conv<float>&) { count += 2; });
    detail::write_pod<std::uint32_t>(os, count);
    model.for_each_param([&](const std::string& name, Conv<float>& c) {
        detail::write_blob(os, name + ".weight",
                           {static_cast<std::uint64_t>(c.params.kernel),
                            static_cast<std::uint64_t>(c.params.in_channels),
                            static_cast<std::uint64_t>(c.params.out_channels)},
                           c.params.weights);
        detail::write_blob(os, name + ".bias",
                           {static_cast<std::uint64_t>(c.params.out_channels)},
                           c.params.bias);
    });

    detail::write_pod<std::uint8_t>(os, opt ? 1 : 0);
    if (opt) {
        detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(opt->step_count));
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(opt->m.size()));
        for (size_t i = 0; i < opt->m.size(); ++i) {
            detail::write_blob(os, "m" + std::to_string(i),
                               {static_cast<std::uint64_t>(opt->m[i].size())}, opt->m[i]);
            detail::write_blob(os, "v" + std::to_string(i),
                               {static_cast<std::uint64_t>(opt->v[i].size())}, opt->v[i]);
        }
    }
    if (!os) throw FormatError("checkpoint write failed: " + path);
}

inline Model<float> load_checkpoint(const std::string& path,
                                    AdamOptimizer<float>* opt = nullptr,
                                    std::uint64_t* seed = nullptr, int* epoch = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
        throw FormatError("bad checkpoint magic: " + path);
    const auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != 1)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const ModelConfig cfg = parse_config(detail::read_string(is, "config"), seed, epoch);

    Rng rng(0);
    Model<float> model = Model<float>::build(cfg, rng);

    const auto count = detail::read_pod<std::uint32_t>(is, "blob count");
    std::map<std::string, detail::Blob> blobs;
    for (std::uint32_t i = 0; i < count; ++i) {
        detail::Blob b = detail::read_blob(is);
        blobs[b.name] = std::move(b);
    }
    model.for_each_param([&](const std::string& name, Conv<float>& c) {
        const auto wit = blobs.find(name + ".weight");
        const auto bit = blobs.find(name + ".bias");
        if (wit == blobs.end() || bit == blobs.end())
            throw FormatError("checkpoint missing parameter: " + name);
        if (wit->second.payload.size() != c.params.weights.size() ||
            bit->second.payload.size() != c.params.bias.size())
            throw FormatError("checkpoint shape mismatch for " + name);
        c.params.weights = wit->second.payload;
        c.params.bias = bit->second.payload;
    });
    model.sync_shared_parameters();

    const auto has_opt = detail::read_pod<std::uint8_t>(is, "optimizer flag");
    if (has_opt) {
        // Parse the optimizer section even when the caller discards it, so a
        // truncated file is always reported.
        const auto step =
            static_cast<long long>(detail::read_pod<std::uint64_t>(is, "opt step"));
        const auto slots = detail::read_pod<std::uint32_t>(is, "opt slots");
        std::vector<std::vector<float>> m(slots), v(slots);
        for (std::uint32_t i = 0; i < slots; ++i) {
            m[i] = detail::read_blob(is).payload;
            v[i] = detail::read_blob(is).payload;
        }
        if (opt) {
            opt->step_count = step;
            opt->m = std::move(m);
            opt->v = std::move(v);
        }
    }
    return model;
}

}  // namespace tempseg
