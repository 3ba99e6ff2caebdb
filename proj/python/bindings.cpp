#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tempseg/data.hpp"
#include "tempseg/gradcheck.hpp"
#include "tempseg/trainer.hpp"

namespace py = pybind11;
using namespace tempseg;

namespace {

Tensor<float> tensor_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2) throw DimensionError("expected a 2-D (channels, time) array");
    Tensor<float> t(arr.shape(0), arr.shape(1));
    std::memcpy(t.data.data(), arr.data(), sizeof(float) * t.data.size());
    return t;
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
    py::array_t<float> arr({t.channels, t.time});
    std::memcpy(arr.mutable_data(), t.data.data(), sizeof(float) * t.data.size());
    return arr;
}

ModelConfig make_config(const std::string& arch, int input_dim, int classes, int filters,
                        int stages, int layers, double dropout) {
    ModelConfig cfg;
    cfg.variant = parse_variant(arch);
    cfg.input_dim = input_dim;
    cfg.num_classes = classes;
    cfg.filters = filters;
    cfg.dropout = dropout;
    if (cfg.variant == Variant::MSTCNPP || cfg.variant == Variant::MSTCNPP_SHARED) {
        cfg.num_refinements = stages - 1;
        cfg.layers_refinement = layers;
    } else {
        cfg.num_stages = stages;
        cfg.layers_per_stage = layers;
    }
    return cfg;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["acc"] = r.acc;
    d["edit"] = r.edit;
    d["f1_10"] = r.f1_10;
    d["f1_25"] = r.f1_25;
    d["f1_50"] = r.f1_50;
    d["n_videos"] = r.n_videos;
    d["n_frames"] = r.n_frames;
    return d;
}

}  // namespace

PYBIND11_MODULE(_tempseg, m) {
    m.doc() = "Multi-stage temporal convolutional segmentation core";

    m.def("receptive_field", &receptive_field, py::arg("layers"));

    m.def(
        "count_parameters",
        [](const std::string& arch, int input_dim, int classes, int filters, int stages,
           int layers) {
            Rng rng(1);
            return Model<float>::build(
                       make_config(arch, input_dim, classes, filters, stages, layers, 0.5),
                       rng)
                .parameter_count();
        },
        py::arg("arch"), py::arg("input_dim"), py::arg("classes"), py::arg("filters") = 64,
        py::arg("stages") = 4, py::arg("layers") = 10);

    m.def(
        "generate",
        [](const std::string& out_dir, int videos, int classes, int dim, int min_segment,
           int max_segment, int segments, double noise, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.num_videos = videos;
            spec.num_classes = classes;
            spec.feature_dim = dim;
            spec.min_segment = min_segment;
            spec.max_segment = max_segment;
            spec.mean_segments = segments;
            spec.noise_sigma = noise;
            spec.seed = seed;
            save_dataset(out_dir, generate_synthetic(spec));
        },
        py::arg("out_dir"), py::arg("videos") = 30, py::arg("classes") = 8,
        py::arg("dim") = 32, py::arg("min_segment") = 30, py::arg("max_segment") = 120,
        py::arg("segments") = 13, py::arg("noise") = 0.6, py::arg("seed") = 1);

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& checkpoint,
           const std::string& arch, int filters, int stages, int layers, double dropout,
           int epochs, double lr, double lambda, double tau, const std::string& smoothing,
           std::uint64_t seed, const std::string& split) {
            const std::string train_split = split.empty() ? "train" : split;
            const DatasetBundle bundle = load_dataset(data_dir, train_split);
            const auto train_videos = bundle.split_videos(train_split);
            if (train_videos.empty()) throw DimensionError("train: empty training split");
            ModelConfig cfg = make_config(arch, train_videos[0]->features.channels,
                                          static_cast<int>(bundle.class_names.size()),
                                          filters, stages, layers, dropout);
            TrainConfig tcfg;
            tcfg.epochs = epochs;
            tcfg.learning_rate = lr;
            tcfg.seed = seed;
            tcfg.loss.lambda = lambda;
            tcfg.loss.tau = tau;
            tcfg.loss.smoothing = parse_smoothing(smoothing);
            Rng rng(seed);
            Model<float> model = Model<float>::build(cfg, rng);
            AdamOptimizer<float> opt(lr);
            const TrainHistory hist = fit(model, bundle, train_split, tcfg, &opt);
            save_checkpoint(checkpoint, model, &opt, seed, epochs);
            return hist.epoch_loss;
        },
        py::arg("data_dir"), py::arg("checkpoint"), py::arg("arch") = "mstcn",
        py::arg("filters") = 64, py::arg("stages") = 4, py::arg("layers") = 10,
        py::arg("dropout") = 0.5, py::arg("epochs") = 50, py::arg("lr") = 5e-4,
        py::arg("lambda_") = 0.15, py::arg("tau") = 4.0, py::arg("smoothing") = "tmse",
        py::arg("seed") = 1, py::arg("split") = "");

    m.def(
        "evaluate",
        [](const std::string& data_dir, const std::string& checkpoint,
           const std::string& split, const std::vector<int>& background) {
            const std::string eval_split = split.empty() ? "test" : split;
            const DatasetBundle bundle = load_dataset(data_dir, eval_split);
            Model<float> model = load_checkpoint(checkpoint);
            std::set<int> bg(background.begin(), background.end());
            return report_dict(evaluate(model, bundle, eval_split, bg));
        },
        py::arg("data_dir"), py::arg("checkpoint"), py::arg("split") = "test",
        py::arg("background") = std::vector<int>{});

    m.def(
        "predict",
        [](const std::string& checkpoint,
           py::array_t<float, py::array::c_style | py::array::forcecast> features) {
            Model<float> model = load_checkpoint(checkpoint);
            return predict_labels(model, tensor_from_array(features));
        },
        py::arg("checkpoint"), py::arg("features"));

    m.def(
        "forward_probs",
        [](const std::string& checkpoint,
           py::array_t<float, py::array::c_style | py::array::forcecast> features) {
            Model<float> model = load_checkpoint(checkpoint);
            Rng rng(0);
            const StageOutputs<float> out =
                model.forward(tensor_from_array(features), false, rng);
            return array_from_tensor(out.probs.back());
        },
        py::arg("checkpoint"), py::arg("features"));

    m.def("frame_accuracy", &frame_accuracy, py::arg("pred"), py::arg("gt"));

    m.def(
        "segmental_edit",
        [](const std::vector<int>& pred, const std::vector<int>& gt) {
            return segmental_edit_score(labels_to_segments(pred), labels_to_segments(gt));
        },
        py::arg("pred"), py::arg("gt"));

    m.def(
        "overlap_f1",
        [](const std::vector<int>& pred, const std::vector<int>& gt, double threshold) {
            return overlap_f1(labels_to_segments(pred), labels_to_segments(gt), threshold);
        },
        py::arg("pred"), py::arg("gt"), py::arg("threshold"));

    m.def(
        "evaluate_pairs",
        [](const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
           const std::vector<int>& background) {
            std::set<int> bg(background.begin(), background.end());
            return report_dict(evaluate_set(pairs, bg));
        },
        py::arg("pairs"), py::arg("background") = std::vector<int>{});

    m.def("gradcheck", &finite_difference_check, py::arg("primitive"), py::arg("seed") = 1,
          py::arg("epsilon") = 1e-5);

    m.def(
        "inspect",
        [](const std::string& arch, int input_dim, int classes, int filters, int stages,
           int layers) {
            return render_report_kv(architecture_report(
                make_config(arch, input_dim, classes, filters, stages, layers, 0.5)));
        },
        py::arg("arch"), py::arg("input_dim"), py::arg("classes"), py::arg("filters") = 64,
        py::arg("stages") = 4, py::arg("layers") = 10);
}
