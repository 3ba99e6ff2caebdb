#include <chrono>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "tempseg/data.hpp"
#include "tempseg/gradcheck.hpp"
#include "tempseg/metrics.hpp"
#include "tempseg/trainer.hpp"

namespace {

using namespace tempseg;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

char class_char(int c) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    return alphabet[c % 52];
}

std::string timeline_strip(const std::vector<int>& labels, int width = 80) {
    std::string s;
    const int n = static_cast<int>(labels.size());
    for (int i = 0; i < width; ++i) s += class_char(labels[(static_cast<long long>(i) * n) / width]);
    return s;
}

std::set<int> parse_background(const std::string& names,
                               const std::map<std::string, int>& mapping) {
    std::set<int> out;
    std::stringstream ss(names);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        const auto it = mapping.find(name);
        if (it == mapping.end()) throw FormatError("unknown background class: " + name);
        out.insert(it->second);
    }
    return out;
}

struct ArchFlags {
    std::string arch = "mstcn";
    int stages = 4;
    int layers = 10;
    int layers_gen = 11;
    int layers_ref = 10;
    int filters = 64;
    double dropout = 0.5;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--arch", arch, "Architecture: sstcn|mstcn|mstcn++|mstcn++sh")
            ->default_val(arch);
        cmd->add_option("--stages", stages, "Number of stages (mstcn)")->default_val(stages);
        cmd->add_option("--layers", layers, "Layers per stage (sstcn/mstcn)")
            ->default_val(layers);
        cmd->add_option("--layers-gen", layers_gen, "Generation-stage layers (mstcn++)")
            ->default_val(layers_gen);
        cmd->add_option("--layers-ref", layers_ref, "Refinement-stage layers (mstcn++)")
            ->default_val(layers_ref);
        cmd->add_option("--filters", filters, "Convolution filters per layer")
            ->default_val(filters);
        cmd->add_option("--dropout", dropout, "Dropout rate")->default_val(dropout);
    }

    ModelConfig config(int input_dim, int classes) const {
        ModelConfig c;
        c.variant = parse_variant(arch);
        c.input_dim = input_dim;
        c.num_classes = classes;
        c.filters = filters;
        c.num_stages = stages;
        c.num_refinements = stages > 1 ? stages - 1 : 3;
        c.layers_per_stage = layers;
        c.layers_generation = layers_gen;
        c.layers_refinement = layers_ref;
        c.dropout = dropout;
        return c;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"tempseg: multi-stage temporal convolutional segmentation"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
    std::string gen_out;
    SyntheticSpec spec;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--videos", spec.num_videos)->default_val(spec.num_videos);
    gen->add_option("--classes", spec.num_classes)->default_val(spec.num_classes);
    gen->add_option("--dim", spec.feature_dim)->default_val(spec.feature_dim);
    gen->add_option("--min-seg", spec.min_segment, "Min segment length (frames)")
        ->default_val(spec.min_segment);
    gen->add_option("--max-seg", spec.max_segment, "Max segment length (frames)")
        ->default_val(spec.max_segment);
    gen->add_option("--segments", spec.mean_segments, "Mean segments per video")
        ->default_val(spec.mean_segments);
    gen->add_option("--noise", spec.noise_sigma, "Feature noise sigma")
        ->default_val(spec.noise_sigma);
    gen->add_option("--seed", spec.seed)->default_val(spec.seed);

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    std::string train_data, train_split = "train", train_out;
    ArchFlags train_arch;
    TrainConfig tcfg;
    std::string smoothing = "tmse";
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--split", train_split)->default_val(train_split);
    train_arch.add_to(train);
    train->add_option("--epochs", tcfg.epochs)->default_val(tcfg.epochs);
    train->add_option("--lr", tcfg.learning_rate)->default_val(tcfg.learning_rate);
    train->add_option("--lambda", tcfg.loss.lambda)->default_val(tcfg.loss.lambda);
    train->add_option("--tau", tcfg.loss.tau)->default_val(tcfg.loss.tau);
    train->add_option("--smoothing", smoothing, "tmse|kl|none")->default_val(smoothing);
    train->add_option("--seed", tcfg.seed)->default_val(tcfg.seed);
    train->add_option("--out", train_out, "Checkpoint path")->required();
    bool no_shuffle = false;
    train->add_flag("--no-shuffle", no_shuffle, "Keep video order fixed per epoch");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    std::string eval_data, eval_split = "test", eval_ckpt, eval_bg, eval_format = "table";
    int jobs = 1;
    bool timeline = false, no_timestamp = false;
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--split", eval_split)->default_val(eval_split);
    eval->add_option("--ckpt", eval_ckpt)->required();
    eval->add_option("--background", eval_bg, "Comma-separated background class names");
    eval->add_option("--format", eval_format, "table|kv")->default_val(eval_format);
    eval->add_option("--jobs", jobs, "Parallel evaluation jobs")->default_val(jobs);
    eval->add_flag("--timeline", timeline, "Print per-video pred/gt segment strips");
    eval->add_flag("--no-timestamp", no_timestamp, "Suppress timestamp in kv output");

    // predict
    auto* predict = app.add_subcommand("predict", "Predict labels for one feature file");
    std::string pred_features, pred_ckpt, pred_mapping, pred_out;
    predict->add_option("--features", pred_features)->required();
    predict->add_option("--ckpt", pred_ckpt)->required();
    predict->add_option("--mapping", pred_mapping)->required();
    predict->add_option("--out", pred_out)->required();

    // inspect
    auto* inspect = app.add_subcommand("inspect", "Print the architecture report");
    ArchFlags ins_arch;
    int ins_input_dim = 2048, ins_classes = 19;
    std::string ins_format = "table";
    ins_arch.add_to(inspect);
    inspect->add_option("--input-dim", ins_input_dim)->default_val(ins_input_dim);
    inspect->add_option("--classes", ins_classes)->default_val(ins_classes);
    inspect->add_option("--format", ins_format, "table|kv")->default_val(ins_format);

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    std::uint64_t gc_seed = 1;
    bool gc_double = true;
    gradcheck->add_option("--seed", gc_seed)->default_val(gc_seed);
    gradcheck->add_flag("--double", gc_double, "Run in double precision (always on)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    if (*gen) {
        const DatasetBundle bundle = generate_synthetic(spec);
        save_dataset(gen_out, bundle);
        std::cout << "wrote " << bundle.videos.size() << " videos to " << gen_out
                  << " (bayes_proxy_acc " << bundle.manifest.at("bayes_proxy_acc") << ")\n";
        return kExitOk;
    }

    if (*train) {
        tcfg.loss.smoothing = parse_smoothing(smoothing);
        tcfg.shuffle = !no_shuffle;
        const DatasetBundle bundle = load_dataset(train_data, train_split);
        if (bundle.videos.empty()) throw FormatError("split has no videos: " + train_split);
        const ModelConfig mcfg = train_arch.config(bundle.videos[0].features.channels,
                                                   static_cast<int>(bundle.class_names.size()));
        Rng init_rng(tcfg.seed);
        Model<float> model = Model<float>::build(mcfg, init_rng);
        std::cout << "training " << variant_name(mcfg.variant) << " ("
                  << model.parameter_count() << " parameters) on "
                  << bundle.splits.at(train_split).size() << " videos\n";
        const TrainHistory hist = fit(model, bundle, train_split, tcfg);
        for (size_t e = 0; e < hist.epoch_loss.size(); ++e)
            std::cout << "epoch " << e + 1 << " loss " << hist.epoch_loss[e] << "\n";
        save_checkpoint(train_out, model, nullptr, tcfg.seed, tcfg.epochs);
        std::cout << "saved checkpoint " << train_out << "\n";
        return kExitOk;
    }

    if (*eval) {
        Model<float> model = load_checkpoint(eval_ckpt);
        const DatasetBundle bundle = load_dataset(eval_data, eval_split);
        if (static_cast<int>(bundle.class_names.size()) != model.config.num_classes)
            throw FormatError("checkpoint expects " +
                              std::to_string(model.config.num_classes) +
                              " classes but dataset mapping has " +
                              std::to_string(bundle.class_names.size()));
        const std::set<int> bg = parse_background(eval_bg, bundle.class_index);
        const EvalReport rep = evaluate(model, bundle, eval_split, bg);
        if (timeline) {
            for (const auto* v : bundle.split_videos(eval_split)) {
                std::cout << v->id << "\n  gt   "
                          << timeline_strip(v->labels) << "\n  pred "
                          << timeline_strip(predict_labels(model, v->features)) << "\n";
            }
        }
        if (eval_format == "kv") {
            std::cout << render_report_kv(rep);
            if (!no_timestamp)
                std::cout << "timestamp "
                          << std::chrono::duration_cast<std::chrono::seconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count()
                          << "\n";
        } else {
            std::cout << render_report_table(rep);
        }
        return kExitOk;
    }

    if (*predict) {
        Model<float> model = load_checkpoint(pred_ckpt);
        const Tensor<float> feats = load_features(pred_features);
        std::vector<std::string> names;
        load_mapping(pred_mapping, &names);
        if (static_cast<int>(names.size()) != model.config.num_classes)
            throw FormatError("checkpoint expects " +
                              std::to_string(model.config.num_classes) +
                              " classes but mapping has " + std::to_string(names.size()));
        const std::vector<int> labels = predict_labels(model, feats);
        std::ofstream os(pred_out);
        if (!os) throw FormatError("cannot open output: " + pred_out);
        for (const int l : labels) os << names[l] << "\n";
        std::cout << "wrote " << labels.size() << " labels to " << pred_out << "\n";
        return kExitOk;
    }

    if (*inspect) {
        const ModelConfig cfg = ins_arch.config(ins_input_dim, ins_classes);
        const ArchReport rep = architecture_report(cfg);
        std::cout << (ins_format == "kv" ? render_report_kv(rep)
                                         : render_report_table(rep));
        return kExitOk;
    }

    if (*gradcheck) {
        std::cout << "primitive          max_rel_error\n";
        bool ok = true;
        for (const auto& [name, fn] : gradcheck_registry()) {
            const double err = fn(gc_seed, 1e-5);
            const double tol = name == "model" ? 1e-3 : 1e-4;
            ok = ok && err < tol;
            char line[96];
            std::snprintf(line, sizeof line, "%-18s %.3e %s\n", name.c_str(), err,
                          err < tol ? "ok" : "FAIL");
            std::cout << line;
        }
        return ok ? kExitOk : kExitNumeric;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const tempseg::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const tempseg::FormatError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const tempseg::DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
