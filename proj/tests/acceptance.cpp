// Acceptance suite: structural reproductions and property suites at desk
// scale. Prints one pass/fail line per criterion; exit code 0 iff all pass.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tempseg/data.hpp"
#include "tempseg/gradcheck.hpp"
#include "tempseg/trainer.hpp"

using namespace tempseg;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s  criterion %d (%s): %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

ModelConfig reference_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    c.input_dim = 2048;
    c.num_classes = 19;
    return c;
}

// ---------------------------------------------------------------------- 1
void criterion_parameter_counts() {
    Rng rng(1);
    const long long mstcn =
        Model<float>::build(reference_config(Variant::MSTCN), rng).parameter_count();
    const long long pp =
        Model<float>::build(reference_config(Variant::MSTCNPP), rng).parameter_count();
    const long long shared =
        Model<float>::build(reference_config(Variant::MSTCNPP_SHARED), rng).parameter_count();

    const auto within3pct = [](long long n, double millions) {
        return std::abs(n / 1e6 - millions) <= 0.03 * millions;
    };
    const bool pass = mstcn == 800396 && pp == 997836 && shared == 662566 &&
                      within3pct(mstcn, 0.80) && within3pct(pp, 0.99) &&
                      within3pct(shared, 0.66);
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "mstcn=%lld pp=%lld shared=%lld (expect 800396/997836/662566)", mstcn,
                  pp, shared);
    report(1, "parameter counts", pass, detail);
}

// ---------------------------------------------------------------------- 2
void criterion_receptive_field() {
    bool pass = receptive_field(10) == 2047;
    for (int l = 2; l <= 12; ++l)
        pass = pass && receptive_field(l) == 2 * receptive_field(l - 1) + 1;
    report(2, "receptive field", pass,
           "rf(10)=" + std::to_string(receptive_field(10)) + ", doubling holds l=2..12");
}

// ---------------------------------------------------------------------- 3
void criterion_gradients() {
    bool pass = true;
    double worst_prim = 0, worst_model = 0;
    for (const auto& [name, fn] : gradcheck_registry()) {
        const double tol = name == "model" ? 1e-3 : 1e-4;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            const double err = fn(seed, 1e-5);
            (name == "model" ? worst_model : worst_prim) =
                std::max(name == "model" ? worst_model : worst_prim, err);
            if (err >= tol) pass = false;
        }
    }
    char detail[128];
    std::snprintf(detail, sizeof detail,
                  "max primitive/layer rel err %.2e (<1e-4), end-to-end %.2e (<1e-3)",
                  worst_prim, worst_model);
    report(3, "gradient suite", pass, detail);
}

// ---------------------------------------------------------------------- 4
void criterion_loss_analytics() {
    const double e5 = std::exp(5.0);
    const double p0 = (1.0 - std::exp(-5.0)) / (e5 - std::exp(-5.0));
    Tensor<double> p(2, 2);
    p.at(0, 0) = p0;
    p.at(1, 0) = 1 - p0;
    p.at(0, 1) = p0 * e5;
    p.at(1, 1) = (1 - p0) * std::exp(-5.0);
    const double tmse_val = t_mse(p, 4.0);

    Tensor<double> q(2, 2);
    q.at(0, 0) = 0.5;
    q.at(1, 0) = 0.5;
    q.at(0, 1) = 0.25;
    q.at(1, 1) = 0.75;
    const double kl_val = kl_smoothing(q);

    Tensor<double> u(4, 11);
    for (auto& v : u.data) v = 0.25;
    const double ce_val = cross_entropy(u, std::vector<int>(11, 2));

    const bool pass = std::abs(tmse_val - 8.0) < 1e-9 &&
                      std::abs(kl_val - 0.0719) <= 1e-4 &&
                      std::abs(ce_val - std::log(4.0)) <= 1e-6;
    char detail[128];
    std::snprintf(detail, sizeof detail, "tmse=%.10g (8), kl=%.6g (0.0719), ce=%.8g (ln 4)",
                  tmse_val, kl_val, ce_val);
    report(4, "loss analytics", pass, detail);
}

// ---------------------------------------------------------------------- 5
SegmentList random_segments(Rng& rng, int max_segments, int classes) {
    const int n = 1 + static_cast<int>(rng.uniform_index(max_segments));
    SegmentList segs;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
        const int len = 1 + static_cast<int>(rng.uniform_index(20));
        segs.push_back({static_cast<int>(rng.uniform_index(classes)), pos, pos + len - 1});
        pos += len;
    }
    return segs;
}

int edit_oracle(const SegmentList& a, const SegmentList& b) {
    std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
    for (size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] +
                                    (a[i - 1].label == b[j - 1].label ? 0 : 1)});
    return d[a.size()][b.size()];
}

double f1_oracle(const SegmentList& pred, const SegmentList& gt, double k) {
    std::vector<bool> used(gt.size(), false);
    int tp = 0, fp = 0;
    for (const auto& ps : pred) {
        double best = -1;
        int bj = -1;
        for (size_t j = 0; j < gt.size(); ++j) {
            if (used[j] || gt[j].label != ps.label) continue;
            const double inter =
                std::min(ps.end, gt[j].end) - std::max(ps.start, gt[j].start) + 1;
            const double uni =
                std::max(ps.end, gt[j].end) - std::min(ps.start, gt[j].start) + 1;
            const double iou = inter > 0 ? inter / uni : 0.0;
            if (iou > best) {
                best = iou;
                bj = static_cast<int>(j);
            }
        }
        if (bj >= 0 && best >= k) {
            used[bj] = true;
            ++tp;
        } else
            ++fp;
    }
    const int fn = static_cast<int>(gt.size()) - tp;
    if (tp == 0) return 0.0;
    const double prec = static_cast<double>(tp) / (tp + fp);
    const double rec = static_cast<double>(tp) / (tp + fn);
    return 100.0 * 2 * prec * rec / (prec + rec);
}

void criterion_metric_oracles() {
    Rng rng(5);
    bool edit_ok = true, f1_ok = true, mono_ok = true;
    for (int trial = 0; trial < 1000; ++trial) {
        const SegmentList a = random_segments(rng, 12, 4);
        const SegmentList b = random_segments(rng, 12, 4);
        const double want = 100.0 * (1.0 - static_cast<double>(edit_oracle(a, b)) /
                                               std::max(a.size(), b.size()));
        if (segmental_edit_score(a, b) != want) edit_ok = false;

        const SegmentList pred = random_segments(rng, 8, 3);
        const SegmentList gt = random_segments(rng, 8, 3);
        double prev = 1e9;
        for (const double k : {0.10, 0.25, 0.50}) {
            const double got = overlap_f1(pred, gt, k);
            if (got != f1_oracle(pred, gt, k)) f1_ok = false;
            if (got > prev) mono_ok = false;
            prev = got;
        }
    }
    report(5, "metric oracles", edit_ok && f1_ok && mono_ok,
           std::string("edit ") + (edit_ok ? "exact" : "MISMATCH") + ", f1 " +
               (f1_ok ? "exact" : "MISMATCH") + ", monotone " + (mono_ok ? "yes" : "NO") +
               " on 1000 instances");
}

// ------------------------------------------------------------------- 6-8
// The standard synthetic benchmark: seed 1, 30 train / 8 test videos, C=8,
// D=32, T~1000, segments 30-120 frames, sigma 0.6.
DatasetBundle benchmark_bundle() {
    SyntheticSpec spec;
    spec.num_videos = 38;  // 80/20 -> 30 train, 8 test
    spec.num_classes = 8;
    spec.feature_dim = 32;
    spec.min_segment = 30;
    spec.max_segment = 120;
    spec.mean_segments = 13;  // ~13 * 75 ~ 1000 frames
    spec.noise_sigma = 0.6;
    spec.seed = 1;
    return generate_synthetic(spec);
}

struct RunResult {
    EvalReport report;
    double mean_pred_segments = 0;
    double mean_gt_segments = 0;
};

RunResult train_and_eval(const DatasetBundle& bundle, Variant variant, double lambda,
                         const std::string& tag) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.input_dim = 32;
    cfg.num_classes = 8;

    TrainConfig tcfg;
    tcfg.epochs = 50;
    tcfg.seed = 1;
    tcfg.loss.lambda = lambda;

    const auto start = std::chrono::steady_clock::now();
    Rng rng(1);
    Model<float> model = Model<float>::build(cfg, rng);
    const TrainHistory hist = fit(model, bundle, "train", tcfg);

    RunResult r;
    r.report = evaluate(model, bundle, "test");
    const auto test_videos = bundle.split_videos("test");
    for (const auto* v : test_videos) {
        r.mean_pred_segments += static_cast<double>(
            labels_to_segments(predict_labels(model, v->features)).size());
        r.mean_gt_segments +=
            static_cast<double>(labels_to_segments(v->labels).size());
    }
    r.mean_pred_segments /= static_cast<double>(test_videos.size());
    r.mean_gt_segments /= static_cast<double>(test_videos.size());

    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      start)
                            .count();
    std::printf(
        "  [bench %-12s] loss %.3f->%.3f  acc %.1f edit %.1f f1@10 %.1f  segs %.1f (gt "
        "%.1f)  %.0fs\n",
        tag.c_str(), hist.epoch_loss.front(), hist.epoch_loss.back(), r.report.acc,
        r.report.edit, r.report.f1_10, r.mean_pred_segments, r.mean_gt_segments, secs);
    std::fflush(stdout);
    return r;
}

void criteria_trends() {
    const DatasetBundle bundle = benchmark_bundle();

    const RunResult sstcn = train_and_eval(bundle, Variant::SSTCN, 0.15, "sstcn");
    const RunResult mstcn = train_and_eval(bundle, Variant::MSTCN, 0.15, "mstcn");
    const RunResult mstcn_nolam = train_and_eval(bundle, Variant::MSTCN, 0.0, "mstcn l=0");

    // 6: multi-stage trend
    {
        const bool f1_gap = mstcn.report.f1_10 >= sstcn.report.f1_10 + 10.0;
        const bool acc_close = std::abs(mstcn.report.acc - sstcn.report.acc) <= 5.0;
        const bool seg_closer =
            std::abs(mstcn.mean_pred_segments - mstcn.mean_gt_segments) <
            std::abs(sstcn.mean_pred_segments - sstcn.mean_gt_segments);
        char detail[256];
        std::snprintf(detail, sizeof detail,
                      "f1@10 %.1f vs %.1f (gap>=10 %s), acc %.1f vs %.1f (|d|<=5 %s), "
                      "segments %.1f vs %.1f (gt %.1f, closer %s)",
                      mstcn.report.f1_10, sstcn.report.f1_10, f1_gap ? "yes" : "NO",
                      mstcn.report.acc, sstcn.report.acc, acc_close ? "yes" : "NO",
                      mstcn.mean_pred_segments, sstcn.mean_pred_segments,
                      mstcn.mean_gt_segments, seg_closer ? "yes" : "NO");
        report(6, "multi-stage trend", f1_gap && acc_close && seg_closer, detail);
    }

    // 7: smoothing-loss trend
    {
        const bool edit_up = mstcn.report.edit >= mstcn_nolam.report.edit;
        const bool f1_up = mstcn.report.f1_10 >= mstcn_nolam.report.f1_10;
        const bool acc_close = std::abs(mstcn.report.acc - mstcn_nolam.report.acc) <= 2.0;
        const double surplus_lam =
            std::max(0.0, mstcn.mean_pred_segments - mstcn.mean_gt_segments);
        const double surplus_nolam =
            std::max(0.0, mstcn_nolam.mean_pred_segments - mstcn_nolam.mean_gt_segments);
        const bool fewer_overseg = surplus_lam < surplus_nolam;
        char detail[256];
        std::snprintf(detail, sizeof detail,
                      "edit %.1f vs %.1f, f1@10 %.1f vs %.1f, acc %.1f vs %.1f, "
                      "segment surplus %.2f vs %.2f",
                      mstcn.report.edit, mstcn_nolam.report.edit, mstcn.report.f1_10,
                      mstcn_nolam.report.f1_10, mstcn.report.acc, mstcn_nolam.report.acc,
                      surplus_lam, surplus_nolam);
        report(7, "smoothing-loss trend", edit_up && f1_up && acc_close && fewer_overseg,
               detail);
    }

    // 8: sharing parity + trained proximity
    {
        // forward parity: shared params copied into an unshared model
        ModelConfig scfg;
        scfg.variant = Variant::MSTCNPP_SHARED;
        scfg.input_dim = 32;
        scfg.num_classes = 8;
        Rng rng(2);
        Model<float> shared = Model<float>::build(scfg, rng);
        ModelConfig ucfg = scfg;
        ucfg.variant = Variant::MSTCNPP;
        Rng rng2(99);
        Model<float> unshared = Model<float>::build(ucfg, rng2);
        unshared.stages[0].copy_params_from(shared.stages[0]);
        for (size_t s = 1; s < unshared.stages.size(); ++s)
            unshared.stages[s].copy_params_from(shared.stages[1]);
        const Tensor<float> x = bundle.videos[0].features;
        Rng ra(0), rb(0);
        const StageOutputs<float> oa = shared.forward(x, false, ra);
        const StageOutputs<float> ob = unshared.forward(x, false, rb);
        bool bitwise = oa.probs.size() == ob.probs.size();
        for (size_t s = 0; bitwise && s < oa.probs.size(); ++s)
            bitwise = oa.probs[s].data == ob.probs[s].data;

        const RunResult pp = train_and_eval(bundle, Variant::MSTCNPP, 0.15, "mstcn++");
        const RunResult sh =
            train_and_eval(bundle, Variant::MSTCNPP_SHARED, 0.15, "mstcn++sh");
        const double dacc = std::abs(pp.report.acc - sh.report.acc);
        const double dedit = std::abs(pp.report.edit - sh.report.edit);
        const double df10 = std::abs(pp.report.f1_10 - sh.report.f1_10);
        const double df25 = std::abs(pp.report.f1_25 - sh.report.f1_25);
        const double df50 = std::abs(pp.report.f1_50 - sh.report.f1_50);
        const bool close =
            dacc <= 5.0 && dedit <= 5.0 && df10 <= 5.0 && df25 <= 5.0 && df50 <= 5.0;
        char detail[256];
        std::snprintf(detail, sizeof detail,
                      "forward parity %s; trained deltas acc %.1f edit %.1f f1 "
                      "%.1f/%.1f/%.1f (all <=5)",
                      bitwise ? "bitwise" : "BROKEN", dacc, dedit, df10, df25, df50);
        report(8, "sharing parity", bitwise && close, detail);
    }
}

// ---------------------------------------------------------------------- 9
void criterion_determinism() {
    SyntheticSpec spec;
    spec.num_videos = 6;
    spec.num_classes = 4;
    spec.feature_dim = 8;
    spec.min_segment = 10;
    spec.max_segment = 20;
    spec.mean_segments = 5;
    spec.noise_sigma = 0.3;
    spec.seed = 3;
    const DatasetBundle bundle = generate_synthetic(spec);

    ModelConfig cfg;
    cfg.variant = Variant::MSTCN;
    cfg.input_dim = 8;
    cfg.num_classes = 4;
    cfg.filters = 16;
    cfg.num_stages = 2;
    cfg.layers_per_stage = 4;

    TrainConfig tcfg;
    tcfg.epochs = 4;
    tcfg.seed = 12;

    const fs::path dir = fs::temp_directory_path() / "tempseg_acceptance";
    fs::create_directories(dir);
    std::string paths[2];
    for (int run = 0; run < 2; ++run) {
        Rng rng(7);
        Model<float> model = Model<float>::build(cfg, rng);
        fit(model, bundle, "train", tcfg);
        paths[run] = (dir / ("run" + std::to_string(run) + ".ckpt")).string();
        save_checkpoint(paths[run], model, nullptr, tcfg.seed, tcfg.epochs);
    }
    std::ifstream a(paths[0], std::ios::binary), b(paths[1], std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    const bool identical = sa.str() == sb.str();

    Model<float> reloaded = load_checkpoint(paths[0]);
    Rng rng(7);
    Model<float> fresh = Model<float>::build(cfg, rng);
    fit(fresh, bundle, "train", tcfg);
    const EvalReport ra = evaluate(fresh, bundle, "test");
    const EvalReport rb = evaluate(reloaded, bundle, "test");
    const bool same_report = ra.acc == rb.acc && ra.edit == rb.edit &&
                             ra.f1_10 == rb.f1_10 && ra.f1_25 == rb.f1_25 &&
                             ra.f1_50 == rb.f1_50;
    fs::remove_all(dir);
    report(9, "determinism & persistence", identical && same_report,
           std::string("checkpoints ") + (identical ? "byte-identical" : "DIFFER") +
               ", round-trip report " + (same_report ? "exact" : "DIFFERS"));
}

}  // namespace

int main() {
    std::printf("tempseg acceptance suite\n");
    criterion_parameter_counts();
    criterion_receptive_field();
    criterion_gradients();
    criterion_loss_analytics();
    criterion_metric_oracles();
    criteria_trends();
    criterion_determinism();
    std::printf("%s (%d failing)\n", g_failures == 0 ? "ALL CRITERIA PASS" : "FAILURES",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
