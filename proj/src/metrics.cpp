#include "tempseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tempseg {

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
    if (pred.size() != gt.size())
        throw DimensionError("frame_accuracy: length mismatch (" +
                             std::to_string(pred.size()) + " vs " +
                             std::to_string(gt.size()) + ")");
    if (pred.empty()) throw DimensionError("frame_accuracy: empty sequences");
    size_t hits = 0;
    for (size_t t = 0; t < pred.size(); ++t)
        if (pred[t] == gt[t]) ++hits;
    return 100.0 * static_cast<double>(hits) / pred.size();
}

SegmentList labels_to_segments(const std::vector<int>& labels) {
    if (labels.empty()) throw DimensionError("labels_to_segments: empty sequence");
    SegmentList segs;
    int start = 0;
    for (size_t t = 1; t <= labels.size(); ++t) {
        if (t == labels.size() || labels[t] != labels[start]) {
            segs.push_back({labels[start], start, static_cast<int>(t) - 1});
            start = static_cast<int>(t);
        }
    }
    return segs;
}

static int levenshtein(const SegmentList& a, const SegmentList& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (a[i - 1].label == b[j - 1].label ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double segmental_edit_score(const SegmentList& pred, const SegmentList& gt) {
    if (pred.empty() || gt.empty())
        throw DimensionError("segmental_edit_score: empty segment list");
    const double dist = levenshtein(pred, gt);
    const double denom = static_cast<double>(std::max(pred.size(), gt.size()));
    return 100.0 * (1.0 - dist / denom);
}

static double segment_iou(const Segment& a, const Segment& b) {
    const int inter = std::min(a.end, b.end) - std::max(a.start, b.start) + 1;
    if (inter <= 0) return 0.0;
    const int uni = std::max(a.end, b.end) - std::min(a.start, b.start) + 1;
    return static_cast<double>(inter) / uni;
}

struct F1Counts {
    long long tp = 0, fp = 0, fn = 0;
};

static F1Counts count_matches(const SegmentList& pred, const SegmentList& gt,
                              double threshold) {
    F1Counts c;
    std::vector<bool> used(gt.size(), false);
    for (const auto& p : pred) {
        double best = -1.0;
        int best_j = -1;
        for (size_t j = 0; j < gt.size(); ++j) {
            if (used[j] || gt[j].label != p.label) continue;
            const double iou = segment_iou(p, gt[j]);
            if (iou > best) {
                best = iou;
                best_j = static_cast<int>(j);
            }
        }
        if (best_j >= 0 && best >= threshold) {
            used[best_j] = true;
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    for (const bool u : used)
        if (!u) ++c.fn;
    return c;
}

static double f1_from_counts(const F1Counts& c) {
    if (c.tp == 0 && (c.fp > 0 || c.fn > 0)) return 0.0;
    if (c.tp == 0) return 0.0;
    const double precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    if (precision + recall == 0.0) return 0.0;
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

double overlap_f1(const SegmentList& pred, const SegmentList& gt, double threshold) {
    if (pred.empty() || gt.empty()) throw DimensionError("overlap_f1: empty segment list");
    return f1_from_counts(count_matches(pred, gt, threshold));
}

static SegmentList drop_background(const SegmentList& segs, const std::set<int>& bg) {
    if (bg.empty()) return segs;
    SegmentList out;
    for (const auto& s : segs)
        if (!bg.count(s.label)) out.push_back(s);
    return out;
}

EvalReport evaluate_set(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
    const std::set<int>& background) {
    if (pairs.empty()) throw DimensionError("evaluate_set: no videos");
    EvalReport rep;
    long long frame_hits = 0;
    double edit_sum = 0.0;
    const double thresholds[3] = {0.10, 0.25, 0.50};
    F1Counts counts[3];
    for (const auto& [pred, gt] : pairs) {
        if (pred.size() != gt.size())
            throw DimensionError("evaluate_set: pred/gt length mismatch");
        rep.n_frames += static_cast<long long>(pred.size());
        for (size_t t = 0; t < pred.size(); ++t)
            if (pred[t] == gt[t]) ++frame_hits;

        SegmentList ps = drop_background(labels_to_segments(pred), background);
        SegmentList gs = drop_background(labels_to_segments(gt), background);
        if (ps.empty() && gs.empty()) {
            edit_sum += 100.0;  // nothing to segment, nothing wrong
            continue;
        }
        if (ps.empty() || gs.empty()) {
            // one side has only background: every remaining segment is an error
            for (int k = 0; k < 3; ++k) {
                counts[k].fp += static_cast<long long>(ps.size());
                counts[k].fn += static_cast<long long>(gs.size());
            }
            continue;
        }
        edit_sum += segmental_edit_score(ps, gs);
        for (int k = 0; k < 3; ++k) {
            const F1Counts c = count_matches(ps, gs, thresholds[k]);
            counts[k].tp += c.tp;
            counts[k].fp += c.fp;
            counts[k].fn += c.fn;
        }
    }
    rep.n_videos = static_cast<long long>(pairs.size());
    rep.acc = 100.0 * static_cast<double>(frame_hits) / rep.n_frames;
    rep.edit = edit_sum / rep.n_videos;
    rep.f1_10 = f1_from_counts(counts[0]);
    rep.f1_25 = f1_from_counts(counts[1]);
    rep.f1_50 = f1_from_counts(counts[2]);
    return rep;
}

std::string render_report_kv(const EvalReport& r) {
    std::ostringstream os;
    os << "acc " << r.acc << "\n"
       << "edit " << r.edit << "\n"
       << "f1_10 " << r.f1_10 << "\n"
       << "f1_25 " << r.f1_25 << "\n"
       << "f1_50 " << r.f1_50 << "\n"
       << "n_videos " << r.n_videos << "\n"
       << "n_frames " << r.n_frames << "\n";
    return os.str();
}

std::string render_report_table(const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "videos %lld  frames %lld\n"
                  "Acc    %6.2f\nEdit   %6.2f\nF1@10  %6.2f\nF1@25  %6.2f\nF1@50  %6.2f\n",
                  r.n_videos, r.n_frames, r.acc, r.edit, r.f1_10, r.f1_25, r.f1_50);
    return std::string(buf);
}

}  // namespace tempseg
