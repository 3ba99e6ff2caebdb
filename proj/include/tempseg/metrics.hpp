#pragma once

#include <set>
#include <string>
#include <vector>

#include "tempseg/common.hpp"

namespace tempseg {

// Run-length segment: class label over the inclusive frame range [start, end].
struct Segment {
    int label = 0;
    int start = 0;
    int end = 0;
};

using SegmentList = std::vector<Segment>;

struct EvalReport {
    double acc = 0.0;
    double edit = 0.0;
    double f1_10 = 0.0;
    double f1_25 = 0.0;
    double f1_50 = 0.0;
    long long n_videos = 0;
    long long n_frames = 0;
};

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt);

SegmentList labels_to_segments(const std::vector<int>& labels);

// 100 * (1 - Levenshtein(pred classes, gt classes) / max(|pred|, |gt|));
// unit insert/delete/substitute costs, durations ignored.
double segmental_edit_score(const SegmentList& pred, const SegmentList& gt);

// Greedy one-to-one IoU matching in prediction order; threshold in (0, 1].
double overlap_f1(const SegmentList& pred, const SegmentList& gt, double threshold);

// Acc pooled over frames, Edit averaged per video, F1 pooled over TP/FP/FN.
// Segments with a label in `background` are dropped from Edit and F1 only.
EvalReport evaluate_set(const std::vector<std::pair<std::vector<int>, std::vector<int>>>& pairs,
                        const std::set<int>& background = {});

std::string render_report_kv(const EvalReport& r);
std::string render_report_table(const EvalReport& r);

}  // namespace tempseg
