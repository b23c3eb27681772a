#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pfcn/panoptic.hpp"

namespace pfcn {

struct CategoryStats {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
    double iou_sum = 0;

    double pq() const;
    double sq() const;
    double rq() const;
};

struct SegmentMatch {
    int pred_id = 0;
    int gt_id = 0;
    double iou = 0;
};

struct MatchResult {
    std::vector<SegmentMatch> matches;
    std::vector<int> false_positives;  // unmatched predictions not mostly over void
    std::vector<int> false_negatives;  // unmatched ground-truth segments
    std::vector<int> void_predictions;  // unmatched predictions discounted because > 50% over void
};

/// Same-category pairs with IoU > 0.5 (strict). Void ground-truth pixels are
/// left out of the union.
MatchResult match_segments(const PanopticSegmentation& pred, const PanopticSegmentation& gt);

/// Intersection-over-union of one predicted and one ground-truth segment
/// under the void convention used by match_segments.
double segment_iou(const PanopticSegmentation& pred, int pred_id, const PanopticSegmentation& gt, int gt_id);

struct PqSummary {
    double pq = 0;
    double sq = 0;
    double rq = 0;
    int categories = 0;
};

struct MetricReport {
    PqSummary all;
    PqSummary things;
    PqSummary stuff;
    std::map<int, CategoryStats> per_category;
    double miou = 0;
    int images = 0;
};

/// Per-category accumulation across images; averages run over categories
/// that occur in the ground truth. Values are percentages.
class PqAccumulator {
public:
    explicit PqAccumulator(Taxonomy taxonomy);

    void add(const PanopticSegmentation& pred, const PanopticSegmentation& gt);
    MetricReport report() const;

private:
    Taxonomy taxonomy_;
    std::map<int, CategoryStats> stats_;
    std::set<int> gt_categories_;
    std::map<int, int64_t> sem_tp_, sem_fp_, sem_fn_;
    int images_ = 0;
};

MetricReport compute_pq(const PanopticSegmentation& pred, const PanopticSegmentation& gt, const Taxonomy& taxonomy);

/// Mean over categories of TP / (TP + FP + FN) in percent. Pixels whose
/// ground truth is ignore_label are skipped; ignore_label in the prediction
/// counts for no category. Categories absent from both maps are left out.
double compute_miou(const Grid<int>& pred, const Grid<int>& gt, int ignore_label = 0);

std::string report_to_json(const MetricReport& r, const Taxonomy& taxonomy);
MetricReport report_from_json(const std::string& text);

/// Aligned plain-text table: PQ, SQ, RQ for All/Things/Stuff, then per category.
std::string format_table(const MetricReport& r, const Taxonomy& taxonomy);

/// True when every summary value agrees within tol.
bool reports_equal(const MetricReport& a, const MetricReport& b, double tol);

}  // namespace pfcn
