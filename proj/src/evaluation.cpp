#include "pfcn/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace pfcn {

double CategoryStats::pq() const {
    const double den = tp + 0.5 * fp + 0.5 * fn;
    return den > 0 ? iou_sum / den : 0.0;
}

double CategoryStats::sq() const { return tp > 0 ? iou_sum / tp : 0.0; }

double CategoryStats::rq() const {
    const double den = tp + 0.5 * fp + 0.5 * fn;
    return den > 0 ? tp / den : 0.0;
}

namespace {

struct Overlaps {
    std::map<int, int64_t> pred_area;
    std::map<int, int64_t> gt_area;
    std::map<std::pair<int, int>, int64_t> inter;  // (pred id, gt id), gt id 0 = void
};

Overlaps count_overlaps(const PanopticSegmentation& pred, const PanopticSegmentation& gt) {
    if (pred.id_map.h != gt.id_map.h || pred.id_map.w != gt.id_map.w) {
        throw ValidationError("prediction is " + std::to_string(pred.id_map.w) + "x" + std::to_string(pred.id_map.h) +
                              " but ground truth is " + std::to_string(gt.id_map.w) + "x" +
                              std::to_string(gt.id_map.h));
    }
    Overlaps o;
    for (size_t i = 0; i < gt.id_map.data.size(); ++i) {
        const int p = pred.id_map.data[i];
        const int g = gt.id_map.data[i];
        if (p != 0) ++o.pred_area[p];
        if (g != 0) ++o.gt_area[g];
        if (p != 0) ++o.inter[{p, g}];
    }
    return o;
}

int64_t lookup(const std::map<std::pair<int, int>, int64_t>& m, int a, int b) {
    auto it = m.find({a, b});
    return it == m.end() ? 0 : it->second;
}

double iou_of(const Overlaps& o, int p, int g) {
    const int64_t inter = lookup(o.inter, p, g);
    if (inter == 0) return 0.0;
    const int64_t pv = lookup(o.inter, p, 0);
    const int64_t uni = o.pred_area.at(p) + o.gt_area.at(g) - inter - pv;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double segment_iou(const PanopticSegmentation& pred, int pred_id, const PanopticSegmentation& gt, int gt_id) {
    Overlaps o = count_overlaps(pred, gt);
    if (!o.pred_area.count(pred_id) || !o.gt_area.count(gt_id)) return 0.0;
    return iou_of(o, pred_id, gt_id);
}

MatchResult match_segments(const PanopticSegmentation& pred, const PanopticSegmentation& gt) {
    pred.validate();
    gt.validate();
    Overlaps o = count_overlaps(pred, gt);
    MatchResult r;
    std::set<int> pred_matched, gt_matched;
    for (const auto& [key, inter] : o.inter) {
        const auto [p, g] = key;
        if (g == 0) continue;
        const Segment* ps = pred.find(p);
        const Segment* gs = gt.find(g);
        if (ps->category != gs->category) continue;
        const double iou = iou_of(o, p, g);
        if (iou <= 0.5) continue;
        if (pred_matched.count(p) || gt_matched.count(g)) {
            throw std::logic_error("segment matched twice at IoU > 0.5");
        }
        pred_matched.insert(p);
        gt_matched.insert(g);
        r.matches.push_back({p, g, iou});
    }
    for (const Segment& s : gt.segments) {
        if (!gt_matched.count(s.id)) r.false_negatives.push_back(s.id);
    }
    for (const Segment& s : pred.segments) {
        if (pred_matched.count(s.id)) continue;
        const int64_t area = o.pred_area.count(s.id) ? o.pred_area.at(s.id) : 0;
        const int64_t over_void = lookup(o.inter, s.id, 0);
        if (area > 0 && static_cast<double>(over_void) / area > 0.5) {
            r.void_predictions.push_back(s.id);
        } else {
            r.false_positives.push_back(s.id);
        }
    }
    return r;
}

PqAccumulator::PqAccumulator(Taxonomy taxonomy) : taxonomy_(std::move(taxonomy)) {}

void PqAccumulator::add(const PanopticSegmentation& pred, const PanopticSegmentation& gt) {
    for (const auto* seg : {&pred, &gt}) {
        for (const Segment& s : seg->segments) {
            if (!taxonomy_.contains(s.category)) {
                throw ValidationError("segment " + std::to_string(s.id) + " has unknown category " +
                                      std::to_string(s.category));
            }
        }
    }
    MatchResult m = match_segments(pred, gt);
    for (const auto& mt : m.matches) {
        auto& st = stats_[gt.find(mt.gt_id)->category];
        ++st.tp;
        st.iou_sum += mt.iou;
    }
    for (int id : m.false_negatives) ++stats_[gt.find(id)->category].fn;
    for (int id : m.false_positives) ++stats_[pred.find(id)->category].fp;
    for (const Segment& s : gt.segments) gt_categories_.insert(s.category);

    const Grid<int> ps = pred.semantic();
    const Grid<int> gs = gt.semantic();
    for (size_t i = 0; i < gs.data.size(); ++i) {
        const int g = gs.data[i];
        const int p = ps.data[i];
        if (g == 0) continue;
        if (p == g) {
            ++sem_tp_[g];
        } else {
            ++sem_fn_[g];
            if (p != 0) ++sem_fp_[p];
        }
    }
    ++images_;
}

MetricReport PqAccumulator::report() const {
    MetricReport r;
    r.images = images_;
    r.per_category = stats_;
    auto summarize = [&](int which) {  // 0 all, 1 things, 2 stuff
        PqSummary s;
        for (int cat : gt_categories_) {
            const Kind k = taxonomy_.by_id(cat).kind;
            if ((which == 1 && k != Kind::Thing) || (which == 2 && k != Kind::Stuff)) continue;
            auto it = stats_.find(cat);
            const CategoryStats st = it == stats_.end() ? CategoryStats{} : it->second;
            s.pq += st.pq();
            s.sq += st.sq();
            s.rq += st.rq();
            ++s.categories;
        }
        if (s.categories > 0) {
            s.pq *= 100.0 / s.categories;
            s.sq *= 100.0 / s.categories;
            s.rq *= 100.0 / s.categories;
        }
        return s;
    };
    r.all = summarize(0);
    r.things = summarize(1);
    r.stuff = summarize(2);
    std::set<int> cats;
    for (const auto* m : {&sem_tp_, &sem_fp_, &sem_fn_})
        for (const auto& kv : *m) cats.insert(kv.first);
    double sum = 0;
    for (int c : cats) {
        auto get = [c](const std::map<int, int64_t>& m) {
            auto it = m.find(c);
            return it == m.end() ? int64_t{0} : it->second;
        };
        const int64_t tp = get(sem_tp_), fp = get(sem_fp_), fn = get(sem_fn_);
        sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    }
    r.miou = cats.empty() ? 0.0 : 100.0 * sum / cats.size();
    return r;
}

MetricReport compute_pq(const PanopticSegmentation& pred, const PanopticSegmentation& gt, const Taxonomy& taxonomy) {
    PqAccumulator acc(taxonomy);
    acc.add(pred, gt);
    return acc.report();
}

double compute_miou(const Grid<int>& pred, const Grid<int>& gt, int ignore_label) {
    if (pred.h != gt.h || pred.w != gt.w) throw ValidationError("label maps differ in size");
    std::map<int, int64_t> tp, fp, fn;
    std::set<int> cats;
    for (size_t i = 0; i < gt.data.size(); ++i) {
        const int g = gt.data[i];
        const int p = pred.data[i];
        if (g == ignore_label) continue;
        cats.insert(g);
        if (p == g) {
            ++tp[g];
        } else {
            ++fn[g];
            if (p != ignore_label) {
                ++fp[p];
                cats.insert(p);
            }
        }
    }
    if (cats.empty()) return 0.0;
    double sum = 0;
    for (int c : cats) sum += static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c] + fn[c]);
    return 100.0 * sum / cats.size();
}

std::string report_to_json(const MetricReport& r, const Taxonomy& taxonomy) {
    using nlohmann::json;
    auto summary = [](const PqSummary& s) {
        return json{{"PQ", s.pq}, {"SQ", s.sq}, {"RQ", s.rq}, {"categories", s.categories}};
    };
    json j{{"all", summary(r.all)},
           {"things", summary(r.things)},
           {"stuff", summary(r.stuff)},
           {"mIoU", r.miou},
           {"images", r.images}};
    json per = json::object();
    for (const auto& [cat, st] : r.per_category) {
        per[std::to_string(cat)] = {{"name", taxonomy.contains(cat) ? taxonomy.by_id(cat).name : ""},
                                    {"TP", st.tp},
                                    {"FP", st.fp},
                                    {"FN", st.fn},
                                    {"iou_sum", st.iou_sum},
                                    {"PQ", 100.0 * st.pq()},
                                    {"SQ", 100.0 * st.sq()},
                                    {"RQ", 100.0 * st.rq()}};
    }
    j["per_category"] = per;
    return j.dump(2);
}

MetricReport report_from_json(const std::string& text) {
    using nlohmann::json;
    MetricReport r;
    try {
        json j = json::parse(text);
        auto summary = [](const json& s) {
            return PqSummary{s.at("PQ").get<double>(), s.at("SQ").get<double>(), s.at("RQ").get<double>(),
                             s.at("categories").get<int>()};
        };
        r.all = summary(j.at("all"));
        r.things = summary(j.at("things"));
        r.stuff = summary(j.at("stuff"));
        r.miou = j.value("mIoU", 0.0);
        r.images = j.value("images", 0);
        if (j.contains("per_category")) {
            for (const auto& [key, v] : j.at("per_category").items()) {
                CategoryStats st;
                st.tp = v.at("TP").get<int64_t>();
                st.fp = v.at("FP").get<int64_t>();
                st.fn = v.at("FN").get<int64_t>();
                st.iou_sum = v.at("iou_sum").get<double>();
                r.per_category[std::stoi(key)] = st;
            }
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed metric report: ") + e.what());
    }
    return r;
}

std::string format_table(const MetricReport& r, const Taxonomy& taxonomy) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %7s %7s %7s %6s\n", "", "PQ", "SQ", "RQ", "#cats");
    os << line;
    auto row = [&](const char* name, const PqSummary& s) {
        std::snprintf(line, sizeof line, "%-16s %7.2f %7.2f %7.2f %6d\n", name, s.pq, s.sq, s.rq, s.categories);
        os << line;
    };
    row("All", r.all);
    row("Things", r.things);
    row("Stuff", r.stuff);
    os << "\n";
    std::snprintf(line, sizeof line, "%-16s %7s %7s %7s %5s %5s %5s\n", "category", "PQ", "SQ", "RQ", "TP", "FP",
                  "FN");
    os << line;
    for (const auto& [cat, st] : r.per_category) {
        const std::string name = taxonomy.contains(cat) ? taxonomy.by_id(cat).name : std::to_string(cat);
        std::snprintf(line, sizeof line, "%-16s %7.2f %7.2f %7.2f %5lld %5lld %5lld\n", name.c_str(), 100.0 * st.pq(),
                      100.0 * st.sq(), 100.0 * st.rq(), static_cast<long long>(st.tp), static_cast<long long>(st.fp),
                      static_cast<long long>(st.fn));
        os << line;
    }
    std::snprintf(line, sizeof line, "\nmIoU %.2f over %d images\n", r.miou, r.images);
    os << line;
    return os.str();
}

bool reports_equal(const MetricReport& a, const MetricReport& b, double tol) {
    auto close = [tol](const PqSummary& x, const PqSummary& y) {
        return std::abs(x.pq - y.pq) <= tol && std::abs(x.sq - y.sq) <= tol && std::abs(x.rq - y.rq) <= tol &&
               x.categories == y.categories;
    };
    return close(a.all, b.all) && close(a.things, b.things) && close(a.stuff, b.stuff) &&
           std::abs(a.miou - b.miou) <= tol && a.images == b.images;
}

}  // namespace pfcn
