#include "pfcn/inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "pfcn/feature_encoder.hpp"
#include "pfcn/ops.hpp"

namespace pfcn {

StitchMode parse_stitch_mode(const std::string& s) {
    if (s == "heuristic") return StitchMode::Heuristic;
    if (s == "argmax") return StitchMode::Argmax;
    throw ConfigError("unknown stitch mode '" + s + "' (expected heuristic or argmax)");
}

std::string to_string(StitchMode m) { return m == StitchMode::Heuristic ? "heuristic" : "argmax"; }

float rescore(float score, const Grid<float>& prob, float threshold) {
    double sum = 0;
    int64_t n = 0;
    for (float p : prob.data) {
        if (p >= threshold) {
            sum += p;
            ++n;
        }
    }
    if (n == 0) return score;
    return static_cast<float>(score * (sum / n));
}

namespace {

std::vector<int> order_by_score(const std::vector<MaskPrediction>& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a].score > v[b].score; });
    return idx;
}

void check_sizes(const std::vector<MaskPrediction>& a, const std::vector<MaskPrediction>& b, int& h, int& w) {
    h = -1;
    w = -1;
    for (const auto* list : {&a, &b}) {
        for (const auto& m : *list) {
            if (h < 0) {
                h = m.prob.h;
                w = m.prob.w;
            } else if (m.prob.h != h || m.prob.w != w) {
                throw InputError("stitching masks of different sizes");
            }
        }
    }
}

PanopticSegmentation empty_segmentation(int h, int w) {
    PanopticSegmentation seg;
    seg.id_map = IdMap(std::max(h, 1), std::max(w, 1), 0);
    return seg;
}

}  // namespace

PanopticSegmentation stitch_heuristic(const std::vector<MaskPrediction>& things,
                                      const std::vector<MaskPrediction>& stuff, const InferenceConfig& cfg) {
    int h, w;
    check_sizes(things, stuff, h, w);
    if (h < 0) return empty_segmentation(1, 1);
    PanopticSegmentation seg = empty_segmentation(h, w);
    const float thr = cfg.mask_threshold;
    int next_id = 1;
    std::vector<size_t> claimed;
    for (int i : order_by_score(things)) {
        const auto& m = things[i];
        if (m.score < cfg.min_thing_score) continue;
        int64_t area = 0;
        claimed.clear();
        for (size_t p = 0; p < m.prob.data.size(); ++p) {
            if (m.prob.data[p] < thr) continue;
            ++area;
            if (seg.id_map.data[p] == 0) claimed.push_back(p);
        }
        if (area == 0) continue;
        const auto got = static_cast<int64_t>(claimed.size());
        if (static_cast<double>(got) / area < cfg.keep_fraction || got < cfg.min_thing_area) continue;
        for (size_t p : claimed) seg.id_map.data[p] = next_id;
        seg.segments.push_back({next_id, m.category, Kind::Thing, m.score, got});
        ++next_id;
    }
    std::vector<int> used_stuff;
    for (int i : order_by_score(stuff)) {
        const auto& m = stuff[i];
        if (std::find(used_stuff.begin(), used_stuff.end(), m.category) != used_stuff.end()) continue;
        claimed.clear();
        for (size_t p = 0; p < m.prob.data.size(); ++p) {
            if (m.prob.data[p] >= thr && seg.id_map.data[p] == 0) claimed.push_back(p);
        }
        const auto got = static_cast<int64_t>(claimed.size());
        if (got == 0 || got < cfg.min_stuff_area) continue;
        for (size_t p : claimed) seg.id_map.data[p] = next_id;
        seg.segments.push_back({next_id, m.category, Kind::Stuff, m.score, got});
        used_stuff.push_back(m.category);
        ++next_id;
    }
    return seg;
}

PanopticSegmentation stitch_argmax(const std::vector<MaskPrediction>& things, const std::vector<MaskPrediction>& stuff,
                                   const InferenceConfig& cfg) {
    int h, w;
    check_sizes(things, stuff, h, w);
    if (h < 0) return empty_segmentation(1, 1);
    std::vector<const MaskPrediction*> all;
    for (const auto& m : things) all.push_back(&m);
    for (const auto& m : stuff) all.push_back(&m);
    const size_t npix = static_cast<size_t>(h) * w;
    std::vector<int> winner(npix, -1);
    std::vector<int64_t> area(all.size(), 0);
    for (size_t p = 0; p < npix; ++p) {
        int best = -1;
        float best_v = 0;
        for (size_t j = 0; j < all.size(); ++j) {
            const float v = all[j]->prob.data[p];
            if (best < 0 || v > best_v) {
                best = static_cast<int>(j);
                best_v = v;
            }
        }
        if (best_v >= cfg.mask_threshold) {
            winner[p] = best;
            ++area[best];
        }
    }
    PanopticSegmentation seg = empty_segmentation(h, w);
    std::vector<int> id_of(all.size(), 0);
    int next_id = 1;
    for (size_t j = 0; j < all.size(); ++j) {
        const bool is_thing = j < things.size();
        const int min_area = is_thing ? cfg.min_thing_area : cfg.min_stuff_area;
        if (area[j] == 0 || area[j] < min_area) continue;
        id_of[j] = next_id;
        seg.segments.push_back({next_id, all[j]->category, is_thing ? Kind::Thing : Kind::Stuff, all[j]->score, area[j]});
        ++next_id;
    }
    for (size_t p = 0; p < npix; ++p) {
        if (winner[p] >= 0) seg.id_map.data[p] = id_of[winner[p]];
    }
    return seg;
}

InferenceResult run_inference(const PanopticModel<float>& model, const Tensor<float>& image, const Taxonomy& taxonomy,
                              const InferenceConfig& cfg) {
    const int nthings = model.config().num_things;
    auto out = model.forward(image, nullptr);
    PositionMaps<float> maps = activate_position_logits(out.position_logits, nthings);
    PositionSet positions = extract_positions(maps, cfg.score_floor);
    auto [thing_cands, stuff_cands] = select_kernels(out.kernels, positions);

    std::vector<InstanceKernel> things = fuse_thing_kernels(thing_cands, cfg.fusion);
    std::stable_sort(things.begin(), things.end(),
                     [](const InstanceKernel& a, const InstanceKernel& b) { return a.score > b.score; });
    if (static_cast<int>(things.size()) > cfg.max_things) things.resize(std::max(cfg.max_things, 0));
    std::vector<InstanceKernel> stuff = fuse_stuff_kernels(stuff_cands);

    std::vector<std::vector<float>> vecs;
    for (const auto& k : things) vecs.push_back(k.vec);
    for (const auto& k : stuff) vecs.push_back(k.vec);
    std::vector<Grid<float>> low = produce_instances(vecs, out.encoded);

    InferenceResult r;
    for (size_t j = 0; j < vecs.size(); ++j) {
        const bool is_thing = j < things.size();
        const InstanceKernel& k = is_thing ? things[j] : stuff[j - things.size()];
        Tensor<float> t(1, low[j].h, low[j].w);
        t.data = low[j].data;
        Tensor<float> up = ops::bilinear_resize(t, image.h, image.w);
        MaskPrediction m;
        m.kind = k.kind;
        m.category = is_thing ? taxonomy.thing_id(k.category) : taxonomy.stuff_id(k.category);
        m.score = k.score;
        m.prob = Grid<float>(image.h, image.w);
        m.prob.data = std::move(up.data);
        if (is_thing && cfg.rescore) m.score = rescore(m.score, m.prob, cfg.mask_threshold);
        (is_thing ? r.things : r.stuff).push_back(std::move(m));
    }
    std::stable_sort(r.things.begin(), r.things.end(),
                     [](const MaskPrediction& a, const MaskPrediction& b) { return a.score > b.score; });
    r.h = image.h;
    r.w = image.w;
    r.panoptic = restitch(r, cfg);
    return r;
}

PanopticSegmentation restitch(const InferenceResult& r, const InferenceConfig& cfg) {
    if (r.things.empty() && r.stuff.empty()) return empty_segmentation(r.h, r.w);
    return cfg.stitch == StitchMode::Heuristic ? stitch_heuristic(r.things, r.stuff, cfg)
                                               : stitch_argmax(r.things, r.stuff, cfg);
}

PanopticSegmentation run_panoptic_inference(const PanopticModel<float>& model, const RgbImage& image,
                                            const Taxonomy& taxonomy, const InferenceConfig& cfg) {
    return run_inference(model, image_to_tensor<float>(image), taxonomy, cfg).panoptic;
}

RgbImage colorize(const PanopticSegmentation& seg, const Taxonomy& taxonomy) {
    (void)taxonomy;
    RgbImage img;
    img.h = seg.id_map.h;
    img.w = seg.id_map.w;
    img.data.assign(static_cast<size_t>(img.h) * img.w * 3, 0);
    std::vector<std::array<uint8_t, 3>> color(1, {0, 0, 0});
    int max_id = 0;
    for (const auto& s : seg.segments) max_id = std::max(max_id, s.id);
    color.assign(max_id + 1, {0, 0, 0});
    for (const auto& s : seg.segments) {
        if (s.kind == Kind::Stuff) {
            const uint8_t base = static_cast<uint8_t>(60 + 50 * (s.category % 3));
            color[s.id] = {base, static_cast<uint8_t>(base + 20), static_cast<uint8_t>(base + 10)};
        } else {
            // Golden-angle hues.
            const double hue = std::fmod(s.id * 137.508, 360.0) / 60.0;
            const int sector = static_cast<int>(hue);
            const double f = hue - sector;
            const auto hi = static_cast<uint8_t>(235), lo = static_cast<uint8_t>(40);
            const auto up = static_cast<uint8_t>(lo + f * (hi - lo)), down = static_cast<uint8_t>(hi - f * (hi - lo));
            switch (sector) {
                case 0: color[s.id] = {hi, up, lo}; break;
                case 1: color[s.id] = {down, hi, lo}; break;
                case 2: color[s.id] = {lo, hi, up}; break;
                case 3: color[s.id] = {lo, down, hi}; break;
                case 4: color[s.id] = {up, lo, hi}; break;
                default: color[s.id] = {hi, lo, down}; break;
            }
        }
    }
    for (size_t p = 0; p < seg.id_map.data.size(); ++p) {
        const int id = seg.id_map.data[p];
        const auto& c = (id >= 0 && id <= max_id) ? color[id] : color[0];
        for (int k = 0; k < 3; ++k) img.data[p * 3 + k] = c[k];
    }
    return img;
}

}  // namespace pfcn
