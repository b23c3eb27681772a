#include "pfcn/objective.hpp"

#include <algorithm>
#include <cmath>

#include "pfcn/feature_encoder.hpp"
#include "pfcn/losses.hpp"
#include "pfcn/ops.hpp"

namespace pfcn {

Supervision supervision_from_ground_truth(const PanopticSegmentation& gt, const Taxonomy& taxonomy) {
    gt.validate();
    Supervision s;
    s.h = gt.id_map.h;
    s.w = gt.id_map.w;
    s.owner = Grid<int>(s.h, s.w, -1);
    std::vector<int> index_of_id;
    for (const Segment& seg : gt.segments) {
        if (!taxonomy.contains(seg.category)) {
            throw ValidationError("segment " + std::to_string(seg.id) + " has unknown category " +
                                  std::to_string(seg.category));
        }
        const int idx = static_cast<int>(s.instances.size());
        if (seg.id >= static_cast<int>(index_of_id.size())) index_of_id.resize(seg.id + 1, -1);
        index_of_id[seg.id] = idx;
        SupervisedInstance inst;
        inst.kind = seg.kind;
        inst.category = seg.category;
        inst.channel = taxonomy.channel(seg.category);
        inst.region = Mask(s.h, s.w, 0);
        s.instances.push_back(std::move(inst));
    }
    for (size_t i = 0; i < gt.id_map.data.size(); ++i) {
        const int id = gt.id_map.data[i];
        if (id == 0) continue;
        const int idx = index_of_id[id];
        s.owner.data[i] = idx;
        s.instances[idx].region.data[i] = 1;
    }
    return s;
}

Supervision supervision_from_points(const std::vector<PointAnnotation>& annotations, int h, int w, ShapeMode shape,
                                    const AugmentOptions& augment, const Taxonomy& taxonomy) {
    PointTargetResult r = build_training_targets(annotations, h, w, shape, augment, taxonomy);
    Supervision s;
    s.h = h;
    s.w = w;
    s.owner = r.targets.labels;
    for (size_t j = 0; j < annotations.size(); ++j) {
        SupervisedInstance inst;
        inst.kind = annotations[j].kind;
        inst.category = annotations[j].category;
        inst.channel = taxonomy.channel(inst.category);
        inst.region = r.targets.regions[j];
        inst.center = r.targets.centers[j];
        s.instances.push_back(std::move(inst));
    }
    return s;
}

Supervision flip_supervision(const Supervision& s) {
    Supervision f = s;
    auto flip_grid = [](auto& g) {
        for (int y = 0; y < g.h; ++y) std::reverse(g.data.begin() + static_cast<size_t>(y) * g.w,
                                                   g.data.begin() + static_cast<size_t>(y + 1) * g.w);
    };
    flip_grid(f.owner);
    for (auto& inst : f.instances) {
        flip_grid(inst.region);
        if (inst.center) inst.center->first = s.w - 1 - inst.center->first;
    }
    return f;
}

std::vector<Grid<uint8_t>> downsample_instance_labels(const Grid<int>& owner, int num_instances, int stride) {
    const int ch = (owner.h + stride - 1) / stride;
    const int cw = (owner.w + stride - 1) / stride;
    std::vector<Grid<uint8_t>> out(num_instances, Grid<uint8_t>(ch, cw, kSegIgnore));
    std::vector<int> counts(num_instances);
    // Best-covered cell per instance, for the no-positive fallback.
    std::vector<int> best_count(num_instances, 0), best_cell(num_instances, -1);
    for (int cy = 0; cy < ch; ++cy) {
        for (int cx = 0; cx < cw; ++cx) {
            std::fill(counts.begin(), counts.end(), 0);
            int assigned = 0, ignored = 0;
            for (int y = cy * stride; y < std::min(owner.h, (cy + 1) * stride); ++y) {
                for (int x = cx * stride; x < std::min(owner.w, (cx + 1) * stride); ++x) {
                    const int o = owner.at(y, x);
                    if (o < 0) {
                        ++ignored;
                    } else {
                        ++counts[o];
                        ++assigned;
                    }
                }
            }
            const int cell = cy * cw + cx;
            for (int j = 0; j < num_instances; ++j) {
                const int own = counts[j];
                const int other = assigned - own;
                uint8_t label = kSegIgnore;
                if (own > 0 && own >= other && own >= ignored) label = kSegPositive;
                else if (other > 0 && other >= ignored) label = kSegNegative;
                out[j].data[cell] = label;
                if (own > best_count[j]) {
                    best_count[j] = own;
                    best_cell[j] = cell;
                }
            }
        }
    }
    for (int j = 0; j < num_instances; ++j) {
        const bool any = std::any_of(out[j].data.begin(), out[j].data.end(), [](uint8_t v) { return v == kSegPositive; });
        if (!any && best_cell[j] >= 0) out[j].data[best_cell[j]] = kSegPositive;
    }
    return out;
}

ImageTargets build_image_targets(const Supervision& sup, const StageGeometry& geom, int seg_stride) {
    ImageTargets t;
    const int n = static_cast<int>(sup.instances.size());
    std::vector<Grid<uint8_t>> labels = downsample_instance_labels(sup.owner, n, seg_stride);

    std::vector<ThingObject> objects;
    std::vector<int> thing_instance;
    Grid<int> stuff_map(sup.h, sup.w, kIgnoreLabel);
    for (size_t i = 0; i < sup.owner.data.size(); ++i) {
        const int o = sup.owner.data[i];
        if (o < 0) continue;
        const auto& inst = sup.instances[o];
        stuff_map.data[i] = inst.kind == Kind::Stuff ? inst.channel : kNotStuff;
    }
    for (int j = 0; j < n; ++j) {
        const auto& inst = sup.instances[j];
        if (inst.kind != Kind::Thing) continue;
        objects.push_back({inst.region, inst.channel, inst.center});
        thing_instance.push_back(j);
    }
    t.things = make_thing_targets(objects, geom);
    t.stuff = make_stuff_targets(stuff_map, geom);

    for (const ThingRecord& r : t.things.records) {
        const int j = thing_instance[r.source];
        ThingSegTarget st;
        st.instance = j;
        st.channel = r.category;
        st.stage = r.stage;
        st.cells = region_cells(sup.instances[j].region, geom.strides[r.stage], geom.stage_h(r.stage),
                                geom.stage_w(r.stage));
        st.labels = labels[j];
        t.thing_seg.push_back(std::move(st));
    }
    // Stuff instance per channel (at most one per category).
    std::vector<int> stuff_instance(geom.num_stuff, -1);
    for (int j = 0; j < n; ++j) {
        if (sup.instances[j].kind == Kind::Stuff) stuff_instance[sup.instances[j].channel] = j;
    }
    for (int s = 0; s < geom.num_stages(); ++s) {
        const Grid<int>& lab = t.stuff.labels[s];
        for (int c = 0; c < geom.num_stuff; ++c) {
            if (stuff_instance[c] < 0) continue;
            StuffSegTarget st;
            st.instance = stuff_instance[c];
            st.channel = c;
            st.stage = s;
            for (int i = 0; i < static_cast<int>(lab.data.size()); ++i) {
                if (lab.data[i] == c) st.cells.push_back(i);
            }
            if (st.cells.empty()) continue;
            st.labels = labels[st.instance];
            t.stuff_seg.push_back(std::move(st));
        }
    }
    return t;
}

template <typename T>
KernelSelection select_training_kernels(const std::vector<Tensor<T>>& position_logits, const ImageTargets& targets,
                                        int num_things, int k) {
    (void)num_things;
    KernelSelection sel;
    for (int i = 0; i < static_cast<int>(targets.thing_seg.size()); ++i) {
        const ThingSegTarget& t = targets.thing_seg[i];
        if (t.cells.empty()) continue;
        auto plane = position_logits[t.stage].plane(t.channel);
        KernelSelection::Thing th;
        th.target = i;
        th.cells = top_k_cells<T>(plane, t.cells, k);
        std::vector<double> scores;
        for (int c : th.cells) scores.push_back(ops::sigmoid(static_cast<double>(plane[c])));
        th.weights = score_weights(scores);
        sel.things.push_back(std::move(th));
    }
    return sel;
}

template <typename T>
ObjectiveValue evaluate_objective(const typename PanopticModel<T>::Output& out, const ImageTargets& targets,
                                  const KernelSelection& selection, const ObjectiveConfig& cfg, int num_things,
                                  typename PanopticModel<T>::OutputGrad* grad, double grad_scale) {
    (void)num_things;
    ObjectiveValue v;
    PositionLoss<T> pl = position_loss(out.position_logits, targets.things, targets.stuff, cfg.position);
    v.pos_thing = pl.thing;
    v.pos_stuff = pl.stuff;

    const Tensor<T>& fe = out.encoded;
    const int ce = fe.c;
    // Stack every kernel that enters the dice loss.
    struct Entry {
        int instance_slot;
        double weight;
        uint8_t const* labels;
        int stage;
        std::vector<int> cells;  // one cell (thing) or the averaged cells (stuff)
    };
    std::vector<Entry> entries;
    int slot = 0;
    for (const auto& th : selection.things) {
        const ThingSegTarget& t = targets.thing_seg[th.target];
        for (size_t q = 0; q < th.cells.size(); ++q) {
            entries.push_back({slot, th.weights[q], t.labels.data.data(), t.stage, {th.cells[q]}});
        }
        ++slot;
    }
    v.thing_instances = slot;
    for (const auto& st : targets.stuff_seg) {
        entries.push_back({slot, 1.0, st.labels.data.data(), st.stage, st.cells});
        ++slot;
    }
    v.stuff_instances = slot - v.thing_instances;
    const int instances = slot;
    const int n = static_cast<int>(entries.size());

    std::vector<T> kernels(static_cast<size_t>(n) * ce, T(0));
    for (int e = 0; e < n; ++e) {
        const auto& g = out.kernels[entries[e].stage];
        const double inv = 1.0 / entries[e].cells.size();
        for (int c = 0; c < ce; ++c) {
            double acc = 0;
            auto plane = g.plane(c);
            for (int cell : entries[e].cells) acc += plane[cell];
            kernels[static_cast<size_t>(e) * ce + c] = T(acc * inv);
        }
    }

    const double seg_norm = instances > 0 ? 1.0 / instances : 0.0;
    const size_t plane = fe.plane_size();
    Tensor<T> dlogits;
    if (n > 0) {
        Tensor<T> logits = instance_logits<T>(kernels, n, fe);
        if (grad) dlogits = Tensor<T>(n, fe.h, fe.w);
        std::vector<T> p(plane), dp(plane);
        std::vector<bool> skipped_slot(instances, false);
        for (int e = 0; e < n; ++e) {
            auto z = logits.plane(e);
            for (size_t i = 0; i < plane; ++i) p[i] = ops::sigmoid(z[i]);
            std::fill(dp.begin(), dp.end(), T(0));
            const double scale = entries[e].weight * seg_norm;
            DiceResult d = dice_loss<T>(p, std::span<const uint8_t>(entries[e].labels, plane),
                                        grad ? std::span<T>(dp) : std::span<T>(), scale);
            if (!std::isfinite(d.loss) && v.bad_instance < 0) v.bad_instance = entries[e].instance_slot;
            if (d.skipped) skipped_slot[entries[e].instance_slot] = true;
            v.seg += entries[e].weight * d.loss * seg_norm;
            if (grad) {
                auto dz = dlogits.plane(e);
                const double gs = cfg.lambda_seg * grad_scale;
                for (size_t i = 0; i < plane; ++i) dz[i] = T(dp[i] * p[i] * (T(1) - p[i]) * gs);
            }
        }
        v.skipped = static_cast<int>(std::count(skipped_slot.begin(), skipped_slot.end(), true));
    }
    v.total = cfg.lambda_pos * pl.total + cfg.lambda_seg * v.seg;

    if (grad) {
        const int S = static_cast<int>(out.position_logits.size());
        if (grad->position_logits.empty()) {
            for (int s = 0; s < S; ++s) {
                const auto& z = out.position_logits[s];
                grad->position_logits.emplace_back(z.c, z.h, z.w);
            }
        }
        if (grad->kernels.empty()) {
            for (const auto& g : out.kernels) grad->kernels.emplace_back(g.c, g.h, g.w);
        }
        if (grad->encoded.empty()) grad->encoded = Tensor<T>(fe.c, fe.h, fe.w);
        const double gp = cfg.lambda_pos * grad_scale;
        for (int s = 0; s < S; ++s) {
            auto& dst = grad->position_logits[s].data;
            const auto& src = pl.dlogits[s].data;
            for (size_t i = 0; i < dst.size(); ++i) dst[i] += T(src[i] * gp);
        }
        if (n > 0) {
            std::vector<T> dk(static_cast<size_t>(n) * ce, T(0));
            instance_logits_backward<T>(kernels, n, fe, dlogits, dk, grad->encoded);
            for (int e = 0; e < n; ++e) {
                auto& dg = grad->kernels[entries[e].stage];
                const double inv = 1.0 / entries[e].cells.size();
                for (int c = 0; c < ce; ++c) {
                    const T d = T(dk[static_cast<size_t>(e) * ce + c] * inv);
                    auto pl2 = dg.plane(c);
                    for (int cell : entries[e].cells) pl2[cell] += d;
                }
            }
        }
    }
    return v;
}

template KernelSelection select_training_kernels(const std::vector<Tensor<float>>&, const ImageTargets&, int, int);
template KernelSelection select_training_kernels(const std::vector<Tensor<double>>&, const ImageTargets&, int, int);
template ObjectiveValue evaluate_objective<float>(const PanopticModel<float>::Output&, const ImageTargets&,
                                                  const KernelSelection&, const ObjectiveConfig&, int,
                                                  PanopticModel<float>::OutputGrad*, double);
template ObjectiveValue evaluate_objective<double>(const PanopticModel<double>::Output&, const ImageTargets&,
                                                   const KernelSelection&, const ObjectiveConfig&, int,
                                                   PanopticModel<double>::OutputGrad*, double);

}  // namespace pfcn
