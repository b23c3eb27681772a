#pragma once

// Random small training instances for objective-level gradient checks:
// a synthetic scene of 32 to 64 pixels (encoded grid 8x8 to 16x16), its
// targets, and random network outputs of the matching shapes.

#include <random>
#include <vector>

#include "pfcn/gradcheck.hpp"
#include "pfcn/objective.hpp"
#include "pfcn/synth_data.hpp"

namespace testutil {

struct ObjectiveInstance {
    pfcn::StageGeometry geom;
    pfcn::ImageTargets targets;
    pfcn::PanopticModel<double>::Output out;
    pfcn::KernelSelection selection;
    int num_things = 3;
    bool points = false;
};

inline ObjectiveInstance make_objective_instance(uint64_t seed, int kernel_dim = 6) {
    std::mt19937_64 rng(seed);
    ObjectiveInstance inst;
    const int size = 32 + 16 * std::uniform_int_distribution<int>(0, 2)(rng);
    pfcn::SceneSpec spec;
    spec.image_size = size;
    spec.min_objects = 1;
    spec.max_objects = 3;
    spec.min_radius = 4;
    spec.max_radius = size / 5;
    spec.seed = seed;
    pfcn::Scene scene = pfcn::generate_scene(spec, 0);
    const auto tax = pfcn::Taxonomy::synthetic();

    inst.points = seed % 2 == 1;
    pfcn::Supervision sup;
    if (inst.points) {
        auto ann = pfcn::simulate_annotations(scene.gt, 10, 0.0, seed);
        sup = pfcn::supervision_from_points(ann, size, size, pfcn::ShapeMode::Concave, pfcn::AugmentOptions{}, tax);
    } else {
        sup = pfcn::supervision_from_ground_truth(scene.gt, tax);
    }
    inst.geom.image_h = inst.geom.image_w = size;
    inst.geom.scale_bounds = {12.0, 20.0};  // spread the few objects over the stages
    inst.targets = pfcn::build_image_targets(sup, inst.geom);

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto fill = [&](int c, int h, int w, double scale) {
        pfcn::Tensor<double> t(c, h, w);
        for (auto& v : t.data) v = scale * u(rng);
        return t;
    };
    for (int s = 0; s < inst.geom.num_stages(); ++s) {
        inst.out.position_logits.push_back(fill(5, inst.geom.stage_h(s), inst.geom.stage_w(s), 3.0));
        inst.out.kernels.push_back(fill(kernel_dim, inst.geom.stage_h(s), inst.geom.stage_w(s), 1.0));
    }
    inst.out.encoded = fill(kernel_dim, size / 4, size / 4, 1.0);
    inst.selection = pfcn::select_training_kernels<double>(inst.out.position_logits, inst.targets, 3, 7);
    return inst;
}

/// Flattens every network output into one parameter vector (logits, kernels, encoded).
inline std::vector<double> flatten_outputs(const pfcn::PanopticModel<double>::Output& out) {
    std::vector<double> p;
    for (const auto& t : out.position_logits) p.insert(p.end(), t.data.begin(), t.data.end());
    for (const auto& t : out.kernels) p.insert(p.end(), t.data.begin(), t.data.end());
    p.insert(p.end(), out.encoded.data.begin(), out.encoded.data.end());
    return p;
}

inline void unflatten_outputs(std::span<const double> p, pfcn::PanopticModel<double>::Output& out) {
    size_t i = 0;
    auto take = [&](pfcn::Tensor<double>& t) {
        std::copy(p.begin() + i, p.begin() + i + t.size(), t.data.begin());
        i += t.size();
    };
    for (auto& t : out.position_logits) take(t);
    for (auto& t : out.kernels) take(t);
    take(out.encoded);
}

/// The objective under cfg as a function of the flattened outputs. The
/// kernel selection stays fixed, as it does within one training step.
inline pfcn::LossFunction objective_function(const ObjectiveInstance& inst, const pfcn::ObjectiveConfig& cfg) {
    return [&inst, cfg](std::span<const double> p, std::span<double> grad) {
        auto out = inst.out;
        unflatten_outputs(p, out);
        if (grad.empty())
            return pfcn::evaluate_objective<double>(out, inst.targets, inst.selection, cfg, inst.num_things).total;
        pfcn::PanopticModel<double>::OutputGrad g;
        const auto v =
            pfcn::evaluate_objective<double>(out, inst.targets, inst.selection, cfg, inst.num_things, &g, 1.0);
        // Missing entries mean zero gradient.
        auto zeros_like = [](const pfcn::Tensor<double>& t) { return pfcn::Tensor<double>(t.c, t.h, t.w); };
        g.position_logits.resize(out.position_logits.size());
        g.kernels.resize(out.kernels.size());
        for (size_t s = 0; s < out.position_logits.size(); ++s) {
            if (g.position_logits[s].empty()) g.position_logits[s] = zeros_like(out.position_logits[s]);
            if (g.kernels[s].empty()) g.kernels[s] = zeros_like(out.kernels[s]);
        }
        if (g.encoded.empty()) g.encoded = zeros_like(out.encoded);
        pfcn::PanopticModel<double>::Output as_out;
        as_out.position_logits = g.position_logits;
        as_out.kernels = g.kernels;
        as_out.encoded = g.encoded;
        auto flat = flatten_outputs(as_out);
        std::copy(flat.begin(), flat.end(), grad.begin());
        return v.total;
    };
}

}  // namespace testutil
