#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pfcn/model.hpp"
#include "pfcn/panoptic.hpp"
#include "pfcn/point_supervision.hpp"
#include "pfcn/position_targets.hpp"

namespace pfcn {

/// One supervised segment at image resolution.
struct SupervisedInstance {
    Kind kind = Kind::Thing;
    int category = 0;  // dataset category id
    int channel = 0;   // channel within its kind
    Mask region;
    std::optional<std::pair<double, double>> center;  // overrides the region center
};

/// Everything the objective needs from one image's annotation.
struct Supervision {
    int h = 0;
    int w = 0;
    std::vector<SupervisedInstance> instances;
    Grid<int> owner;  // instance index per pixel, -1 = unlabelled (ignored)
};

Supervision supervision_from_ground_truth(const PanopticSegmentation& gt, const Taxonomy& taxonomy);
Supervision supervision_from_points(const std::vector<PointAnnotation>& annotations, int h, int w, ShapeMode shape,
                                    const AugmentOptions& augment, const Taxonomy& taxonomy);

/// Mirror image of a supervision (x -> w - 1 - x).
Supervision flip_supervision(const Supervision& s);

/// Per-instance dice labels at a coarser resolution: each cell takes the
/// plurality of its stride x stride block (positive > negative > ignore on
/// ties). An instance with no positive cell gets its best-covered cell.
std::vector<Grid<uint8_t>> downsample_instance_labels(const Grid<int>& owner, int num_instances, int stride);

struct ThingSegTarget {
    int instance = 0;
    int channel = 0;
    int stage = 0;
    std::vector<int> cells;  // candidate cells on the stage grid
    Grid<uint8_t> labels;    // at encoded resolution
};

struct StuffSegTarget {
    int instance = 0;
    int channel = 0;
    int stage = 0;
    std::vector<int> cells;  // cells of the stage labelled with this channel
    Grid<uint8_t> labels;
};

struct ImageTargets {
    ThingTargets things;
    StuffTargets stuff;
    std::vector<ThingSegTarget> thing_seg;
    std::vector<StuffSegTarget> stuff_seg;
};

ImageTargets build_image_targets(const Supervision& sup, const StageGeometry& geom, int seg_stride = 4);

struct ObjectiveConfig {
    int k = 7;
    double lambda_pos = 1.0;
    double lambda_seg = 3.0;
    PositionLossConfig position;
};

/// Kernels chosen for the segmentation loss, with detached dice weights.
struct KernelSelection {
    struct Thing {
        int target = 0;  // index into ImageTargets::thing_seg
        std::vector<int> cells;
        std::vector<double> weights;
    };
    std::vector<Thing> things;
};

/// The k top-scoring cells inside each thing's region at its stage.
template <typename T>
KernelSelection select_training_kernels(const std::vector<Tensor<T>>& position_logits, const ImageTargets& targets,
                                        int num_things, int k);

struct ObjectiveValue {
    double total = 0;
    double pos_thing = 0;
    double pos_stuff = 0;
    double seg = 0;
    int thing_instances = 0;
    int stuff_instances = 0;
    int skipped = 0;  // instances without any non-ignored pixel
    /// Instance index with a non-finite dice term, or -1.
    int bad_instance = -1;
};

/// L = lambda_pos * L_pos + lambda_seg * L_seg for one image. When grad is
/// given, dL/d(outputs) times grad_scale is accumulated into it.
template <typename T>
ObjectiveValue evaluate_objective(const typename PanopticModel<T>::Output& out, const ImageTargets& targets,
                                  const KernelSelection& selection, const ObjectiveConfig& cfg, int num_things,
                                  typename PanopticModel<T>::OutputGrad* grad = nullptr, double grad_scale = 1.0);

}  // namespace pfcn
