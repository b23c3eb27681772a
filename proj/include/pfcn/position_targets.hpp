#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pfcn/tensor.hpp"

namespace pfcn {

enum class CenterType { Mass, Box };

/// Label values for stuff label maps besides stuff channel indices.
inline constexpr int kNotStuff = -1;
inline constexpr int kIgnoreLabel = -2;

/// How an input image maps onto the pyramid stages.
struct StageGeometry {
    int image_h = 128;
    int image_w = 128;
    std::vector<int> strides{4, 8, 16};
    /// Upper bounds on sqrt(region area) for every stage but the last.
    std::vector<double> scale_bounds{32.0, 64.0};
    int num_things = 3;
    int num_stuff = 2;
    CenterType center = CenterType::Mass;

    int num_stages() const { return static_cast<int>(strides.size()); }
    int stage_h(int s) const { return (image_h + strides[s] - 1) / strides[s]; }
    int stage_w(int s) const { return (image_w + strides[s] - 1) / strides[s]; }
    int stage_for_area(double area) const;
};

struct ThingObject {
    Mask region;     // image resolution
    int category = 0;  // thing channel
    /// Overrides the region-derived center (point supervision). Image pixels (x, y).
    std::optional<std::pair<double, double>> center;
};

struct ThingRecord {
    double center_x = 0, center_y = 0;  // image pixels
    int stage = 0;
    int cell_x = 0, cell_y = 0;  // rounded center on the stage grid
    int radius = 1;
    double sigma = 1;
    int category = 0;
    int source = 0;  // index into the input object list
};

struct ThingTargets {
    std::vector<Tensor<double>> heat;  // per stage (N_th, h, w)
    std::vector<ThingRecord> records;
    std::vector<std::string> warnings;
};

struct StuffTargets {
    std::vector<Tensor<double>> heat;  // per stage (N_st, h, w)
    std::vector<Mask> ignore;          // per stage, 1 = excluded from the loss
    std::vector<Grid<int>> labels;     // per stage dominant stuff channel (>= 0.5) or -1
};

/// Mass (or box) center of a region in image pixels; nullopt for an empty region.
std::optional<std::pair<double, double>> region_center(const Mask& region, CenterType type);

/// Image pixel coordinate to the nearest cell of a stage with the given stride.
int to_stage_cell(double pixel, int stride, int cells);

/// Gaussian radius from the region's extent on the stage grid: half the smaller
/// side of the bounding box in cells, at least 1.
int gaussian_radius(const Mask& region, int stride);

inline double gaussian_sigma(int radius) { return (2.0 * radius + 1.0) / 3.0; }

ThingTargets make_thing_targets(const std::vector<ThingObject>& objects, const StageGeometry& geom);

/// label_map holds a stuff channel, kNotStuff or kIgnoreLabel per pixel.
StuffTargets make_stuff_targets(const Grid<int>& label_map, const StageGeometry& geom);

/// Cells of a stage whose center pixel lies in the region; if none do, every
/// cell that overlaps the region.
std::vector<int> region_cells(const Mask& region, int stride, int cells_h, int cells_w);

struct FocalParams {
    double alpha = 2.0;
    double beta = 4.0;
    double clamp = 1e-4;
};

/// Penalty-reduced pixel-wise focal term for probability p and target y.
double focal_term(double p, double y, const FocalParams& fp);

enum class ThingNorm { Categories, Instances };

struct PositionLossConfig {
    FocalParams focal;
    ThingNorm thing_norm = ThingNorm::Categories;
};

template <typename T>
struct PositionLoss {
    double thing = 0;
    double stuff = 0;
    double total = 0;
    std::vector<Tensor<T>> dlogits;  // per stage, same layout as the logits
};

/// Focal position loss over all stages. logits[s] is (N_th + N_st, h, w).
template <typename T>
PositionLoss<T> position_loss(const std::vector<Tensor<T>>& logits, const ThingTargets& things,
                              const StuffTargets& stuff, const PositionLossConfig& cfg);

}  // namespace pfcn
