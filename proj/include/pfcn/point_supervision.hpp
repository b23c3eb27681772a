#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pfcn/losses.hpp"
#include "pfcn/panoptic.hpp"

namespace pfcn {

struct Point {
    int x = 0;
    int y = 0;
    bool operator==(const Point&) const = default;
};

/// n random points placed inside one thing or stuff segment.
struct PointAnnotation {
    int instance_id = 0;
    int category = 0;
    Kind kind = Kind::Thing;
    std::vector<Point> points;
    int n = 0;
    double boundary_ratio = 0;
};

/// Seconds to annotate one instance with n random points at 0.9 s per point.
inline double annotation_cost_seconds(int n) { return 0.9 * n; }

/// Mask pixels with at least one 8-neighbour outside the mask or the image.
std::vector<Point> boundary_pixels(const Mask& mask);

/// ceil(boundary_ratio * n) points from the boundary set, the rest from the
/// interior, without replacement. Takes every pixel when the mask has fewer
/// than n pixels (and sets *short_mask).
std::vector<Point> sample_points(const Mask& mask, int n, double boundary_ratio, uint64_t seed,
                                 bool* short_mask = nullptr);

/// Arithmetic mean of the points, (x, y).
std::pair<double, double> simulate_center(const std::vector<Point>& points);

using Polygon = std::vector<Point>;

/// Convex hull (counter-clockwise in the x-right/y-up sense, collinear points dropped).
Polygon convex_hull(std::vector<Point> points);

/// k-nearest-neighbour concave hull with adaptive k starting at k_start. Falls
/// back to the convex hull when no simple enclosing polygon is found.
Polygon concave_hull(const std::vector<Point>& points, int k_start = 3);

/// Pixels whose centers lie inside or on the polygon.
Mask rasterize_polygon(const Polygon& poly, int h, int w);

/// Filled convex hull; for fewer than three distinct or collinear points, the
/// one-pixel dilation of the rasterized point set / segment.
Mask convex_target(const std::vector<Point>& points, int h, int w);
Mask concave_target(const std::vector<Point>& points, int h, int w, int k_start = 3);

/// Iterated dilation with a 3x3 square structuring element.
Mask dilate_target(const Mask& region, int iterations);

enum class ShapeMode { Convex, Concave };
ShapeMode parse_shape_mode(const std::string& s);
std::string to_string(ShapeMode m);

struct AugmentOptions {
    bool enabled = true;
    int iterations = 2;
    bool things = false;  // also dilate thing targets
};

inline constexpr int kPointIgnore = -1;

struct PointTargets {
    Grid<int> labels;  // owning annotation index, or kPointIgnore
    std::vector<std::pair<double, double>> centers;
    std::vector<Mask> regions;
};

struct PointTargetResult {
    PointTargets targets;
    /// Image-resolution dice targets: positives are the instance's own region,
    /// negatives every other region, ignore the rest.
    std::vector<SegmentationTarget> segmentation;
};

PointTargetResult build_training_targets(const std::vector<PointAnnotation>& annotations, int h, int w,
                                         ShapeMode shape, const AugmentOptions& augment, const Taxonomy& taxonomy);

/// Samples P_n annotations for every segment of a ground-truth segmentation.
std::vector<PointAnnotation> simulate_annotations(const PanopticSegmentation& gt, int n, double boundary_ratio,
                                                  uint64_t seed);

struct PointAnnotationFile {
    int n = 0;
    double boundary_ratio = 0;
    uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<std::vector<PointAnnotation>> images;
};

void write_point_annotations(const std::filesystem::path& path, const PointAnnotationFile& file);
PointAnnotationFile read_point_annotations(const std::filesystem::path& path);

}  // namespace pfcn
