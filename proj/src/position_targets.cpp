#include "pfcn/position_targets.hpp"

#include <algorithm>
#include <cmath>

#include "pfcn/ops.hpp"

namespace pfcn {

namespace {

constexpr double kPositiveTolerance = 1e-6;

bool is_positive(double y) { return y >= 1.0 - kPositiveTolerance; }

// d(focal_term)/dp.
double focal_dp(double p, double y, const FocalParams& fp) {
    if (is_positive(y)) {
        const double q = 1.0 - p;
        return -fp.alpha * std::pow(q, fp.alpha - 1.0) * (-std::log(p)) - std::pow(q, fp.alpha) / p;
    }
    const double wneg = std::pow(1.0 - y, fp.beta);
    return wneg * (fp.alpha * std::pow(p, fp.alpha - 1.0) * (-std::log(1.0 - p)) + std::pow(p, fp.alpha) / (1.0 - p));
}

}  // namespace

int StageGeometry::stage_for_area(double area) const {
    const double scale = std::sqrt(std::max(area, 0.0));
    for (int s = 0; s < num_stages() - 1 && s < static_cast<int>(scale_bounds.size()); ++s) {
        if (scale < scale_bounds[s]) return s;
    }
    return num_stages() - 1;
}

std::optional<std::pair<double, double>> region_center(const Mask& region, CenterType type) {
    double sx = 0, sy = 0;
    int64_t n = 0;
    int x0 = region.w, x1 = -1, y0 = region.h, y1 = -1;
    for (int y = 0; y < region.h; ++y)
        for (int x = 0; x < region.w; ++x)
            if (region.at(y, x)) {
                sx += x;
                sy += y;
                ++n;
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (n == 0) return std::nullopt;
    if (type == CenterType::Box) return std::make_pair(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    return std::make_pair(sx / static_cast<double>(n), sy / static_cast<double>(n));
}

int to_stage_cell(double pixel, int stride, int cells) {
    const double c = (pixel + 0.5) / stride - 0.5;
    const int r = static_cast<int>(std::lround(c));
    return std::clamp(r, 0, cells - 1);
}

int gaussian_radius(const Mask& region, int stride) {
    int x0 = region.w, x1 = -1, y0 = region.h, y1 = -1;
    for (int y = 0; y < region.h; ++y)
        for (int x = 0; x < region.w; ++x)
            if (region.at(y, x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return 1;
    const double extent = std::min(x1 - x0 + 1, y1 - y0 + 1) / static_cast<double>(stride);
    return std::max(1, static_cast<int>(std::floor(extent / 2.0)));
}

ThingTargets make_thing_targets(const std::vector<ThingObject>& objects, const StageGeometry& geom) {
    ThingTargets t;
    for (int s = 0; s < geom.num_stages(); ++s) t.heat.emplace_back(geom.num_things, geom.stage_h(s), geom.stage_w(s));
    for (int i = 0; i < static_cast<int>(objects.size()); ++i) {
        const auto& obj = objects[i];
        if (obj.category < 0 || obj.category >= geom.num_things)
            throw InputError("thing category " + std::to_string(obj.category) + " out of range");
        const auto area = mask_area(obj.region);
        if (area == 0) {
            t.warnings.push_back("object " + std::to_string(i) + " has an empty region; skipped");
            continue;
        }
        const auto center = obj.center ? obj.center : region_center(obj.region, geom.center);
        ThingRecord r;
        r.center_x = center->first;
        r.center_y = center->second;
        r.stage = geom.stage_for_area(static_cast<double>(area));
        const int stride = geom.strides[r.stage];
        auto& heat = t.heat[r.stage];
        r.cell_x = to_stage_cell(r.center_x, stride, heat.w);
        r.cell_y = to_stage_cell(r.center_y, stride, heat.h);
        r.radius = gaussian_radius(obj.region, stride);
        r.sigma = gaussian_sigma(r.radius);
        r.category = obj.category;
        r.source = i;
        const double denom = 2.0 * r.sigma * r.sigma;
        for (int y = 0; y < heat.h; ++y)
            for (int x = 0; x < heat.w; ++x) {
                const double dx = x - r.cell_x, dy = y - r.cell_y;
                const double v = std::exp(-(dx * dx + dy * dy) / denom);
                auto& cell = heat.at(r.category, y, x);
                cell = std::max(cell, v);
            }
        t.records.push_back(r);
    }
    return t;
}

StuffTargets make_stuff_targets(const Grid<int>& label_map, const StageGeometry& geom) {
    Tensor<double> planes(geom.num_stuff + 1, label_map.h, label_map.w);
    for (int y = 0; y < label_map.h; ++y)
        for (int x = 0; x < label_map.w; ++x) {
            const int l = label_map.at(y, x);
            if (l >= 0 && l < geom.num_stuff)
                planes.at(l, y, x) = 1.0;
            else if (l == kIgnoreLabel)
                planes.at(geom.num_stuff, y, x) = 1.0;
            else if (l != kNotStuff)
                throw InputError("stuff label " + std::to_string(l) + " out of range");
        }
    StuffTargets t;
    for (int s = 0; s < geom.num_stages(); ++s) {
        const int h = geom.stage_h(s), w = geom.stage_w(s);
        Tensor<double> r = ops::bilinear_resize(planes, h, w);
        t.heat.push_back(ops::take_channels(r, 0, geom.num_stuff));
        Mask ign(h, w, 0);
        Grid<int> lab(h, w, -1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                ign.at(y, x) = r.at(geom.num_stuff, y, x) >= 0.5 ? 1 : 0;
                if (ign.at(y, x)) continue;
                int best = 0;
                for (int c = 1; c < geom.num_stuff; ++c)
                    if (r.at(c, y, x) > r.at(best, y, x)) best = c;
                if (r.at(best, y, x) >= 0.5) lab.at(y, x) = best;
            }
        t.ignore.push_back(std::move(ign));
        t.labels.push_back(std::move(lab));
    }
    return t;
}

std::vector<int> region_cells(const Mask& region, int stride, int cells_h, int cells_w) {
    std::vector<int> cells;
    for (int cy = 0; cy < cells_h; ++cy)
        for (int cx = 0; cx < cells_w; ++cx) {
            const int py = std::min(cy * stride + stride / 2, region.h - 1);
            const int px = std::min(cx * stride + stride / 2, region.w - 1);
            if (region.at(py, px)) cells.push_back(cy * cells_w + cx);
        }
    if (!cells.empty()) return cells;
    for (int cy = 0; cy < cells_h; ++cy)
        for (int cx = 0; cx < cells_w; ++cx) {
            bool hit = false;
            for (int y = cy * stride; y < std::min((cy + 1) * stride, region.h) && !hit; ++y)
                for (int x = cx * stride; x < std::min((cx + 1) * stride, region.w) && !hit; ++x)
                    hit = region.at(y, x) != 0;
            if (hit) cells.push_back(cy * cells_w + cx);
        }
    return cells;
}

double focal_term(double p, double y, const FocalParams& fp) {
    p = std::clamp(p, fp.clamp, 1.0 - fp.clamp);
    if (is_positive(y)) return std::pow(1.0 - p, fp.alpha) * -std::log(p);
    return std::pow(1.0 - y, fp.beta) * std::pow(p, fp.alpha) * -std::log(1.0 - p);
}

template <typename T>
PositionLoss<T> position_loss(const std::vector<Tensor<T>>& logits, const ThingTargets& things,
                              const StuffTargets& stuff, const PositionLossConfig& cfg) {
    PositionLoss<T> out;
    const int S = static_cast<int>(logits.size());
    if (static_cast<int>(things.heat.size()) != S || static_cast<int>(stuff.heat.size()) != S)
        throw InputError("position_loss: stage count mismatch");
    const double thing_norm =
        cfg.thing_norm == ThingNorm::Categories
            ? static_cast<double>(things.heat.front().c)
            : std::max<double>(1.0, static_cast<double>(things.records.size()));
    const auto& fp = cfg.focal;
    for (int s = 0; s < S; ++s) {
        const auto& z = logits[s];
        const auto& yt = things.heat[s];
        const auto& ys = stuff.heat[s];
        if (z.c != yt.c + ys.c || z.h != yt.h || z.w != yt.w || z.h != ys.h || z.w != ys.w)
            throw InputError("position_loss: logits and targets disagree in shape at stage " + std::to_string(s));
        Tensor<T> dz(z.c, z.h, z.w);
        const double stuff_norm = static_cast<double>(z.h) * z.w;
        for (int c = 0; c < z.c; ++c) {
            const bool is_thing = c < yt.c;
            const double norm = is_thing ? thing_norm : stuff_norm;
            for (int y = 0; y < z.h; ++y)
                for (int x = 0; x < z.w; ++x) {
                    const double zi = static_cast<double>(z.at(c, y, x));
                    if (!std::isfinite(zi)) throw TrainingError("non-finite position logit");
                    if (!is_thing && stuff.ignore[s].at(y, x)) continue;
                    const double target = is_thing ? yt.at(c, y, x) : ys.at(c - yt.c, y, x);
                    const double p = ops::sigmoid(zi);
                    const double term = focal_term(p, target, fp) / norm;
                    (is_thing ? out.thing : out.stuff) += term;
                    // Past the clamp the gradient is taken at the clamp edge
                    // rather than zeroed, so a saturated logit can recover.
                    const double pc = std::clamp(p, fp.clamp, 1.0 - fp.clamp);
                    dz.at(c, y, x) = T(focal_dp(pc, target, fp) * pc * (1.0 - pc) / norm);
                }
        }
        out.dlogits.push_back(std::move(dz));
    }
    out.total = out.thing + out.stuff;
    return out;
}

template PositionLoss<float> position_loss(const std::vector<Tensor<float>>&, const ThingTargets&,
                                           const StuffTargets&, const PositionLossConfig&);
template PositionLoss<double> position_loss(const std::vector<Tensor<double>>&, const ThingTargets&,
                                            const StuffTargets&, const PositionLossConfig&);

}  // namespace pfcn
