#include "pfcn/point_supervision.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

namespace pfcn {

namespace {

int64_t cross(const Point& o, const Point& a, const Point& b) {
    return static_cast<int64_t>(a.x - o.x) * (b.y - o.y) - static_cast<int64_t>(a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point& p, const Point& a, const Point& b) {
    return cross(a, b, p) == 0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

int sign(int64_t v) { return (v > 0) - (v < 0); }

// Closed-segment intersection, touching included.
bool segments_intersect(const Point& a, const Point& b, const Point& c, const Point& d) {
    const int d1 = sign(cross(c, d, a));
    const int d2 = sign(cross(c, d, b));
    const int d3 = sign(cross(a, b, c));
    const int d4 = sign(cross(a, b, d));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    return (d1 == 0 && on_segment(a, c, d)) || (d2 == 0 && on_segment(b, c, d)) ||
           (d3 == 0 && on_segment(c, a, b)) || (d4 == 0 && on_segment(d, a, b));
}

bool inside_or_on(const Polygon& poly, const Point& p) {
    const size_t n = poly.size();
    bool inside = false;
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point& a = poly[i];
        const Point& b = poly[j];
        if (on_segment(p, a, b)) return true;
        if ((a.y > p.y) != (b.y > p.y)) {
            // x coordinate of the crossing compared exactly via cross product sign.
            const int64_t c = cross(a, b, p);
            if ((c > 0) == (b.y > a.y)) inside = !inside;
        }
    }
    return inside;
}

std::vector<Point> unique_points(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

bool all_collinear(const std::vector<Point>& pts) {
    for (size_t i = 2; i < pts.size(); ++i) {
        if (cross(pts[0], pts[1], pts[i]) != 0) return false;
    }
    return true;
}

// Integer line between two pixels.
void draw_segment(Mask& m, Point a, const Point& b) {
    const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
    const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (m.in_bounds(a.y, a.x)) m.at(a.y, a.x) = 1;
        if (a.x == b.x && a.y == b.y) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; a.x += sx; }
        if (e2 <= dx) { err += dx; a.y += sy; }
    }
}

Mask degenerate_target(const std::vector<Point>& pts, int h, int w) {
    Mask m(h, w, 0);
    if (pts.empty()) return m;
    if (pts.size() == 1) {
        draw_segment(m, pts[0], pts[0]);
    } else {
        // Extreme points along the common line.
        auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
            return a.x != b.x ? a.x < b.x : a.y < b.y;
        });
        draw_segment(m, *lo, *hi);
    }
    return dilate_target(m, 1);
}

double heading(const Point& from, const Point& to) {
    return std::atan2(static_cast<double>(to.y - from.y), static_cast<double>(to.x - from.x));
}

double wrap_angle(double a) {
    while (a <= -std::numbers::pi) a += 2 * std::numbers::pi;
    while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
    return a;
}

// One attempt of the k-nearest-neighbour walk; empty result when it fails.
Polygon knn_hull_attempt(const std::vector<Point>& pts, int k) {
    const Point first = pts[0];  // pts sorted by (y, x): lowest y first
    std::vector<Point> pool(pts.begin() + 1, pts.end());
    Polygon hull{first};
    Point current = first;
    double prev = 0.0;
    bool first_returned = false;
    bool closed = false;
    for (int step = 2;; ++step) {
        if (step == 5 && !first_returned) {
            pool.push_back(first);
            first_returned = true;
        }
        if (pool.empty()) break;
        std::vector<Point> near = pool;
        const int kk = std::min<int>(k, static_cast<int>(near.size()));
        auto dist = [&](const Point& p) {
            return static_cast<int64_t>(p.x - current.x) * (p.x - current.x) +
                   static_cast<int64_t>(p.y - current.y) * (p.y - current.y);
        };
        std::partial_sort(near.begin(), near.begin() + kk, near.end(), [&](const Point& a, const Point& b) {
            const int64_t da = dist(a), db = dist(b);
            if (da != db) return da < db;
            return a.y != b.y ? a.y < b.y : a.x < b.x;
        });
        near.resize(kk);
        // Sharpest clockwise turn first.
        std::stable_sort(near.begin(), near.end(), [&](const Point& a, const Point& b) {
            return wrap_angle(heading(current, a) - prev) < wrap_angle(heading(current, b) - prev);
        });
        bool found = false;
        Point next{};
        for (const Point& cand : near) {
            const bool closing = cand == first;
            bool hit = false;
            // Edges (hull[m], hull[m+1]) except the one ending at current and,
            // when closing, the one starting at first.
            for (size_t m = closing ? 1 : 0; m + 2 < hull.size() && !hit; ++m) {
                hit = segments_intersect(current, cand, hull[m], hull[m + 1]);
            }
            if (!hit) {
                next = cand;
                found = true;
                break;
            }
        }
        if (!found) return {};
        if (next == first) {
            closed = true;
            break;
        }
        prev = heading(current, next);
        hull.push_back(next);
        pool.erase(std::find(pool.begin(), pool.end(), next));
        current = next;
    }
    if (hull.size() < 3) return {};
    if (!closed) {
        // Implicit closing edge must not cross the interior edges.
        const size_t n = hull.size();
        for (size_t m = 1; m + 2 < n; ++m) {
            if (segments_intersect(hull[n - 1], first, hull[m], hull[m + 1])) return {};
        }
    }
    for (const Point& p : pts) {
        if (!inside_or_on(hull, p)) return {};
    }
    return hull;
}

}  // namespace

std::vector<Point> boundary_pixels(const Mask& mask) {
    std::vector<Point> out;
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (!mask.at(y, x)) continue;
            bool edge = false;
            for (int dy = -1; dy <= 1 && !edge; ++dy) {
                for (int dx = -1; dx <= 1 && !edge; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int yy = y + dy, xx = x + dx;
                    edge = !mask.in_bounds(yy, xx) || !mask.at(yy, xx);
                }
            }
            if (edge) out.push_back({x, y});
        }
    }
    return out;
}

std::vector<Point> sample_points(const Mask& mask, int n, double boundary_ratio, uint64_t seed, bool* short_mask) {
    if (n < 1) throw ConfigError("number of points must be at least 1, got " + std::to_string(n));
    if (!(boundary_ratio >= 0.0 && boundary_ratio <= 1.0)) {
        throw ConfigError("boundary ratio must lie in [0, 1], got " + std::to_string(boundary_ratio));
    }
    std::vector<Point> boundary = boundary_pixels(mask);
    Mask is_boundary(mask.h, mask.w, 0);
    for (const Point& p : boundary) is_boundary.at(p.y, p.x) = 1;
    std::vector<Point> interior;
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x) && !is_boundary.at(y, x)) interior.push_back({x, y});
        }
    }
    const int total = static_cast<int>(boundary.size() + interior.size());
    if (short_mask) *short_mask = total < n;
    if (total <= n) {
        std::vector<Point> all = boundary;
        all.insert(all.end(), interior.begin(), interior.end());
        return all;
    }
    int nb = static_cast<int>(std::ceil(boundary_ratio * n - 1e-9));
    nb = std::min(nb, static_cast<int>(boundary.size()));
    int ni = n - nb;
    if (ni > static_cast<int>(interior.size())) {
        ni = static_cast<int>(interior.size());
        nb = n - ni;
    }
    std::mt19937_64 rng(seed);
    std::vector<Point> out;
    out.reserve(n);
    std::sample(boundary.begin(), boundary.end(), std::back_inserter(out), nb, rng);
    std::sample(interior.begin(), interior.end(), std::back_inserter(out), ni, rng);
    return out;
}

std::pair<double, double> simulate_center(const std::vector<Point>& points) {
    if (points.empty()) throw InputError("cannot compute the center of an empty point set");
    double sx = 0, sy = 0;
    for (const Point& p : points) {
        sx += p.x;
        sy += p.y;
    }
    return {sx / points.size(), sy / points.size()};
}

Polygon convex_hull(std::vector<Point> points) {
    points = unique_points(std::move(points));
    std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    if (points.size() < 3) return points;
    Polygon hull(2 * points.size());
    size_t k = 0;
    for (const Point& p : points) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);
    return hull;
}

Polygon concave_hull(const std::vector<Point>& points, int k_start) {
    std::vector<Point> pts = unique_points(points);
    if (pts.size() < 4 || all_collinear(pts)) return convex_hull(pts);
    const int max_k = static_cast<int>(pts.size()) - 1;
    for (int k = std::max(3, k_start); k <= max_k; ++k) {
        Polygon hull = knn_hull_attempt(pts, k);
        if (!hull.empty()) return hull;
    }
    return convex_hull(pts);
}

Mask rasterize_polygon(const Polygon& poly, int h, int w) {
    Mask m(h, w, 0);
    if (poly.size() < 3) return m;
    int x0 = w, x1 = -1, y0 = h, y1 = -1;
    for (const Point& p : poly) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, w - 1);
    y1 = std::min(y1, h - 1);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            if (inside_or_on(poly, {x, y})) m.at(y, x) = 1;
        }
    }
    return m;
}

Mask convex_target(const std::vector<Point>& points, int h, int w) {
    std::vector<Point> pts = unique_points(points);
    if (pts.size() < 3 || all_collinear(pts)) return degenerate_target(pts, h, w);
    return rasterize_polygon(convex_hull(pts), h, w);
}

Mask concave_target(const std::vector<Point>& points, int h, int w, int k_start) {
    std::vector<Point> pts = unique_points(points);
    if (pts.size() < 3 || all_collinear(pts)) return degenerate_target(pts, h, w);
    return rasterize_polygon(concave_hull(pts, k_start), h, w);
}

Mask dilate_target(const Mask& region, int iterations) {
    Mask cur = region;
    for (int it = 0; it < iterations; ++it) {
        Mask next(cur.h, cur.w, 0);
        for (int y = 0; y < cur.h; ++y) {
            for (int x = 0; x < cur.w; ++x) {
                if (!cur.at(y, x)) continue;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (next.in_bounds(y + dy, x + dx)) next.at(y + dy, x + dx) = 1;
                    }
                }
            }
        }
        cur = std::move(next);
    }
    return cur;
}

ShapeMode parse_shape_mode(const std::string& s) {
    if (s == "convex") return ShapeMode::Convex;
    if (s == "concave") return ShapeMode::Concave;
    throw ConfigError("unknown shape mode '" + s + "' (expected convex or concave)");
}

std::string to_string(ShapeMode m) { return m == ShapeMode::Convex ? "convex" : "concave"; }

PointTargetResult build_training_targets(const std::vector<PointAnnotation>& annotations, int h, int w,
                                         ShapeMode shape, const AugmentOptions& augment, const Taxonomy& taxonomy) {
    const int n = static_cast<int>(annotations.size());
    PointTargetResult result;
    PointTargets& t = result.targets;
    t.labels = Grid<int>(h, w, kPointIgnore);
    std::vector<Mask> regions;
    regions.reserve(n);
    for (const auto& a : annotations) {
        if (a.points.empty()) throw InputError("annotation for instance " + std::to_string(a.instance_id) + " has no points");
        if (!taxonomy.contains(a.category)) {
            throw ValidationError("annotation refers to unknown category " + std::to_string(a.category));
        }
        for (const Point& p : a.points) {
            if (p.x < 0 || p.y < 0 || p.x >= w || p.y >= h) {
                throw InputError("annotated point (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                                 ") lies outside the image");
            }
        }
        t.centers.push_back(simulate_center(a.points));
        regions.push_back(shape == ShapeMode::Convex ? convex_target(a.points, h, w)
                                                     : concave_target(a.points, h, w));
    }
    auto nearest = [&](int y, int x, auto&& candidate) {
        int best = kPointIgnore;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (!candidate(j)) continue;
            const double dx = x - t.centers[j].first, dy = y - t.centers[j].second;
            const double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return best;
    };
    Mask is_point(h, w, 0);
    for (int j = 0; j < n; ++j) {
        for (const Point& p : annotations[j].points) {
            t.labels.at(p.y, p.x) = j;
            is_point.at(p.y, p.x) = 1;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (is_point.at(y, x)) continue;
            t.labels.at(y, x) = nearest(y, x, [&](int j) { return regions[j].at(y, x) != 0; });
        }
    }
    if (augment.enabled && augment.iterations > 0) {
        std::vector<Mask> grown(n);
        std::vector<bool> grows(n, false);
        for (int j = 0; j < n; ++j) {
            if (annotations[j].kind == Kind::Thing && !augment.things) continue;
            Mask own(h, w, 0);
            for (size_t i = 0; i < own.data.size(); ++i) own.data[i] = t.labels.data[i] == j;
            grown[j] = dilate_target(own, augment.iterations);
            grows[j] = true;
        }
        Grid<int> next = t.labels;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (t.labels.at(y, x) != kPointIgnore) continue;
                next.at(y, x) = nearest(y, x, [&](int j) { return grows[j] && grown[j].at(y, x) != 0; });
            }
        }
        t.labels = std::move(next);
    }
    t.regions.assign(n, Mask(h, w, 0));
    for (size_t i = 0; i < t.labels.data.size(); ++i) {
        const int j = t.labels.data[i];
        if (j >= 0) t.regions[j].data[i] = 1;
    }
    for (int j = 0; j < n; ++j) {
        SegmentationTarget s;
        s.kind = annotations[j].kind;
        s.category = annotations[j].category;
        s.labels = Grid<uint8_t>(h, w, kSegIgnore);
        for (size_t i = 0; i < t.labels.data.size(); ++i) {
            const int o = t.labels.data[i];
            if (o == j) s.labels.data[i] = kSegPositive;
            else if (o >= 0) s.labels.data[i] = kSegNegative;
        }
        result.segmentation.push_back(std::move(s));
    }
    return result;
}

std::vector<PointAnnotation> simulate_annotations(const PanopticSegmentation& gt, int n, double boundary_ratio,
                                                  uint64_t seed) {
    std::vector<PointAnnotation> out;
    for (const Segment& s : gt.segments) {
        Mask m = gt.mask_of(s.id);
        if (mask_area(m) == 0) continue;
        std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                          static_cast<uint32_t>(s.id), 0x9017u};
        uint64_t sub = 0;
        std::vector<uint32_t> words(2);
        seq.generate(words.begin(), words.end());
        sub = (static_cast<uint64_t>(words[0]) << 32) | words[1];
        PointAnnotation a;
        a.instance_id = s.id;
        a.category = s.category;
        a.kind = s.kind;
        a.n = n;
        a.boundary_ratio = boundary_ratio;
        a.points = sample_points(m, n, boundary_ratio, sub);
        out.push_back(std::move(a));
    }
    return out;
}

void write_point_annotations(const std::filesystem::path& path, const PointAnnotationFile& file) {
    using nlohmann::json;
    json root;
    root["n"] = file.n;
    root["boundary_ratio"] = file.boundary_ratio;
    root["seed"] = file.seed;
    json images = json::array();
    for (size_t i = 0; i < file.images.size(); ++i) {
        json anns = json::array();
        for (const auto& a : file.images[i]) {
            json pts = json::array();
            for (const Point& p : a.points) pts.push_back({p.x, p.y});
            anns.push_back({{"instance_id", a.instance_id},
                            {"category", a.category},
                            {"kind", to_string(a.kind)},
                            {"points", pts}});
        }
        images.push_back({{"image", i < file.names.size() ? file.names[i] : std::to_string(i)},
                          {"annotations", anns}});
    }
    root["images"] = images;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << root.dump(1) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

PointAnnotationFile read_point_annotations(const std::filesystem::path& path) {
    using nlohmann::json;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    PointAnnotationFile file;
    try {
        json root = json::parse(in);
        file.n = root.at("n").get<int>();
        file.boundary_ratio = root.at("boundary_ratio").get<double>();
        file.seed = root.value("seed", uint64_t{0});
        for (const auto& img : root.at("images")) {
            file.names.push_back(img.at("image").get<std::string>());
            std::vector<PointAnnotation> anns;
            for (const auto& ja : img.at("annotations")) {
                PointAnnotation a;
                a.instance_id = ja.at("instance_id").get<int>();
                a.category = ja.at("category").get<int>();
                a.kind = parse_kind(ja.at("kind").get<std::string>());
                a.n = file.n;
                a.boundary_ratio = file.boundary_ratio;
                for (const auto& p : ja.at("points")) a.points.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
                anns.push_back(std::move(a));
            }
            file.images.push_back(std::move(anns));
        }
    } catch (const json::exception& e) {
        throw IoError("malformed point annotation file " + path.string() + ": " + e.what());
    }
    return file;
}

}  // namespace pfcn
