#include "pfcn/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "json.hpp"
#include "pfcn/png_io.hpp"

namespace pfcn {

using nlohmann::json;

namespace {

struct Rgb {
    double r, g, b;
};

// Base colors, thing categories first in taxonomy order.
constexpr Rgb kThingColors[] = {{210, 60, 50}, {60, 170, 70}, {230, 200, 50}};
constexpr Rgb kUpperColor{90, 140, 215};
constexpr Rgb kLowerColor{120, 95, 65};

bool inside_shape(int category, double dx, double dy, double r) {
    switch (category) {
        case 0: return dx * dx + dy * dy <= r * r;
        case 1: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
        default: {
            // upward triangle with apex (0, -r) and base y = 0.8 r, half-width r
            if (dy < -r || dy > 0.8 * r) return false;
            const double t = (dy + r) / (1.8 * r);
            return std::abs(dx) <= t * r;
        }
    }
}

uint8_t clamp8(double v) { return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Scene generate_scene(const SceneSpec& spec, int index) {
    if (spec.image_size <= 0 || spec.min_objects < 0 || spec.max_objects < spec.min_objects ||
        spec.min_radius < 2 || spec.max_radius < spec.min_radius)
        throw ConfigError("invalid scene spec");
    std::seed_seq seq{static_cast<uint32_t>(spec.seed & 0xFFFFFFFFu), static_cast<uint32_t>(spec.seed >> 32),
                      static_cast<uint32_t>(index), 0x5eedu};
    std::mt19937_64 rng(seq);
    auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    auto uint_in = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };

    const int S = spec.image_size;
    Scene scene;
    scene.image = RgbImage(S, S);
    Grid<int> label(S, S, 0);  // 0 upper, 1 lower, 2+ objects (index + 2)

    const double base = uni(0.3, 0.5) * S;
    const double amp = uni(2.0, 8.0);
    const double freq = uni(0.5, 2.0);
    const double phase = uni(0.0, 2 * std::numbers::pi);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double b = base + amp * std::sin(2 * std::numbers::pi * freq * x / S + phase);
            label.at(y, x) = y < b ? 0 : 1;
        }

    struct Obj {
        int category;
        double cx, cy, r;
        Rgb color;
    };
    std::vector<Obj> objects;
    const int want = uint_in(spec.min_objects, spec.max_objects);
    Mask occupied(S, S, 0);
    for (int n = 0; n < want; ++n) {
        const int category = uint_in(0, 2);
        for (int attempt = 0; attempt < 50; ++attempt) {
            const double r = uni(spec.min_radius, spec.max_radius);
            const double cx = uni(r + 1, S - r - 2), cy = uni(r + 1, S - r - 2);
            bool clash = false;
            const int x0 = std::max(0, static_cast<int>(cx - r) - spec.gap - 1);
            const int x1 = std::min(S - 1, static_cast<int>(cx + r) + spec.gap + 1);
            const int y0 = std::max(0, static_cast<int>(cy - r) - spec.gap - 1);
            const int y1 = std::min(S - 1, static_cast<int>(cy + r) + spec.gap + 1);
            for (int y = y0; y <= y1 && !clash; ++y)
                for (int x = x0; x <= x1 && !clash; ++x) {
                    if (!occupied.at(y, x)) continue;
                    // occupied pixel within gap of the candidate shape?
                    for (int dy = -spec.gap; dy <= spec.gap && !clash; ++dy)
                        for (int dx = -spec.gap; dx <= spec.gap && !clash; ++dx)
                            clash = inside_shape(category, x + dx - cx, y + dy - cy, r);
                }
            if (clash) continue;
            Rgb col = kThingColors[category];
            col.r += uni(-spec.color_jitter, spec.color_jitter);
            col.g += uni(-spec.color_jitter, spec.color_jitter);
            col.b += uni(-spec.color_jitter, spec.color_jitter);
            const int obj_label = static_cast<int>(objects.size()) + 2;
            bool any = false;
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x)
                    if (inside_shape(category, x - cx, y - cy, r)) {
                        label.at(y, x) = obj_label;
                        occupied.at(y, x) = 1;
                        any = true;
                    }
            if (any) objects.push_back({category, cx, cy, r, col});
            break;
        }
    }

    const Rgb upper{kUpperColor.r + uni(-15, 15), kUpperColor.g + uni(-15, 15), kUpperColor.b + uni(-15, 15)};
    const Rgb lower{kLowerColor.r + uni(-15, 15), kLowerColor.g + uni(-15, 15), kLowerColor.b + uni(-15, 15)};
    const double stripe_phase = uni(0.0, 2 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const int l = label.at(y, x);
            Rgb c;
            if (l == 0) {
                const double shade = 20.0 * y / S;
                c = {upper.r + shade, upper.g + shade, upper.b - shade};
            } else if (l == 1) {
                const double t = 18.0 * std::sin(0.6 * (x + y) + stripe_phase);
                c = {lower.r + t, lower.g + t, lower.b + 0.5 * t};
            } else {
                c = objects[l - 2].color;
            }
            uint8_t* p = scene.image.px(y, x);
            p[0] = clamp8(c.r + noise(rng));
            p[1] = clamp8(c.g + noise(rng));
            p[2] = clamp8(c.b + noise(rng));
        }

    const Taxonomy tax = Taxonomy::synthetic();
    auto& gt = scene.gt;
    gt.id_map = IdMap(S, S, 0);
    std::map<int, int> label_to_id;
    int next = 1;
    std::vector<int64_t> area(objects.size() + 2, 0);
    for (int v : label.data) ++area[v];
    for (int l = 0; l < static_cast<int>(area.size()); ++l) {
        if (area[l] == 0) continue;
        Segment seg;
        seg.id = next++;
        seg.area = area[l];
        if (l < 2) {
            seg.kind = Kind::Stuff;
            seg.category = tax.stuff_id(l);
        } else {
            seg.kind = Kind::Thing;
            seg.category = tax.thing_id(objects[l - 2].category);
        }
        label_to_id[l] = seg.id;
        gt.segments.push_back(seg);
    }
    for (size_t i = 0; i < label.data.size(); ++i) gt.id_map.data[i] = label_to_id.at(label.data[i]);
    return scene;
}

std::string image_stem(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return buf;
}

Dataset make_synthetic_dataset(const SceneSpec& spec, int count, int first_index) {
    Dataset d;
    d.taxonomy = Taxonomy::synthetic();
    for (int i = first_index; i < first_index + count; ++i) {
        d.names.push_back(image_stem(i));
        d.scenes.push_back(generate_scene(spec, i));
    }
    return d;
}

namespace {

json categories_json(const Taxonomy& tax) {
    json cats = json::object();
    for (const auto& c : tax.categories) cats[std::to_string(c.id)] = {{"name", c.name}, {"kind", to_string(c.kind)}};
    return cats;
}

json segments_json(const PanopticSegmentation& seg, bool with_score) {
    json s = json::object();
    for (const auto& x : seg.segments) {
        json rec = {{"category", x.category}, {"kind", to_string(x.kind)}, {"area", x.area}};
        if (with_score) rec["score"] = x.score;
        s[std::to_string(x.id)] = rec;
    }
    return s;
}

Taxonomy parse_categories(const json& cats, const std::string& file) {
    Taxonomy tax;
    if (!cats.is_object()) throw IoError(file + ": field 'categories' must be an object");
    for (auto it = cats.begin(); it != cats.end(); ++it) {
        Category c;
        try {
            c.id = std::stoi(it.key());
            c.name = it.value().at("name").get<std::string>();
            c.kind = parse_kind(it.value().at("kind").get<std::string>());
        } catch (const std::exception& e) {
            throw IoError(file + ": bad category '" + it.key() + "': " + e.what());
        }
        tax.categories.push_back(c);
    }
    std::sort(tax.categories.begin(), tax.categories.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return tax;
}

std::vector<Segment> parse_segments(const json& segs, const std::string& file, const std::string& image) {
    std::vector<Segment> out;
    if (!segs.is_object()) throw IoError(file + ": segments of image " + image + " must be an object");
    for (auto it = segs.begin(); it != segs.end(); ++it) {
        Segment s;
        try {
            s.id = std::stoi(it.key());
            s.category = it.value().at("category").get<int>();
            s.kind = parse_kind(it.value().at("kind").get<std::string>());
            s.area = it.value().at("area").get<int64_t>();
            s.score = it.value().value("score", 1.0);
        } catch (const std::exception& e) {
            throw IoError(file + ": bad segment '" + it.key() + "' of image " + image + ": " + e.what());
        }
        out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

void save_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << "\n";
}

}  // namespace

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json images = json::array();
    json segments = json::object();
    for (size_t i = 0; i < data.scenes.size(); ++i) {
        const auto& name = data.names[i];
        const auto& sc = data.scenes[i];
        sc.gt.validate();
        write_rgb_png(dir / (name + ".png"), sc.image);
        write_gray16_png(dir / (name + "_pan.png"), sc.gt.id_map);
        images.push_back({{"id", name},
                          {"file_name", name + ".png"},
                          {"pan_file_name", name + "_pan.png"},
                          {"height", sc.image.h},
                          {"width", sc.image.w}});
        segments[name] = segments_json(sc.gt, false);
    }
    save_json(dir / "annotations.json",
              {{"images", images}, {"segments", segments}, {"categories", categories_json(data.taxonomy)}});
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const auto file = (dir / "annotations.json").string();
    const json j = load_json(dir / "annotations.json");
    Dataset d;
    if (!j.contains("categories")) throw IoError(file + ": missing field 'categories'");
    if (!j.contains("images") || !j["images"].is_array()) throw IoError(file + ": missing array 'images'");
    if (!j.contains("segments")) throw IoError(file + ": missing field 'segments'");
    d.taxonomy = parse_categories(j["categories"], file);
    for (const auto& im : j["images"]) {
        std::string name, fn, pan;
        try {
            name = im.at("id").get<std::string>();
            fn = im.at("file_name").get<std::string>();
            pan = im.at("pan_file_name").get<std::string>();
        } catch (const std::exception& e) {
            throw IoError(file + ": bad image record: " + e.what());
        }
        Scene sc;
        sc.image = read_rgb_png(dir / fn);
        sc.gt.id_map = read_gray16_png(dir / pan);
        if (!j["segments"].contains(name)) throw IoError(file + ": no segments for image " + name);
        sc.gt.segments = parse_segments(j["segments"][name], file, name);
        try {
            sc.gt.validate();
        } catch (const ValidationError& e) {
            throw IoError(file + ": image " + name + ": " + e.what());
        }
        d.names.push_back(name);
        d.scenes.push_back(std::move(sc));
    }
    return d;
}

void write_predictions(const Taxonomy& taxonomy, const std::vector<std::string>& names,
                       const std::vector<PanopticSegmentation>& preds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json images = json::array();
    json segments = json::object();
    for (size_t i = 0; i < preds.size(); ++i) {
        write_gray16_png(dir / (names[i] + "_pan.png"), preds[i].id_map);
        images.push_back({{"id", names[i]},
                          {"pan_file_name", names[i] + "_pan.png"},
                          {"height", preds[i].id_map.h},
                          {"width", preds[i].id_map.w}});
        segments[names[i]] = segments_json(preds[i], true);
    }
    save_json(dir / "annotations.json",
              {{"images", images}, {"segments", segments}, {"categories", categories_json(taxonomy)}});
}

std::vector<PanopticSegmentation> read_predictions(const std::filesystem::path& dir, std::vector<std::string>* names) {
    const auto file = (dir / "annotations.json").string();
    const json j = load_json(dir / "annotations.json");
    std::vector<PanopticSegmentation> out;
    if (!j.contains("images") || !j["images"].is_array()) throw IoError(file + ": missing array 'images'");
    for (const auto& im : j["images"]) {
        const auto name = im.at("id").get<std::string>();
        PanopticSegmentation p;
        p.id_map = read_gray16_png(dir / im.at("pan_file_name").get<std::string>());
        if (!j["segments"].contains(name)) throw IoError(file + ": no segments for image " + name);
        p.segments = parse_segments(j["segments"][name], file, name);
        out.push_back(std::move(p));
        if (names) names->push_back(name);
    }
    return out;
}

}  // namespace pfcn
