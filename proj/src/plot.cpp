#include "pfcn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "pfcn/png_io.hpp"

namespace pfcn {

namespace {

// 3x5 glyphs, one string per row, '#' = ink.
const std::map<char, std::array<const char*, 5>>& glyphs() {
    static const std::map<char, std::array<const char*, 5>> g = {
        {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
        {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
        {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
        {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", ".#.", ".#.", ".#."}},
        {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
        {'.', {"...", "...", "...", "...", ".#."}}, {'-', {"...", "...", "###", "...", "..."}},
        {'_', {"...", "...", "...", "...", "###"}}, {'(', {".#.", "#..", "#..", "#..", ".#."}},
        {')', {".#.", "..#", "..#", "..#", ".#."}}, {'A', {"###", "#.#", "###", "#.#", "#.#"}},
        {'B', {"##.", "#.#", "##.", "#.#", "##."}}, {'C', {"###", "#..", "#..", "#..", "###"}},
        {'D', {"##.", "#.#", "#.#", "#.#", "##."}}, {'E', {"###", "#..", "##.", "#..", "###"}},
        {'F', {"###", "#..", "##.", "#..", "#.."}}, {'G', {"###", "#..", "#.#", "#.#", "###"}},
        {'H', {"#.#", "#.#", "###", "#.#", "#.#"}}, {'I', {"###", ".#.", ".#.", ".#.", "###"}},
        {'J', {"..#", "..#", "..#", "#.#", "###"}}, {'K', {"#.#", "#.#", "##.", "#.#", "#.#"}},
        {'L', {"#..", "#..", "#..", "#..", "###"}}, {'M', {"#.#", "###", "###", "#.#", "#.#"}},
        {'N', {"##.", "#.#", "#.#", "#.#", "#.#"}}, {'O', {"###", "#.#", "#.#", "#.#", "###"}},
        {'P', {"###", "#.#", "###", "#..", "#.."}}, {'Q', {"###", "#.#", "#.#", "###", "..#"}},
        {'R', {"##.", "#.#", "##.", "#.#", "#.#"}}, {'S', {"###", "#..", "###", "..#", "###"}},
        {'T', {"###", ".#.", ".#.", ".#.", ".#."}}, {'U', {"#.#", "#.#", "#.#", "#.#", "###"}},
        {'V', {"#.#", "#.#", "#.#", "#.#", ".#."}}, {'W', {"#.#", "#.#", "###", "###", "#.#"}},
        {'X', {"#.#", "#.#", ".#.", "#.#", "#.#"}}, {'Y', {"#.#", "#.#", ".#.", ".#.", ".#."}},
        {'Z', {"###", "..#", ".#.", "#..", "###"}},
    };
    return g;
}

struct Canvas {
    RgbImage img;
    void set(int x, int y, const std::array<uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= img.w || y >= img.h) return;
        uint8_t* p = img.px(y, x);
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    }
    void line(int x0, int y0, int x1, int y1, const std::array<uint8_t, 3>& c, int thick = 1) {
        const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
        const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            for (int a = 0; a < thick; ++a)
                for (int b = 0; b < thick; ++b) set(x0 + a - thick / 2, y0 + b - thick / 2, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    }
    void box(int x, int y, int r, const std::array<uint8_t, 3>& c) {
        for (int yy = y - r; yy <= y + r; ++yy)
            for (int xx = x - r; xx <= x + r; ++xx) set(xx, yy, c);
    }
    // Text at scale 2; returns the width drawn.
    int text(int x, int y, const std::string& s, const std::array<uint8_t, 3>& c, int scale = 2) {
        int cx = x;
        for (char ch : s) {
            const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            auto it = glyphs().find(up);
            if (it != glyphs().end()) {
                for (int r = 0; r < 5; ++r)
                    for (int q = 0; q < 3; ++q)
                        if (it->second[r][q] == '#')
                            for (int a = 0; a < scale; ++a)
                                for (int b = 0; b < scale; ++b) set(cx + q * scale + a, y + r * scale + b, c);
            }
            cx += 4 * scale;
        }
        return cx - x;
    }
};

std::string fmt_tick(double v) {
    char buf[32];
    if (std::abs(v - std::round(v)) < 1e-9) std::snprintf(buf, sizeof buf, "%.0f", v);
    else std::snprintf(buf, sizeof buf, "%.2g", v);
    return buf;
}

}  // namespace

RgbImage render_line_chart(const std::vector<double>& x, const std::vector<Series>& series, const std::string& x_label,
                           int width, int height) {
    Canvas cv;
    cv.img = RgbImage(height, width);
    std::fill(cv.img.data.begin(), cv.img.data.end(), 255);
    const std::array<uint8_t, 3> ink{40, 40, 40}, grid{225, 225, 225};
    const int left = 50, right = width - 20, top = 20, bottom = height - 50;
    if (x.empty()) return cv.img;
    double x0 = *std::min_element(x.begin(), x.end()), x1 = *std::max_element(x.begin(), x.end());
    if (x1 == x0) {
        x0 -= 1;
        x1 += 1;
    }
    double y0 = 0, y1 = 0;
    for (const auto& s : series)
        for (double v : s.y) y1 = std::max(y1, v);
    y1 = std::max(10.0, std::ceil(y1 / 10.0) * 10.0);
    auto px = [&](double v) { return left + static_cast<int>(std::lround((v - x0) / (x1 - x0) * (right - left))); };
    auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - y0) / (y1 - y0) * (bottom - top))); };
    for (int k = 0; k <= 5; ++k) {
        const double v = y0 + (y1 - y0) * k / 5.0;
        cv.line(left, py(v), right, py(v), grid);
        const std::string t = fmt_tick(v);
        cv.text(left - 8 - 8 * static_cast<int>(t.size()), py(v) - 5, t, ink);
    }
    for (double v : x) {
        cv.line(px(v), bottom, px(v), bottom + 4, ink);
        const std::string t = fmt_tick(v);
        cv.text(px(v) - 4 * static_cast<int>(t.size()), bottom + 8, t, ink);
    }
    cv.line(left, top, left, bottom, ink);
    cv.line(left, bottom, right, bottom, ink);
    cv.text((left + right) / 2 - 4 * static_cast<int>(x_label.size()), bottom + 26, x_label, ink);
    int legend_x = left + 10;
    for (const auto& s : series) {
        for (size_t i = 0; i + 1 < std::min(x.size(), s.y.size()); ++i) {
            cv.line(px(x[i]), py(s.y[i]), px(x[i + 1]), py(s.y[i + 1]), s.color, 2);
        }
        for (size_t i = 0; i < std::min(x.size(), s.y.size()); ++i) cv.box(px(x[i]), py(s.y[i]), 3, s.color);
        cv.box(legend_x + 4, top + 6, 4, s.color);
        legend_x += 14 + cv.text(legend_x + 12, top + 2, s.label, ink) + 12;
    }
    return cv.img;
}

void write_pq_curve(const std::vector<CurvePoint>& points, const std::string& x_label,
                    const std::filesystem::path& prefix) {
    std::vector<CurvePoint> sorted = points;
    std::stable_sort(sorted.begin(), sorted.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.x < b.x; });
    const auto csv_path = std::filesystem::path(prefix.string() + ".csv");
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << "x,pq,pq_th,pq_st\n";
    std::vector<double> xs;
    Series pq{"PQ", {31, 119, 180}, {}}, th{"PQ_TH", {214, 39, 40}, {}}, st{"PQ_ST", {44, 160, 44}, {}};
    for (const auto& p : sorted) {
        csv << p.x << "," << p.pq << "," << p.pq_th << "," << p.pq_st << "\n";
        xs.push_back(p.x);
        pq.y.push_back(p.pq);
        th.y.push_back(p.pq_th);
        st.y.push_back(p.pq_st);
    }
    if (!csv) throw IoError("failed writing " + csv_path.string());
    write_rgb_png(std::filesystem::path(prefix.string() + ".png"), render_line_chart(xs, {pq, th, st}, x_label));
}

}  // namespace pfcn
