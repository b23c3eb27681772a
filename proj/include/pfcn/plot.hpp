#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pfcn/tensor.hpp"

namespace pfcn {

struct Series {
    std::string label;
    std::array<uint8_t, 3> color{0, 0, 0};
    std::vector<double> y;
};

/// Line chart with markers over shared x values. Labels use a small
/// built-in bitmap font (digits, A-Z, a few symbols).
RgbImage render_line_chart(const std::vector<double>& x, const std::vector<Series>& series, const std::string& x_label,
                           int width = 480, int height = 320);

struct CurvePoint {
    double x = 0;
    double pq = 0;
    double pq_th = 0;
    double pq_st = 0;
};

/// Writes <prefix>.csv (x,pq,pq_th,pq_st) and <prefix>.png.
void write_pq_curve(const std::vector<CurvePoint>& points, const std::string& x_label,
                    const std::filesystem::path& prefix);

}  // namespace pfcn
