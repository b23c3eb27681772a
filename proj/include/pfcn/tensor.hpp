#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfcn/error.hpp"

namespace pfcn {

/// Dense (channels, height, width) array in row-major order.
template <typename T>
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T(0))
        : c(channels), h(height), w(width),
          data(static_cast<size_t>(channels) * height * width, fill) {
        if (channels <= 0 || height <= 0 || width <= 0) {
            throw InputError("tensor dimensions must be positive, got (" + std::to_string(channels) +
                             ", " + std::to_string(height) + ", " + std::to_string(width) + ")");
        }
    }

    size_t size() const { return data.size(); }
    size_t plane_size() const { return static_cast<size_t>(h) * w; }
    bool empty() const { return data.empty(); }

    T& at(int ch, int y, int x) { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }
    const T& at(int ch, int y, int x) const { return data[(static_cast<size_t>(ch) * h + y) * w + x]; }

    std::span<T> plane(int ch) { return {data.data() + static_cast<size_t>(ch) * plane_size(), plane_size()}; }
    std::span<const T> plane(int ch) const {
        return {data.data() + static_cast<size_t>(ch) * plane_size(), plane_size()};
    }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        if (!same_shape(o)) throw InputError("tensor shape mismatch in +=");
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.c = c;
        out.h = h;
        out.w = w;
        out.data.assign(data.begin(), data.end());
        return out;
    }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Plain 2-D grid used for masks, id maps and label maps.
template <typename T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : h(height), w(width), data(static_cast<size_t>(height) * width, fill) {}

    T& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    const T& at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
    bool in_bounds(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
    size_t size() const { return data.size(); }

    bool operator==(const Grid& o) const = default;
};

using Mask = Grid<uint8_t>;
using IdMap = Grid<int32_t>;

inline int64_t mask_area(const Mask& m) {
    int64_t n = 0;
    for (auto v : m.data) n += v != 0;
    return n;
}

/// 8-bit interleaved RGB image.
struct RgbImage {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> data;

    RgbImage() = default;
    RgbImage(int height, int width) : h(height), w(width), data(static_cast<size_t>(height) * width * 3, 0) {}

    uint8_t* px(int y, int x) { return &data[(static_cast<size_t>(y) * w + x) * 3]; }
    const uint8_t* px(int y, int x) const { return &data[(static_cast<size_t>(y) * w + x) * 3]; }
    bool operator==(const RgbImage& o) const = default;
};

/// Normalized network input (3, H, W).
template <typename T>
Tensor<T> image_to_tensor(const RgbImage& img) {
    Tensor<T> t(3, img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                t.at(ch, y, x) = (T(img.px(y, x)[ch]) / T(255) - T(0.5)) / T(0.25);
    return t;
}

}  // namespace pfcn
