#pragma once

#include <random>
#include <vector>

#include "pfcn/tensor.hpp"

namespace testutil {

inline std::mt19937_64 rng_for(uint64_t case_index, uint64_t salt = 0) {
    return std::mt19937_64(0x9e3779b97f4a7c15ULL * (case_index + 1) ^ salt);
}

template <typename T>
pfcn::Tensor<T> random_tensor(std::mt19937_64& rng, int c, int h, int w, double lo = -1, double hi = 1) {
    pfcn::Tensor<T> t(c, h, w);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data) v = T(u(rng));
    return t;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, size_t n, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Random blob mask: a union of a few random rectangles.
inline pfcn::Mask random_mask(std::mt19937_64& rng, int h, int w, int rects = 3) {
    pfcn::Mask m(h, w, 0);
    for (int r = 0; r < rects; ++r) {
        int y0 = uniform_int(rng, 0, h - 1), x0 = uniform_int(rng, 0, w - 1);
        int y1 = uniform_int(rng, y0, h - 1), x1 = uniform_int(rng, x0, w - 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) m.at(y, x) = 1;
    }
    return m;
}

}  // namespace testutil
