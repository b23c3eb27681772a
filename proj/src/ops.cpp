#include "pfcn/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

namespace pfcn::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

int conv_out(int in, int k, int stride) { return (in + 2 * (k / 2) - k) / stride + 1; }

template <typename T>
void im2col(const Tensor<T>& x, int k, int stride, int out_h, int out_w, std::vector<T>& cols) {
    const int pad = k / 2;
    const size_t npix = static_cast<size_t>(out_h) * out_w;
    cols.assign(static_cast<size_t>(x.c) * k * k * npix, T(0));
    for (int ch = 0; ch < x.c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols.data() + ((static_cast<size_t>(ch) * k + ky) * k + kx) * npix;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= x.h) continue;
                    const T* src = &x.data[(static_cast<size_t>(ch) * x.h + iy) * x.w];
                    T* dst = row + static_cast<size_t>(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const std::vector<T>& cols, int k, int stride, int out_h, int out_w, Tensor<T>& dx) {
    const int pad = k / 2;
    const size_t npix = static_cast<size_t>(out_h) * out_w;
    for (int ch = 0; ch < dx.c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols.data() + ((static_cast<size_t>(ch) * k + ky) * k + kx) * npix;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= dx.h) continue;
                    T* dst = &dx.data[(static_cast<size_t>(ch) * dx.h + iy) * dx.w];
                    const T* src = row + static_cast<size_t>(oy) * out_w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < dx.w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

struct Tap {
    int i0, i1;
    double frac;
};

// Source taps for half-pixel bilinear sampling along one axis.
std::vector<Tap> bilinear_taps(int in, int out) {
    std::vector<Tap> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - i0};
    }
    return taps;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, int k,
                 int stride, ConvCache<T>* cache) {
    const size_t kdim = static_cast<size_t>(x.c) * k * k;
    if (weight.size() != kdim * cout) {
        throw ConfigError("conv2d: input has " + std::to_string(x.c) + " channels but weights expect " +
                          std::to_string(weight.size() / (static_cast<size_t>(cout) * k * k)));
    }
    const int oh = conv_out(x.h, k, stride), ow = conv_out(x.w, k, stride);
    Tensor<T> y(cout, oh, ow);
    std::vector<T> local;
    std::vector<T>& cols = cache ? cache->columns : local;
    im2col(x, k, stride, oh, ow, cols);
    const Eigen::Index npix = static_cast<Eigen::Index>(oh) * ow;
    ConstMapMat<T> W(weight.data(), cout, static_cast<Eigen::Index>(kdim));
    ConstMapMat<T> C(cols.data(), static_cast<Eigen::Index>(kdim), npix);
    MapMat<T> Y(y.data.data(), cout, npix);
    Y.noalias() = W * C;
    if (!bias.empty()) {
        for (int o = 0; o < cout; ++o) Y.row(o).array() += bias[o];
    }
    if (cache) {
        cache->in_c = x.c;
        cache->in_h = x.h;
        cache->in_w = x.w;
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_backward(const ConvCache<T>& cache, const Tensor<T>& dy, std::span<const T> weight,
                          std::span<T> dweight, std::span<T> dbias, int cout, int k, int stride, bool want_dx) {
    const Eigen::Index kdim = static_cast<Eigen::Index>(cache.in_c) * k * k;
    const Eigen::Index npix = static_cast<Eigen::Index>(dy.h) * dy.w;
    ConstMapMat<T> dY(dy.data.data(), cout, npix);
    ConstMapMat<T> C(cache.columns.data(), kdim, npix);
    MapMat<T> dW(dweight.data(), cout, kdim);
    dW.noalias() += dY * C.transpose();
    if (!dbias.empty()) {
        // Plain loop: Eigen's vectorised sum depends on buffer alignment,
        // which would make repeated runs differ in the last bits.
        for (int o = 0; o < cout; ++o) {
            const T* row = dy.data.data() + static_cast<size_t>(o) * npix;
            double acc = 0;
            for (Eigen::Index p = 0; p < npix; ++p) acc += row[p];
            dbias[o] += static_cast<T>(acc);
        }
    }
    if (!want_dx) return {};
    ConstMapMat<T> W(weight.data(), cout, kdim);
    std::vector<T> dcols(static_cast<size_t>(kdim * npix));
    MapMat<T> dC(dcols.data(), kdim, npix);
    dC.noalias() = W.transpose() * dY;
    Tensor<T> dx(cache.in_c, cache.in_h, cache.in_w);
    col2im(dcols, k, stride, dy.h, dy.w, dx);
    return dx;
}

int group_count(int channels) {
    for (int g = std::min(8, channels); g >= 1; --g) {
        if (channels % g == 0) return g;
    }
    return 1;
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, int groups,
                     GroupNormCache<T>* cache) {
    if (x.c % groups != 0) throw ConfigError("group_norm: channels not divisible by group count");
    constexpr T eps = T(1e-5);
    const int cg = x.c / groups;
    const size_t n = static_cast<size_t>(cg) * x.plane_size();
    Tensor<T> y(x.c, x.h, x.w);
    std::vector<T> inv(groups);
    for (int g = 0; g < groups; ++g) {
        const T* src = x.data.data() + static_cast<size_t>(g) * n;
        double mean = 0;
        for (size_t i = 0; i < n; ++i) mean += src[i];
        mean /= static_cast<double>(n);
        double var = 0;
        for (size_t i = 0; i < n; ++i) {
            const double d = src[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const T is = T(1.0 / std::sqrt(var + eps));
        inv[g] = is;
        for (int cc = 0; cc < cg; ++cc) {
            const int ch = g * cg + cc;
            const T* s = x.data.data() + static_cast<size_t>(ch) * x.plane_size();
            T* d = y.data.data() + static_cast<size_t>(ch) * x.plane_size();
            for (size_t i = 0; i < x.plane_size(); ++i) d[i] = (s[i] - T(mean)) * is;
        }
    }
    if (cache) {
        cache->xhat = y;
        cache->inv_std = inv;
        cache->groups = groups;
    }
    for (int ch = 0; ch < x.c; ++ch) {
        auto p = y.plane(ch);
        for (auto& v : p) v = v * gamma[ch] + beta[ch];
    }
    return y;
}

template <typename T>
Tensor<T> group_norm_backward(const GroupNormCache<T>& cache, const Tensor<T>& dy, std::span<const T> gamma,
                              std::span<T> dgamma, std::span<T> dbeta) {
    const Tensor<T>& xhat = cache.xhat;
    const int groups = cache.groups;
    const int cg = dy.c / groups;
    const size_t plane = dy.plane_size();
    const double n = static_cast<double>(cg) * plane;
    Tensor<T> dx(dy.c, dy.h, dy.w);
    for (int g = 0; g < groups; ++g) {
        double sum_d = 0, sum_dx = 0;
        for (int cc = 0; cc < cg; ++cc) {
            const int ch = g * cg + cc;
            const T* d = dy.data.data() + static_cast<size_t>(ch) * plane;
            const T* xh = xhat.data.data() + static_cast<size_t>(ch) * plane;
            double sg = 0, sb = 0;
            for (size_t i = 0; i < plane; ++i) {
                sg += d[i] * xh[i];
                sb += d[i];
            }
            dgamma[ch] += T(sg);
            dbeta[ch] += T(sb);
            sum_d += sb * gamma[ch];
            sum_dx += sg * gamma[ch];
        }
        const double is = cache.inv_std[g];
        for (int cc = 0; cc < cg; ++cc) {
            const int ch = g * cg + cc;
            const T* d = dy.data.data() + static_cast<size_t>(ch) * plane;
            const T* xh = xhat.data.data() + static_cast<size_t>(ch) * plane;
            T* o = dx.data.data() + static_cast<size_t>(ch) * plane;
            for (size_t i = 0; i < plane; ++i) {
                const double dxh = static_cast<double>(d[i]) * gamma[ch];
                o[i] = T(is / n * (n * dxh - sum_d - xh[i] * sum_dx));
            }
        }
    }
    return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
    for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
    for (size_t i = 0; i < dy.data.size(); ++i) {
        if (!(y.data[i] > T(0))) dy.data[i] = T(0);
    }
}

template <typename T>
T sigmoid(T z) {
    if (z >= 0) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z) {
    Tensor<T> p = z;
    for (auto& v : p.data) v = sigmoid(v);
    return p;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw InputError("bilinear_resize: target size must be positive");
    if (out_h == x.h && out_w == x.w) return x;
    const auto ty = bilinear_taps(x.h, out_h);
    const auto tx = bilinear_taps(x.w, out_w);
    Tensor<T> y(x.c, out_h, out_w);
    for (int ch = 0; ch < x.c; ++ch) {
        for (int oy = 0; oy < out_h; ++oy) {
            const T fy = T(ty[oy].frac);
            for (int ox = 0; ox < out_w; ++ox) {
                const T fx = T(tx[ox].frac);
                const T a = x.at(ch, ty[oy].i0, tx[ox].i0), b = x.at(ch, ty[oy].i0, tx[ox].i1);
                const T c = x.at(ch, ty[oy].i1, tx[ox].i0), d = x.at(ch, ty[oy].i1, tx[ox].i1);
                y.at(ch, oy, ox) = (T(1) - fy) * ((T(1) - fx) * a + fx * b) + fy * ((T(1) - fx) * c + fx * d);
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& dy, int in_h, int in_w) {
    if (dy.h == in_h && dy.w == in_w) return dy;
    const auto ty = bilinear_taps(in_h, dy.h);
    const auto tx = bilinear_taps(in_w, dy.w);
    Tensor<T> dx(dy.c, in_h, in_w);
    for (int ch = 0; ch < dy.c; ++ch) {
        for (int oy = 0; oy < dy.h; ++oy) {
            const T fy = T(ty[oy].frac);
            for (int ox = 0; ox < dy.w; ++ox) {
                const T fx = T(tx[ox].frac);
                const T g = dy.at(ch, oy, ox);
                dx.at(ch, ty[oy].i0, tx[ox].i0) += g * (T(1) - fy) * (T(1) - fx);
                dx.at(ch, ty[oy].i0, tx[ox].i1) += g * (T(1) - fy) * fx;
                dx.at(ch, ty[oy].i1, tx[ox].i0) += g * fy * (T(1) - fx);
                dx.at(ch, ty[oy].i1, tx[ox].i1) += g * fy * fx;
            }
        }
    }
    return dx;
}

template <typename T>
Tensor<T> coord_channels(int h, int w) {
    Tensor<T> c(2, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            c.at(0, y, x) = w > 1 ? T(-1) + T(2) * T(x) / T(w - 1) : T(0);
            c.at(1, y, x) = h > 1 ? T(-1) + T(2) * T(y) / T(h - 1) : T(0);
        }
    }
    return c;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.h != b.h || a.w != b.w) throw InputError("concat_channels: spatial size mismatch");
    Tensor<T> out(a.c + b.c, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

template <typename T>
Tensor<T> take_channels(const Tensor<T>& x, int first, int channels) {
    if (first < 0 || channels <= 0 || first + channels > x.c) throw InputError("take_channels: out of range");
    Tensor<T> out(channels, x.h, x.w);
    auto begin = x.data.begin() + static_cast<std::ptrdiff_t>(static_cast<size_t>(first) * x.plane_size());
    std::copy(begin, begin + static_cast<std::ptrdiff_t>(out.size()), out.data.begin());
    return out;
}

template <typename T>
Tensor<T> max_pool3x3(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.h, x.w);
    for (int ch = 0; ch < x.c; ++ch) {
        for (int yy = 0; yy < x.h; ++yy) {
            for (int xx = 0; xx < x.w; ++xx) {
                T m = x.at(ch, yy, xx);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = yy + dy, nx = xx + dx;
                        if (ny >= 0 && ny < x.h && nx >= 0 && nx < x.w) m = std::max(m, x.at(ch, ny, nx));
                    }
                }
                y.at(ch, yy, xx) = m;
            }
        }
    }
    return y;
}

#define PFCN_INSTANTIATE_OPS(T)                                                                                \
    template Tensor<T> conv2d(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int, int,        \
                              ConvCache<T>*);                                                                  \
    template Tensor<T> conv2d_backward(const ConvCache<T>&, const Tensor<T>&, std::span<const T>, std::span<T>, \
                                       std::span<T>, int, int, int, bool);                                     \
    template Tensor<T> group_norm(const Tensor<T>&, std::span<const T>, std::span<const T>, int,              \
                                  GroupNormCache<T>*);                                                         \
    template Tensor<T> group_norm_backward(const GroupNormCache<T>&, const Tensor<T>&, std::span<const T>,    \
                                           std::span<T>, std::span<T>);                                        \
    template void relu_inplace(Tensor<T>&);                                                                    \
    template void relu_backward_inplace(const Tensor<T>&, Tensor<T>&);                                         \
    template T sigmoid(T);                                                                                     \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                              \
    template Tensor<T> bilinear_resize(const Tensor<T>&, int, int);                                            \
    template Tensor<T> bilinear_resize_backward(const Tensor<T>&, int, int);                                   \
    template Tensor<T> coord_channels(int, int);                                                               \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> take_channels(const Tensor<T>&, int, int);                                              \
    template Tensor<T> max_pool3x3(const Tensor<T>&);

PFCN_INSTANTIATE_OPS(float)
PFCN_INSTANTIATE_OPS(double)

}  // namespace pfcn::ops
