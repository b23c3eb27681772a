#pragma once

#include <vector>

#include "pfcn/tensor.hpp"

/// Differentiable operator vocabulary. Every forward op that participates in
/// training has a matching backward that maps an upstream gradient to the
/// gradient of its input(s).
namespace pfcn::ops {

/// Saved state of a convolution forward pass (the unfolded input patches).
template <typename T>
struct ConvCache {
    std::vector<T> columns;  // (cin*k*k, out_h*out_w), row-major
    int in_c = 0, in_h = 0, in_w = 0;
};

/// 2-D cross-correlation with zero padding k/2. weight is (cout, cin, k, k)
/// flattened; bias may be empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, int k,
                 int stride, ConvCache<T>* cache);

/// Accumulates into dweight/dbias; returns dx when want_dx, else an empty tensor.
template <typename T>
Tensor<T> conv2d_backward(const ConvCache<T>& cache, const Tensor<T>& dy, std::span<const T> weight,
                          std::span<T> dweight, std::span<T> dbias, int cout, int k, int stride, bool want_dx);

/// Largest divisor of channels not exceeding 8.
int group_count(int channels);

template <typename T>
struct GroupNormCache {
    Tensor<T> xhat;
    std::vector<T> inv_std;  // per group
    int groups = 1;
};

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, int groups,
                     GroupNormCache<T>* cache);

template <typename T>
Tensor<T> group_norm_backward(const GroupNormCache<T>& cache, const Tensor<T>& dy, std::span<const T> gamma,
                              std::span<T> dgamma, std::span<T> dbeta);

template <typename T>
void relu_inplace(Tensor<T>& x);

/// Zeroes dy where the forward output was not positive.
template <typename T>
void relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy);

template <typename T>
T sigmoid(T z);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z);

/// Bilinear resampling with half-pixel centers (no corner alignment), edge clamped.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int out_h, int out_w);

/// Adjoint of bilinear_resize: scatters dy back onto an (in_h, in_w) grid.
template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& dy, int in_h, int in_w);

/// Two channels holding x then y coordinates, each linearly spaced over [-1, 1].
template <typename T>
Tensor<T> coord_channels(int h, int w);

/// Channel-wise concatenation of a and b.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// The first `channels` channels of x.
template <typename T>
Tensor<T> take_channels(const Tensor<T>& x, int first, int channels);

/// 3x3 max pooling, stride 1, borders see only in-bounds neighbours.
template <typename T>
Tensor<T> max_pool3x3(const Tensor<T>& x);

}  // namespace pfcn::ops
