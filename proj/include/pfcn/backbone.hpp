#pragma once

#include <vector>

#include "pfcn/layers.hpp"

namespace pfcn {

/// Per-stage dense features, finest first.
template <typename T>
struct FeaturePyramid {
    std::vector<Tensor<T>> stages;
    std::vector<int> strides;

    int num_stages() const { return static_cast<int>(stages.size()); }
};

struct BackboneConfig {
    int stem_channels = 16;
    int channels = 32;
    int num_stages = 3;  // strides 4, 8, 16, ...

    int stride(int stage) const { return 4 << stage; }
    int largest_stride() const { return stride(num_stages - 1); }
};

/// Small strided-convolution encoder with top-down lateral fusion.
template <typename T>
class Backbone {
public:
    struct Cache {
        typename ConvBlock<T>::Cache stem;
        std::vector<typename ConvBlock<T>::Cache> down;
        std::vector<ops::ConvCache<T>> lateral;
        std::vector<ops::ConvCache<T>> output;
        std::vector<std::pair<int, int>> sizes;
    };

    Backbone() = default;
    Backbone(ParamStore<T>& store, const BackboneConfig& cfg);

    void init(std::mt19937_64& rng);

    /// image is (3, H, W) with H and W divisible by the largest stride.
    FeaturePyramid<T> forward(const Tensor<T>& image, Cache* cache) const;
    void backward(Cache& cache, const std::vector<Tensor<T>>& dstages) const;

    const BackboneConfig& config() const { return cfg_; }

private:
    BackboneConfig cfg_;
    ConvBlock<T> stem_;
    std::vector<ConvBlock<T>> down_;
    std::vector<ConvLayer<T>> lateral_;
    std::vector<ConvLayer<T>> output_;
};

/// Throws InputError naming the required padding when the image size is not a
/// multiple of the largest stride.
void check_input_size(int h, int w, const BackboneConfig& cfg);

}  // namespace pfcn
