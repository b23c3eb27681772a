#pragma once

#include <string>
#include <vector>

#include "pfcn/backbone.hpp"

namespace pfcn {

enum class EncoderMode { P2, Summed, SemanticFpn };

EncoderMode parse_encoder_mode(const std::string& name);
std::string to_string(EncoderMode mode);

struct EncoderConfig {
    EncoderMode mode = EncoderMode::SemanticFpn;
    int kernel_dim = 64;  // C_e
    int depth = 3;  // convolutions in the encoding stack, the last one plain
    bool coords = true;
};

/// High-resolution feature construction plus coordinate-conditioned encoding.
template <typename T>
class FeatureEncoder {
public:
    struct Output {
        Tensor<T> high_res;  // F^h
        Tensor<T> encoded;   // F^e
    };
    struct Cache {
        std::vector<typename ConvBlock<T>::Cache> proj;
        std::vector<typename ConvBlock<T>::Cache> step;
        std::vector<std::pair<int, int>> sizes;
        typename ConvBlock<T>::Cache encode;
        ops::ConvCache<T> out;
    };

    FeatureEncoder() = default;
    FeatureEncoder(ParamStore<T>& store, int in_channels, int num_stages, const EncoderConfig& cfg);

    void init(std::mt19937_64& rng);

    Tensor<T> high_res(const FeaturePyramid<T>& pyr, Cache* cache) const;
    Tensor<T> encode(const Tensor<T>& high_res, Cache* cache) const;
    Output forward(const FeaturePyramid<T>& pyr, Cache* cache) const;

    /// Returns gradients w.r.t. each pyramid stage.
    std::vector<Tensor<T>> backward(Cache& cache, const Tensor<T>& dencoded) const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    int num_stages_ = 0;
    std::vector<ConvBlock<T>> proj_;
    std::vector<ConvBlock<T>> step_;
    ConvBlock<T> encode_;  // depth - 1 normalized layers
    ConvLayer<T> out_;     // plain 3x3 projection, so F^e is signed
};

/// Mask logits P_j = K_j . F^e at every pixel (bias-free 1x1 convolution).
/// kernels is (n, C_e) row-major. Returns (n, h, w).
template <typename T>
Tensor<T> instance_logits(std::span<const T> kernels, int n, const Tensor<T>& encoded);

/// Backward of instance_logits: accumulates into dkernels (n, C_e) and dencoded.
template <typename T>
void instance_logits_backward(std::span<const T> kernels, int n, const Tensor<T>& encoded, const Tensor<T>& dlogits,
                              std::span<T> dkernels, Tensor<T>& dencoded);

/// Soft masks for a list of kernel vectors: logistic of instance_logits.
std::vector<Grid<float>> produce_instances(const std::vector<std::vector<float>>& kernels, const Tensor<float>& encoded);

}  // namespace pfcn
