#pragma once

#include <cstdint>
#include <vector>

#include "pfcn/backbone.hpp"
#include "pfcn/feature_encoder.hpp"
#include "pfcn/kernel_generator.hpp"

namespace pfcn {

struct ModelConfig {
    BackboneConfig backbone;
    int head_channels = 128;
    int head_depth = 3;
    int num_things = 3;
    int num_stuff = 2;
    int kernel_dim = 64;
    bool kernel_coords = true;
    bool encoder_coords = true;
    EncoderMode encoder_mode = EncoderMode::SemanticFpn;
    double thing_prior = 0.1;  // initial thing heatmap probability

    HeadConfig head() const;
    EncoderConfig encoder() const;
};

/// The full network: backbone, shared position and kernel heads, feature encoder.
template <typename T>
class PanopticModel {
public:
    struct Output {
        FeaturePyramid<T> pyramid;
        std::vector<Tensor<T>> position_logits;  // per stage (N_th + N_st, h, w)
        std::vector<Tensor<T>> kernels;          // per stage (C_e, h, w)
        Tensor<T> high_res;                      // F^h
        Tensor<T> encoded;                       // F^e
    };

    struct Cache {
        typename Backbone<T>::Cache backbone;
        std::vector<typename PositionHead<T>::Cache> position;
        std::vector<typename KernelHead<T>::Cache> kernel;
        typename FeatureEncoder<T>::Cache encoder;
    };

    /// Upstream gradients; empty tensors mean "no gradient".
    struct OutputGrad {
        std::vector<Tensor<T>> position_logits;
        std::vector<Tensor<T>> kernels;
        Tensor<T> encoded;
    };

    explicit PanopticModel(const ModelConfig& cfg);
    PanopticModel(const PanopticModel&) = delete;
    PanopticModel& operator=(const PanopticModel&) = delete;

    void init(uint64_t seed);

    Output forward(const Tensor<T>& image, Cache* cache) const;
    void backward(Cache& cache, const OutputGrad& grad) const;

    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const PositionHead<T>& position_head() const { return position_; }
    const KernelHead<T>& kernel_head() const { return kernel_; }
    const FeatureEncoder<T>& encoder() const { return encoder_; }
    const Backbone<T>& backbone() const { return backbone_; }

private:
    ModelConfig cfg_;
    ParamStore<T> params_;
    Backbone<T> backbone_;
    PositionHead<T> position_;
    KernelHead<T> kernel_;
    FeatureEncoder<T> encoder_;
};

/// Copies values between models of possibly different precision with identical layout.
template <typename Dst, typename Src>
void copy_params(PanopticModel<Dst>& dst, const PanopticModel<Src>& src);

}  // namespace pfcn
