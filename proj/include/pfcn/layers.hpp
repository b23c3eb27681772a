#pragma once

#include <string>
#include <vector>

#include "pfcn/ops.hpp"
#include "pfcn/params.hpp"

namespace pfcn {

/// Single convolution with optional bias. Parameters live in a ParamStore.
template <typename T>
class ConvLayer {
public:
    ConvLayer() = default;
    ConvLayer(ParamStore<T>& store, const std::string& name, int cin, int cout, int k, int stride, bool bias);

    void init(std::mt19937_64& rng, double gain);

    Tensor<T> forward(const Tensor<T>& x, ops::ConvCache<T>* cache) const;
    Tensor<T> backward(const ops::ConvCache<T>& cache, const Tensor<T>& dy, bool want_dx) const;

    int in_channels() const { return cin_; }
    int out_channels() const { return cout_; }
    Param<T>& weight() const { return *weight_; }
    Param<T>* bias() const { return bias_; }

private:
    Param<T>* weight_ = nullptr;
    Param<T>* bias_ = nullptr;
    int cin_ = 0, cout_ = 0, k_ = 3, stride_ = 1;
};

/// Stack of 3x3 convolutions, each followed by group normalization and ReLU.
/// The first convolution may be strided.
template <typename T>
class ConvBlock {
public:
    struct Cache {
        std::vector<ops::ConvCache<T>> conv;
        std::vector<ops::GroupNormCache<T>> norm;
        std::vector<Tensor<T>> out;  // post-activation outputs
    };

    ConvBlock() = default;
    ConvBlock(ParamStore<T>& store, const std::string& name, int cin, int cout, int depth, int first_stride = 1);

    void init(std::mt19937_64& rng);

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
    Tensor<T> backward(Cache& cache, Tensor<T> dy, bool want_dx) const;

    int in_channels() const { return convs_.front().in_channels(); }
    int out_channels() const { return convs_.back().out_channels(); }
    int depth() const { return static_cast<int>(convs_.size()); }

private:
    struct Norm {
        Param<T>* gamma;
        Param<T>* beta;
        int groups;
    };
    std::vector<ConvLayer<T>> convs_;
    std::vector<Norm> norms_;
};

}  // namespace pfcn
