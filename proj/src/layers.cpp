#include "pfcn/layers.hpp"

#include <cmath>

namespace pfcn {

template <typename T>
ConvLayer<T>::ConvLayer(ParamStore<T>& store, const std::string& name, int cin, int cout, int k, int stride,
                        bool bias)
    : cin_(cin), cout_(cout), k_(k), stride_(stride) {
    if (cin < 1 || cout < 1) throw ConfigError(name + ": channel counts must be >= 1");
    weight_ = &store.add(name + ".weight", {cout, cin, k, k});
    if (bias) bias_ = &store.add(name + ".bias", {cout}, false);
}

template <typename T>
void ConvLayer<T>::init(std::mt19937_64& rng, double gain) {
    init_uniform_fan_in(*weight_, cin_ * k_ * k_, gain, rng);
    if (bias_) std::fill(bias_->value.begin(), bias_->value.end(), T(0));
}

template <typename T>
Tensor<T> ConvLayer<T>::forward(const Tensor<T>& x, ops::ConvCache<T>* cache) const {
    if (x.c != cin_) {
        throw ConfigError(weight_->name + ": expected " + std::to_string(cin_) + " input channels, got " +
                          std::to_string(x.c));
    }
    std::span<const T> b;
    if (bias_) b = bias_->value;
    return ops::conv2d<T>(x, weight_->value, b, cout_, k_, stride_, cache);
}

template <typename T>
Tensor<T> ConvLayer<T>::backward(const ops::ConvCache<T>& cache, const Tensor<T>& dy, bool want_dx) const {
    std::span<T> db;
    if (bias_) db = bias_->grad;
    return ops::conv2d_backward<T>(cache, dy, weight_->value, weight_->grad, db, cout_, k_, stride_, want_dx);
}

template <typename T>
ConvBlock<T>::ConvBlock(ParamStore<T>& store, const std::string& name, int cin, int cout, int depth,
                        int first_stride) {
    if (depth < 1) throw ConfigError(name + ": a conv block needs at least one convolution");
    for (int i = 0; i < depth; ++i) {
        const std::string prefix = name + "." + std::to_string(i);
        // Group norm removes any per-channel offset, so the convolutions carry no bias.
        convs_.emplace_back(store, prefix + ".conv", i == 0 ? cin : cout, cout, 3, i == 0 ? first_stride : 1, false);
        auto& g = store.add(prefix + ".gn.gamma", {cout}, false);
        auto& b = store.add(prefix + ".gn.beta", {cout}, false);
        norms_.push_back({&g, &b, ops::group_count(cout)});
    }
}

template <typename T>
void ConvBlock<T>::init(std::mt19937_64& rng) {
    for (auto& c : convs_) c.init(rng, std::sqrt(6.0));
    for (auto& n : norms_) {
        std::fill(n.gamma->value.begin(), n.gamma->value.end(), T(1));
        std::fill(n.beta->value.begin(), n.beta->value.end(), T(0));
    }
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, Cache* cache) const {
    if (cache) {
        cache->conv.assign(convs_.size(), {});
        cache->norm.assign(convs_.size(), {});
        cache->out.assign(convs_.size(), {});
    }
    Tensor<T> h = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        Tensor<T> z = convs_[i].forward(h, cache ? &cache->conv[i] : nullptr);
        h = ops::group_norm<T>(z, norms_[i].gamma->value, norms_[i].beta->value, norms_[i].groups,
                               cache ? &cache->norm[i] : nullptr);
        ops::relu_inplace(h);
        if (cache) cache->out[i] = h;
    }
    return h;
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(Cache& cache, Tensor<T> dy, bool want_dx) const {
    for (size_t j = convs_.size(); j-- > 0;) {
        ops::relu_backward_inplace(cache.out[j], dy);
        Tensor<T> dz = ops::group_norm_backward<T>(cache.norm[j], dy, norms_[j].gamma->value, norms_[j].gamma->grad,
                                                   norms_[j].beta->grad);
        dy = convs_[j].backward(cache.conv[j], dz, j > 0 || want_dx);
    }
    return dy;
}

template class ConvLayer<float>;
template class ConvLayer<double>;
template class ConvBlock<float>;
template class ConvBlock<double>;

}  // namespace pfcn
