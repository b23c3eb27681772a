#include "pfcn/backbone.hpp"

#include <cmath>

namespace pfcn {

void check_input_size(int h, int w, const BackboneConfig& cfg) {
    const int s = cfg.largest_stride();
    if (h % s != 0 || w % s != 0) {
        const int ph = (s - h % s) % s, pw = (s - w % s) % s;
        throw InputError("image size " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by the largest stride " + std::to_string(s) + "; pad by " +
                         std::to_string(ph) + " rows and " + std::to_string(pw) + " columns");
    }
}

template <typename T>
Backbone<T>::Backbone(ParamStore<T>& store, const BackboneConfig& cfg) : cfg_(cfg) {
    if (cfg.num_stages < 1) throw ConfigError("backbone needs at least one stage");
    stem_ = ConvBlock<T>(store, "backbone.stem", 3, cfg.stem_channels, 1, 2);
    for (int s = 0; s < cfg.num_stages; ++s) {
        const std::string p = "backbone.down" + std::to_string(s);
        if (s == 0)
            down_.emplace_back(store, p, cfg.stem_channels, cfg.channels, 2, 2);
        else
            down_.emplace_back(store, p, cfg.channels, cfg.channels, 1, 2);
        lateral_.emplace_back(store, "backbone.lateral" + std::to_string(s), cfg.channels, cfg.channels, 1, 1, true);
        output_.emplace_back(store, "backbone.output" + std::to_string(s), cfg.channels, cfg.channels, 3, 1, true);
    }
}

template <typename T>
void Backbone<T>::init(std::mt19937_64& rng) {
    stem_.init(rng);
    for (auto& d : down_) d.init(rng);
    for (auto& l : lateral_) l.init(rng, 1.0);
    for (auto& o : output_) o.init(rng, 1.0);
}

template <typename T>
FeaturePyramid<T> Backbone<T>::forward(const Tensor<T>& image, Cache* cache) const {
    if (image.c != 3) throw InputError("backbone expects a 3-channel image");
    check_input_size(image.h, image.w, cfg_);
    const int S = cfg_.num_stages;
    if (cache) {
        cache->down.assign(S, {});
        cache->lateral.assign(S, {});
        cache->output.assign(S, {});
        cache->sizes.assign(S, {});
    }
    Tensor<T> h = stem_.forward(image, cache ? &cache->stem : nullptr);
    std::vector<Tensor<T>> bottom(S);
    for (int s = 0; s < S; ++s) {
        h = down_[s].forward(h, cache ? &cache->down[s] : nullptr);
        bottom[s] = h;
        if (cache) cache->sizes[s] = {h.h, h.w};
    }
    FeaturePyramid<T> pyr;
    pyr.stages.resize(S);
    Tensor<T> top;
    for (int s = S - 1; s >= 0; --s) {
        Tensor<T> t = lateral_[s].forward(bottom[s], cache ? &cache->lateral[s] : nullptr);
        if (s < S - 1) t += ops::bilinear_resize(top, t.h, t.w);
        pyr.stages[s] = output_[s].forward(t, cache ? &cache->output[s] : nullptr);
        top = std::move(t);
    }
    for (int s = 0; s < S; ++s) pyr.strides.push_back(cfg_.stride(s));
    return pyr;
}

template <typename T>
void Backbone<T>::backward(Cache& cache, const std::vector<Tensor<T>>& dstages) const {
    const int S = cfg_.num_stages;
    std::vector<Tensor<T>> dbottom(S);
    Tensor<T> dtop;
    for (int s = 0; s < S; ++s) {
        Tensor<T> dt = output_[s].backward(cache.output[s], dstages[s], true);
        if (s > 0) dt += ops::bilinear_resize_backward(dtop, cache.sizes[s].first, cache.sizes[s].second);
        dbottom[s] = lateral_[s].backward(cache.lateral[s], dt, true);
        dtop = std::move(dt);
    }
    Tensor<T> carry;
    for (int s = S - 1; s >= 0; --s) {
        Tensor<T> d = dbottom[s];
        if (s < S - 1) d += carry;
        carry = down_[s].backward(cache.down[s], std::move(d), true);
    }
    stem_.backward(cache.stem, std::move(carry), false);
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace pfcn
