#include "pfcn/model.hpp"

namespace pfcn {

HeadConfig ModelConfig::head() const {
    HeadConfig h;
    h.channels = head_channels;
    h.depth = head_depth;
    h.num_things = num_things;
    h.num_stuff = num_stuff;
    h.kernel_dim = kernel_dim;
    h.kernel_coords = kernel_coords;
    return h;
}

EncoderConfig ModelConfig::encoder() const {
    EncoderConfig e;
    e.mode = encoder_mode;
    e.kernel_dim = kernel_dim;
    e.depth = 3;
    e.coords = encoder_coords;
    return e;
}

template <typename T>
PanopticModel<T>::PanopticModel(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_(params_, cfg.backbone),
      position_(params_, cfg.backbone.channels, cfg.head()),
      kernel_(params_, cfg.backbone.channels, cfg.head()),
      encoder_(params_, cfg.backbone.channels, cfg.backbone.num_stages, cfg.encoder()) {}

template <typename T>
void PanopticModel<T>::init(uint64_t seed) {
    std::mt19937_64 rng(seed);
    backbone_.init(rng);
    position_.init(rng, cfg_.thing_prior);
    kernel_.init(rng);
    encoder_.init(rng);
}

template <typename T>
typename PanopticModel<T>::Output PanopticModel<T>::forward(const Tensor<T>& image, Cache* cache) const {
    Output out;
    out.pyramid = backbone_.forward(image, cache ? &cache->backbone : nullptr);
    const int S = out.pyramid.num_stages();
    if (cache) {
        cache->position.assign(S, {});
        cache->kernel.assign(S, {});
    }
    for (int s = 0; s < S; ++s) {
        const auto& x = out.pyramid.stages[s];
        out.position_logits.push_back(position_.forward(x, cache ? &cache->position[s] : nullptr).logits);
        out.kernels.push_back(kernel_.forward(x, cache ? &cache->kernel[s] : nullptr));
    }
    auto enc = encoder_.forward(out.pyramid, cache ? &cache->encoder : nullptr);
    out.high_res = std::move(enc.high_res);
    out.encoded = std::move(enc.encoded);
    return out;
}

template <typename T>
void PanopticModel<T>::backward(Cache& cache, const OutputGrad& grad) const {
    const int S = static_cast<int>(cache.position.size());
    std::vector<Tensor<T>> dstages;
    if (!grad.encoded.empty()) {
        dstages = encoder_.backward(cache.encoder, grad.encoded);
    } else {
        for (int s = 0; s < S; ++s) {
            const auto& first = cache.kernel[s].tower.conv.front();
            dstages.emplace_back(cfg_.backbone.channels, first.in_h, first.in_w);
        }
    }
    for (int s = 0; s < S; ++s) {
        if (s < static_cast<int>(grad.position_logits.size()) && !grad.position_logits[s].empty())
            dstages[s] += position_.backward(cache.position[s], grad.position_logits[s]);
        if (s < static_cast<int>(grad.kernels.size()) && !grad.kernels[s].empty())
            dstages[s] += kernel_.backward(cache.kernel[s], grad.kernels[s]);
    }
    backbone_.backward(cache.backbone, dstages);
}

template <typename Dst, typename Src>
void copy_params(PanopticModel<Dst>& dst, const PanopticModel<Src>& src) {
    auto& d = dst.params().all();
    const auto& s = src.params().all();
    if (d.size() != s.size()) throw ConfigError("copy_params: models differ in parameter count");
    for (size_t i = 0; i < d.size(); ++i) {
        if (d[i]->name != s[i]->name || d[i]->shape != s[i]->shape)
            throw ConfigError("copy_params: layout mismatch at " + d[i]->name);
        for (size_t j = 0; j < d[i]->value.size(); ++j) d[i]->value[j] = static_cast<Dst>(s[i]->value[j]);
    }
}

template class PanopticModel<float>;
template class PanopticModel<double>;
template void copy_params(PanopticModel<float>&, const PanopticModel<double>&);
template void copy_params(PanopticModel<double>&, const PanopticModel<float>&);
template void copy_params(PanopticModel<float>&, const PanopticModel<float>&);
template void copy_params(PanopticModel<double>&, const PanopticModel<double>&);

}  // namespace pfcn
