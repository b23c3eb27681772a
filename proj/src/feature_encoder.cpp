#include "pfcn/feature_encoder.hpp"

#include <Eigen/Dense>

namespace pfcn {

EncoderMode parse_encoder_mode(const std::string& name) {
    if (name == "p2") return EncoderMode::P2;
    if (name == "summed") return EncoderMode::Summed;
    if (name == "semantic_fpn") return EncoderMode::SemanticFpn;
    throw ConfigError("unknown encoder mode '" + name + "' (expected p2, summed or semantic_fpn)");
}

std::string to_string(EncoderMode mode) {
    switch (mode) {
        case EncoderMode::P2: return "p2";
        case EncoderMode::Summed: return "summed";
        case EncoderMode::SemanticFpn: return "semantic_fpn";
    }
    return "semantic_fpn";
}

template <typename T>
FeatureEncoder<T>::FeatureEncoder(ParamStore<T>& store, int in_channels, int num_stages, const EncoderConfig& cfg)
    : cfg_(cfg), num_stages_(num_stages) {
    const int used = cfg.mode == EncoderMode::P2 ? 1 : num_stages;
    for (int s = 0; s < used; ++s)
        proj_.emplace_back(store, "encoder.proj" + std::to_string(s), in_channels, cfg.kernel_dim, 1);
    if (cfg.mode == EncoderMode::SemanticFpn) {
        for (int s = 0; s + 1 < num_stages; ++s)
            step_.emplace_back(store, "encoder.step" + std::to_string(s), cfg.kernel_dim, cfg.kernel_dim, 1);
    }
    if (cfg.depth < 1) throw ConfigError("encoder depth must be at least 1");
    const int cin = cfg.kernel_dim + (cfg.coords ? 2 : 0);
    if (cfg.depth > 1) encode_ = ConvBlock<T>(store, "encoder.encode", cin, cfg.kernel_dim, cfg.depth - 1);
    out_ = ConvLayer<T>(store, "encoder.out", cfg.depth > 1 ? cfg.kernel_dim : cin, cfg.kernel_dim, 3, 1, true);
}

template <typename T>
void FeatureEncoder<T>::init(std::mt19937_64& rng) {
    for (auto& p : proj_) p.init(rng);
    for (auto& s : step_) s.init(rng);
    if (cfg_.depth > 1) encode_.init(rng);
    out_.init(rng, 1.0);
}

template <typename T>
Tensor<T> FeatureEncoder<T>::high_res(const FeaturePyramid<T>& pyr, Cache* cache) const {
    if (pyr.num_stages() != num_stages_) throw ConfigError("encoder: pyramid stage count mismatch");
    if (cache) {
        cache->proj.assign(proj_.size(), {});
        cache->step.assign(step_.size(), {});
        cache->sizes.clear();
        for (const auto& s : pyr.stages) cache->sizes.emplace_back(s.h, s.w);
    }
    const auto& fine = pyr.stages.front();
    switch (cfg_.mode) {
        case EncoderMode::P2:
            return proj_[0].forward(fine, cache ? &cache->proj[0] : nullptr);
        case EncoderMode::Summed: {
            Tensor<T> acc = proj_[0].forward(fine, cache ? &cache->proj[0] : nullptr);
            for (int s = 1; s < num_stages_; ++s) {
                Tensor<T> p = proj_[s].forward(pyr.stages[s], cache ? &cache->proj[s] : nullptr);
                acc += ops::bilinear_resize(p, fine.h, fine.w);
            }
            return acc;
        }
        case EncoderMode::SemanticFpn: {
            const int last = num_stages_ - 1;
            Tensor<T> h = proj_[last].forward(pyr.stages[last], cache ? &cache->proj[last] : nullptr);
            for (int s = last - 1; s >= 0; --s) {
                Tensor<T> refined = step_[s].forward(h, cache ? &cache->step[s] : nullptr);
                Tensor<T> lateral = proj_[s].forward(pyr.stages[s], cache ? &cache->proj[s] : nullptr);
                lateral += ops::bilinear_resize(refined, lateral.h, lateral.w);
                h = std::move(lateral);
            }
            return h;
        }
    }
    throw ConfigError("encoder: unknown mode");
}

template <typename T>
Tensor<T> FeatureEncoder<T>::encode(const Tensor<T>& high_res, Cache* cache) const {
    Tensor<T> x = cfg_.coords ? ops::concat_channels(high_res, ops::coord_channels<T>(high_res.h, high_res.w))
                              : high_res;
    if (cfg_.depth > 1) x = encode_.forward(x, cache ? &cache->encode : nullptr);
    return out_.forward(x, cache ? &cache->out : nullptr);
}

template <typename T>
typename FeatureEncoder<T>::Output FeatureEncoder<T>::forward(const FeaturePyramid<T>& pyr, Cache* cache) const {
    Output out;
    out.high_res = high_res(pyr, cache);
    out.encoded = encode(out.high_res, cache);
    return out;
}

template <typename T>
std::vector<Tensor<T>> FeatureEncoder<T>::backward(Cache& cache, const Tensor<T>& dencoded) const {
    Tensor<T> dh = out_.backward(cache.out, dencoded, true);
    if (cfg_.depth > 1) dh = encode_.backward(cache.encode, std::move(dh), true);
    if (cfg_.coords) dh = ops::take_channels(dh, 0, cfg_.kernel_dim);
    std::vector<Tensor<T>> dstages(num_stages_);
    for (int s = 0; s < num_stages_; ++s) {
        dstages[s] = Tensor<T>(proj_[0].in_channels(), cache.sizes[s].first, cache.sizes[s].second);
    }
    switch (cfg_.mode) {
        case EncoderMode::P2:
            dstages[0] = proj_[0].backward(cache.proj[0], dh, true);
            break;
        case EncoderMode::Summed:
            for (int s = 0; s < num_stages_; ++s) {
                Tensor<T> dp = s == 0 ? dh
                                      : ops::bilinear_resize_backward(dh, cache.sizes[s].first, cache.sizes[s].second);
                dstages[s] = proj_[s].backward(cache.proj[s], dp, true);
            }
            break;
        case EncoderMode::SemanticFpn: {
            Tensor<T> d = dh;
            for (int s = 0; s < num_stages_ - 1; ++s) {
                dstages[s] = proj_[s].backward(cache.proj[s], d, true);
                Tensor<T> drefined =
                    ops::bilinear_resize_backward(d, cache.sizes[s + 1].first, cache.sizes[s + 1].second);
                d = step_[s].backward(cache.step[s], std::move(drefined), true);
            }
            const int last = num_stages_ - 1;
            dstages[last] = proj_[last].backward(cache.proj[last], d, true);
            break;
        }
    }
    return dstages;
}

template <typename T>
Tensor<T> instance_logits(std::span<const T> kernels, int n, const Tensor<T>& encoded) {
    using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (n <= 0) return {};
    if (kernels.size() != static_cast<size_t>(n) * encoded.c)
        throw ConfigError("instance_logits: kernel length does not match encoded channels (" +
                          std::to_string(kernels.size() / n) + " vs " + std::to_string(encoded.c) + ")");
    Tensor<T> out(n, encoded.h, encoded.w);
    const Eigen::Index npix = static_cast<Eigen::Index>(encoded.plane_size());
    Eigen::Map<const RowMat> K(kernels.data(), n, encoded.c);
    Eigen::Map<const RowMat> F(encoded.data.data(), encoded.c, npix);
    Eigen::Map<RowMat> Y(out.data.data(), n, npix);
    Y.noalias() = K * F;
    return out;
}

template <typename T>
void instance_logits_backward(std::span<const T> kernels, int n, const Tensor<T>& encoded, const Tensor<T>& dlogits,
                              std::span<T> dkernels, Tensor<T>& dencoded) {
    using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (n <= 0) return;
    const Eigen::Index npix = static_cast<Eigen::Index>(encoded.plane_size());
    Eigen::Map<const RowMat> K(kernels.data(), n, encoded.c);
    Eigen::Map<const RowMat> F(encoded.data.data(), encoded.c, npix);
    Eigen::Map<const RowMat> dY(dlogits.data.data(), n, npix);
    Eigen::Map<RowMat> dK(dkernels.data(), n, encoded.c);
    Eigen::Map<RowMat> dF(dencoded.data.data(), encoded.c, npix);
    dK.noalias() += dY * F.transpose();
    dF.noalias() += K.transpose() * dY;
}

std::vector<Grid<float>> produce_instances(const std::vector<std::vector<float>>& kernels,
                                           const Tensor<float>& encoded) {
    std::vector<Grid<float>> masks;
    if (kernels.empty()) return masks;
    std::vector<float> flat;
    flat.reserve(kernels.size() * encoded.c);
    for (const auto& k : kernels) {
        if (static_cast<int>(k.size()) != encoded.c)
            throw ConfigError("produce_instances: kernel length " + std::to_string(k.size()) +
                              " does not match encoded channels " + std::to_string(encoded.c));
        flat.insert(flat.end(), k.begin(), k.end());
    }
    const int n = static_cast<int>(kernels.size());
    const Tensor<float> logits = instance_logits<float>(flat, n, encoded);
    for (int j = 0; j < n; ++j) {
        Grid<float> m(encoded.h, encoded.w);
        auto plane = logits.plane(j);
        for (size_t i = 0; i < plane.size(); ++i) m.data[i] = ops::sigmoid(plane[i]);
        masks.push_back(std::move(m));
    }
    return masks;
}

template class FeatureEncoder<float>;
template class FeatureEncoder<double>;
template Tensor<float> instance_logits(std::span<const float>, int, const Tensor<float>&);
template Tensor<double> instance_logits(std::span<const double>, int, const Tensor<double>&);
template void instance_logits_backward(std::span<const float>, int, const Tensor<float>&, const Tensor<float>&,
                                       std::span<float>, Tensor<float>&);
template void instance_logits_backward(std::span<const double>, int, const Tensor<double>&, const Tensor<double>&,
                                       std::span<double>, Tensor<double>&);

}  // namespace pfcn
