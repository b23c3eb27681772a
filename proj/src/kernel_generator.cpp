#include "pfcn/kernel_generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pfcn {

template <typename T>
PositionHead<T>::PositionHead(ParamStore<T>& store, int in_channels, const HeadConfig& cfg) : cfg_(cfg) {
    if (cfg.num_things < 1 || cfg.num_stuff < 1) throw ConfigError("position head needs >= 1 thing and stuff class");
    tower_ = ConvBlock<T>(store, "position_head.tower", in_channels, cfg.channels, cfg.depth);
    final_ = ConvLayer<T>(store, "position_head.final", cfg.channels, cfg.num_things + cfg.num_stuff, 3, 1, true);
}

template <typename T>
void PositionHead<T>::init(std::mt19937_64& rng, double thing_prior) {
    tower_.init(rng);
    final_.init(rng, 1.0);
    auto& b = final_.bias()->value;
    const T logit = T(std::log(thing_prior / (1.0 - thing_prior)));
    for (int c = 0; c < cfg_.num_things; ++c) b[c] = logit;
}

template <typename T>
typename PositionHead<T>::Output PositionHead<T>::forward(const Tensor<T>& x, Cache* cache) const {
    Output out;
    out.shared = tower_.forward(x, cache ? &cache->tower : nullptr);
    out.logits = final_.forward(out.shared, cache ? &cache->final : nullptr);
    return out;
}

template <typename T>
Tensor<T> PositionHead<T>::backward(Cache& cache, const Tensor<T>& dlogits) const {
    Tensor<T> dshared = final_.backward(cache.final, dlogits, true);
    return tower_.backward(cache.tower, std::move(dshared), true);
}

template <typename T>
KernelHead<T>::KernelHead(ParamStore<T>& store, int in_channels, const HeadConfig& cfg)
    : cfg_(cfg), in_channels_(in_channels) {
    const int cin = in_channels + (cfg.kernel_coords ? 2 : 0);
    tower_ = ConvBlock<T>(store, "kernel_head.tower", cin, cfg.channels, cfg.depth);
    final_ = ConvLayer<T>(store, "kernel_head.final", cfg.channels, cfg.kernel_dim, 3, 1, true);
}

template <typename T>
void KernelHead<T>::init(std::mt19937_64& rng) {
    tower_.init(rng);
    final_.init(rng, 0.1);
}

template <typename T>
Tensor<T> KernelHead<T>::forward(const Tensor<T>& x, Cache* cache) const {
    const Tensor<T>* input = &x;
    Tensor<T> augmented;
    if (cfg_.kernel_coords) {
        augmented = ops::concat_channels(x, ops::coord_channels<T>(x.h, x.w));
        input = &augmented;
    }
    Tensor<T> h = tower_.forward(*input, cache ? &cache->tower : nullptr);
    return final_.forward(h, cache ? &cache->final : nullptr);
}

template <typename T>
Tensor<T> KernelHead<T>::backward(Cache& cache, const Tensor<T>& dkernels) const {
    Tensor<T> dh = final_.backward(cache.final, dkernels, true);
    Tensor<T> dx = tower_.backward(cache.tower, std::move(dh), true);
    if (cfg_.kernel_coords) return ops::take_channels(dx, 0, in_channels_);
    return dx;
}

template <typename T>
PositionMaps<T> activate_position_logits(const std::vector<Tensor<T>>& logits, int num_things) {
    PositionMaps<T> maps;
    for (const auto& l : logits) {
        Tensor<T> p = ops::sigmoid(l);
        maps.things.push_back(ops::take_channels(p, 0, num_things));
        maps.stuff.push_back(ops::take_channels(p, num_things, p.c - num_things));
    }
    return maps;
}

std::vector<ThingPosition> extract_thing_positions(const PositionMaps<float>& maps, float score_floor) {
    std::vector<ThingPosition> out;
    for (int s = 0; s < static_cast<int>(maps.things.size()); ++s) {
        const auto& heat = maps.things[s];
        const auto pooled = ops::max_pool3x3(heat);
        for (int c = 0; c < heat.c; ++c)
            for (int y = 0; y < heat.h; ++y)
                for (int x = 0; x < heat.w; ++x) {
                    const float v = heat.at(c, y, x);
                    if (v == pooled.at(c, y, x) && v > score_floor) out.push_back({s, c, x, y, v});
                }
    }
    return out;
}

std::vector<StuffPosition> extract_stuff_positions(const PositionMaps<float>& maps) {
    std::vector<StuffPosition> out;
    for (int s = 0; s < static_cast<int>(maps.stuff.size()); ++s) {
        const auto& st = maps.stuff[s];
        for (int y = 0; y < st.h; ++y)
            for (int x = 0; x < st.w; ++x) {
                int best = 0;
                for (int c = 1; c < st.c; ++c)
                    if (st.at(c, y, x) > st.at(best, y, x)) best = c;
                out.push_back({s, best, x, y, st.at(best, y, x)});
            }
    }
    return out;
}

PositionSet extract_positions(const PositionMaps<float>& maps, float score_floor) {
    PositionSet set;
    set.things = extract_thing_positions(maps, score_floor);
    set.stuff = extract_stuff_positions(maps);
    for (const auto& t : set.things) set.thing_categories.insert(t.category);
    for (const auto& s : set.stuff) set.stuff_categories.insert(s.category);
    return set;
}

namespace {

std::vector<float> kernel_at(const Tensor<float>& g, int x, int y) {
    if (x < 0 || x >= g.w || y < 0 || y >= g.h) throw std::logic_error("kernel position out of bounds");
    std::vector<float> v(g.c);
    for (int c = 0; c < g.c; ++c) v[c] = g.at(c, y, x);
    return v;
}

}  // namespace

std::pair<std::vector<KernelCandidate>, std::vector<KernelCandidate>> select_kernels(
    const std::vector<Tensor<float>>& kernel_maps, const PositionSet& positions) {
    std::vector<KernelCandidate> things, stuff;
    things.reserve(positions.things.size());
    stuff.reserve(positions.stuff.size());
    for (const auto& p : positions.things) {
        if (p.stage < 0 || p.stage >= static_cast<int>(kernel_maps.size()))
            throw std::logic_error("thing position refers to a missing stage");
        things.push_back({kernel_at(kernel_maps[p.stage], p.x, p.y), p.score, p.category, Kind::Thing, p.stage, p.x, p.y});
    }
    for (const auto& p : positions.stuff) {
        if (p.stage < 0 || p.stage >= static_cast<int>(kernel_maps.size()))
            throw std::logic_error("stuff position refers to a missing stage");
        stuff.push_back({kernel_at(kernel_maps[p.stage], p.x, p.y), p.score, p.category, Kind::Stuff, p.stage, p.x, p.y});
    }
    return {std::move(things), std::move(stuff)};
}

template <typename T>
std::vector<int> top_k_cells(std::span<const T> plane, const std::vector<int>& region, int k) {
    std::vector<int> cells = region;
    const size_t keep = std::min<size_t>(static_cast<size_t>(std::max(k, 0)), cells.size());
    std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(keep), cells.end(),
                      [&](int a, int b) {
                          if (plane[a] != plane[b]) return plane[a] > plane[b];
                          return a < b;
                      });
    cells.resize(keep);
    return cells;
}

template class PositionHead<float>;
template class PositionHead<double>;
template class KernelHead<float>;
template class KernelHead<double>;
template PositionMaps<float> activate_position_logits(const std::vector<Tensor<float>>&, int);
template PositionMaps<double> activate_position_logits(const std::vector<Tensor<double>>&, int);
template std::vector<int> top_k_cells(std::span<const float>, const std::vector<int>&, int);
template std::vector<int> top_k_cells(std::span<const double>, const std::vector<int>&, int);

}  // namespace pfcn
