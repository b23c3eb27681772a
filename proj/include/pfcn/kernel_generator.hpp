#pragma once

#include <set>
#include <vector>

#include "pfcn/layers.hpp"

namespace pfcn {

struct HeadConfig {
    int channels = 128;  // tower width
    int depth = 3;       // stacked 3x3 convolutions per head
    int num_things = 3;
    int num_stuff = 2;
    int kernel_dim = 64;  // C_e
    bool kernel_coords = true;
};

/// Stage-shared position head: conv tower, then a plain 3x3 projection to
/// N_th + N_st logits (thing channels first).
template <typename T>
class PositionHead {
public:
    struct Output {
        Tensor<T> shared;  // tower output X'
        Tensor<T> logits;  // (N_th + N_st, h, w)
    };
    struct Cache {
        typename ConvBlock<T>::Cache tower;
        ops::ConvCache<T> final;
    };

    PositionHead() = default;
    PositionHead(ParamStore<T>& store, int in_channels, const HeadConfig& cfg);

    void init(std::mt19937_64& rng, double thing_prior);

    Output forward(const Tensor<T>& x, Cache* cache) const;
    Tensor<T> backward(Cache& cache, const Tensor<T>& dlogits) const;

    int num_things() const { return cfg_.num_things; }
    int num_stuff() const { return cfg_.num_stuff; }

private:
    HeadConfig cfg_;
    ConvBlock<T> tower_;
    ConvLayer<T> final_;
};

/// Stage-shared kernel head. Optionally appends two normalized coordinate
/// channels to its input before the tower.
template <typename T>
class KernelHead {
public:
    struct Cache {
        typename ConvBlock<T>::Cache tower;
        ops::ConvCache<T> final;
    };

    KernelHead() = default;
    KernelHead(ParamStore<T>& store, int in_channels, const HeadConfig& cfg);

    void init(std::mt19937_64& rng);

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
    Tensor<T> backward(Cache& cache, const Tensor<T>& dkernels) const;

    int kernel_dim() const { return cfg_.kernel_dim; }

private:
    HeadConfig cfg_;
    int in_channels_ = 0;
    ConvBlock<T> tower_;
    ConvLayer<T> final_;
};

/// Activated position maps per stage.
template <typename T>
struct PositionMaps {
    std::vector<Tensor<T>> things;  // (N_th, h_i, w_i) in [0, 1]
    std::vector<Tensor<T>> stuff;   // (N_st, h_i, w_i) in [0, 1]
};

/// Splits per-stage logits into activated thing and stuff maps.
template <typename T>
PositionMaps<T> activate_position_logits(const std::vector<Tensor<T>>& logits, int num_things);

struct ThingPosition {
    int stage = 0;
    int category = 0;  // thing channel index
    int x = 0;
    int y = 0;
    float score = 0;
};

struct StuffPosition {
    int stage = 0;
    int category = 0;  // stuff channel index
    int x = 0;
    int y = 0;
    float score = 0;
};

struct PositionSet {
    std::vector<ThingPosition> things;
    std::vector<StuffPosition> stuff;
    std::set<int> thing_categories;
    std::set<int> stuff_categories;
};

/// Peaks: cells equal to their 3x3 max-pooled value and strictly above score_floor.
std::vector<ThingPosition> extract_thing_positions(const PositionMaps<float>& maps, float score_floor);

/// Every cell, labelled with its arg-max stuff channel (lowest index wins ties).
std::vector<StuffPosition> extract_stuff_positions(const PositionMaps<float>& maps);

PositionSet extract_positions(const PositionMaps<float>& maps, float score_floor);

enum class Kind { Thing, Stuff };

/// A kernel vector picked from a stage's kernel map at one position.
struct KernelCandidate {
    std::vector<float> vec;
    float score = 0;
    int category = 0;
    Kind kind = Kind::Thing;
    int stage = 0;
    int x = 0;
    int y = 0;
};

/// Picks G[:, y, x] at every position. Throws std::logic_error for out-of-range positions.
std::pair<std::vector<KernelCandidate>, std::vector<KernelCandidate>> select_kernels(
    const std::vector<Tensor<float>>& kernel_maps, const PositionSet& positions);

/// The k highest-scoring cells (flat indices y*w+x) of `plane` among `region`,
/// highest first, ties broken by lower index. k is clipped to the region size.
template <typename T>
std::vector<int> top_k_cells(std::span<const T> plane, const std::vector<int>& region, int k);

}  // namespace pfcn
