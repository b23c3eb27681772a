#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pfcn/kernel_generator.hpp"
#include "pfcn/tensor.hpp"

namespace pfcn {

/// Per-pixel segmentation labels at encoded-feature resolution.
enum SegLabel : uint8_t { kSegNegative = 0, kSegPositive = 1, kSegIgnore = 2 };

struct SegmentationTarget {
    Grid<uint8_t> labels;  // SegLabel values
    Kind kind = Kind::Thing;
    int category = 0;
};

inline constexpr double kDiceEps = 1e-4;

struct DiceResult {
    double loss = 0;
    bool skipped = false;  // no non-ignored pixel
};

/// 1 - (2 sum(p y) + eps) / (sum(p^2) + sum(y^2) + eps) over non-ignored pixels.
/// When dp is non-empty, dLoss/dp is accumulated into it scaled by `scale`.
template <typename T>
DiceResult dice_loss(std::span<const T> p, std::span<const uint8_t> labels, std::span<T> dp = {}, double scale = 1.0);

/// Convenience form with separate binary target and ignore mask.
DiceResult dice_loss(std::span<const float> p, const Mask& target, const Mask& ignore);

/// Normalized score weights s_k / sum(s); uniform when every score is zero.
std::vector<double> score_weights(std::span<const double> scores);

/// sum_k w_k * dice_k for one instance.
double weighted_dice(std::span<const double> scores, std::span<const double> dice_values);

struct WeightedInstance {
    std::vector<std::vector<float>> masks;  // k soft masks, all the same size
    std::vector<double> scores;             // k scores
    Grid<uint8_t> target;                   // shared SegLabel grid
};

/// L_seg = sum_j WDice_j / (M + N) over all instances (things and stuff).
double weighted_dice_loss(const std::vector<WeightedInstance>& instances);

/// L = lambda_pos * L_pos + lambda_seg * L_seg.
double total_objective(double l_pos, double l_seg, double lambda_pos = 1.0, double lambda_seg = 3.0);

}  // namespace pfcn
